#pragma once

// Command-line front end. dispatch() is the whole program; tools/latentfit.cpp only forwards
// argv and the standard streams.
//
// Exit codes: 0 success, 1 domain error (bad value, unreadable or malformed data file, failed
// precondition), 2 usage error (unknown flag, missing required flag, bad config file).

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "latentfit/autoencoder.hpp"
#include "latentfit/baselines.hpp"
#include "latentfit/errors.hpp"
#include "latentfit/eval.hpp"
#include "latentfit/io.hpp"
#include "latentfit/signals.hpp"

namespace latentfit::cli {

inline constexpr const char* seed_env = "LATENTFIT_SEED";

/// Usage problems: exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------------------------
// Units

enum class Unit { none, time, frequency };

/// Parses "1.81us", "3MHz", "200e6", "inf". Time suffixes: s ms us ns. Frequency suffixes:
/// Hz kHz MHz GHz (any case). The suffix is folded into the decimal exponent before a single
/// correctly rounded conversion, so "1.81us" and "1.81e-6" give the same double.
inline double parse_quantity(std::string_view text, Unit unit) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    std::size_t split = text.size();
    while (split > 0 && std::isalpha(static_cast<unsigned char>(text[split - 1]))) --split;
    std::string_view number = text.substr(0, split);
    std::string suffix(text.substr(split));
    if (number.empty()) {
        // "inf" / "nan" are all letters.
        number = text;
        suffix.clear();
    }
    int exponent = 0;
    if (!suffix.empty()) {
        std::string lower;
        for (char c : suffix) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        bool ok = false;
        if (unit == Unit::time) {
            static const std::map<std::string, int> table{{"s", 0}, {"ms", -3}, {"us", -6}, {"ns", -9}};
            if (auto it = table.find(lower); it != table.end()) exponent = it->second, ok = true;
        } else if (unit == Unit::frequency) {
            static const std::map<std::string, int> table{{"hz", 0}, {"khz", 3}, {"mhz", 6}, {"ghz", 9}};
            if (auto it = table.find(lower); it != table.end()) exponent = it->second, ok = true;
        }
        if (!ok) throw std::invalid_argument("unknown unit suffix '" + suffix + "' in '" + std::string(text) + "'");
    }
    auto convert = [&](std::string_view s) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw std::invalid_argument("not a number: '" + std::string(text) + "'");
        return v;
    };
    if (exponent == 0) return convert(number);
    if (number.find_first_of("eE") == std::string_view::npos)
        return convert(std::string(number) + "e" + std::to_string(exponent));
    return convert(number) * std::pow(10.0, exponent);
}

inline std::string format_number(double v) { return csv::num(v); }

inline CLI::Validator quantity(Unit unit) {
    return CLI::Validator(
        [unit](std::string& s) -> std::string {
            try {
                s = format_number(parse_quantity(s, unit));
                return {};
            } catch (const std::invalid_argument& e) {
                return e.what();
            }
        },
        unit == Unit::time ? "TIME" : unit == Unit::frequency ? "FREQ" : "NUMBER");
}

// ---------------------------------------------------------------------------------------------
// Configuration files

/// Flag values from a JSON config: key = long flag name without dashes.
struct RunConfig {
    std::map<std::string, std::vector<std::string>> values;
};

inline RunConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("config: top level must be a JSON object");
    RunConfig cfg;
    std::vector<std::string> bad;
    auto scalar = [](const nlohmann::json& v, std::string& out) {
        if (v.is_string()) out = v.get<std::string>();
        else if (v.is_boolean()) out = v.get<bool>() ? "true" : "false";
        else if (v.is_number_unsigned()) out = std::to_string(v.get<std::uint64_t>());
        else if (v.is_number_integer()) out = std::to_string(v.get<std::int64_t>());
        else if (v.is_number_float()) out = format_number(v.get<double>());
        else return false;
        return true;
    };
    for (const auto& [key, value] : j.items()) {
        std::vector<std::string> vals;
        bool ok = true;
        if (value.is_array()) {
            for (const auto& el : value) {
                std::string s;
                ok = ok && scalar(el, s);
                vals.push_back(s);
            }
        } else {
            std::string s;
            ok = scalar(value, s);
            vals.push_back(s);
        }
        if (!ok) bad.push_back(key);
        cfg.values[key] = std::move(vals);
    }
    if (!bad.empty()) {
        std::string msg = "config: unsupported value type for key(s):";
        for (const auto& k : bad) msg += " " + k;
        throw UsageError(msg);
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("config: cannot open '" + path.string() + "'");
    try {
        return parse_config(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("config: malformed JSON in '" + path.string() + "': " + e.what());
    }
}

/// Feeds config values into options of `app` that were not given on the command line.
/// Unknown keys are reported all at once.
inline void apply_config(CLI::App& app, const RunConfig& cfg) {
    std::vector<std::string> unknown;
    for (const auto& [key, vals] : cfg.values) {
        CLI::Option* opt = key == "config" ? nullptr : app.get_option_no_throw("--" + key);
        if (opt == nullptr) {
            unknown.push_back(key);
            continue;
        }
        if (opt->count() > 0) continue;  // the flag wins
        try {
            for (const auto& v : vals) opt->add_result(v);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw UsageError("config: bad value for '" + key + "': " + e.what());
        }
    }
    if (!unknown.empty()) {
        std::string msg = "config: unknown key(s) for '" + app.get_name() + "':";
        for (const auto& k : unknown) msg += " " + k;
        throw UsageError(msg);
    }
}

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv(seed_env); env != nullptr && *env != '\0') {
        std::string_view s(env);
        std::uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw UsageError(std::string(seed_env) + " is not an unsigned integer: '" + env + "'");
        return v;
    }
    return 0;
}

// ---------------------------------------------------------------------------------------------
// Program

namespace columns {

inline std::vector<std::string> model_parameter_names(SignalKind kind) {
    if (kind == SignalKind::exp_decay) return {"amplitude", "tau", "offset"};
    return {"amplitude", "tau", "freq", "phase", "offset"};
}

inline std::vector<double> model_parameters(const SignalParams& p) {
    if (const auto* e = std::get_if<ExpDecayParams>(&p)) return {e->amplitude, e->tau, e->offset};
    const auto& o = std::get<DampedOscParams>(p);
    return {o.amplitude, o.tau, o.freq, o.phase, o.offset};
}

inline std::string unit_of(std::string_view name) {
    if (name == "amplitude" || name == "offset") return "au";
    return csv::unit_of(name);
}

}  // namespace columns

class Program {
public:
    Program(std::ostream& out, std::ostream& err) : out_(out), err_(err) { build(); }

    int run(int argc, const char* const* argv) {
        try {
            app_.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out_ << help_for_parsed();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out_ << app_.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::ParseError& e) {
            err_ << "error: " << e.what() << "\n\n" << help_for_parsed();
            return 2;
        }
        CLI::App* leaf = leaf_subcommand();
        try {
            if (!config_path_.empty()) apply_config(*leaf, load_config(config_path_));
            for (const auto& name : required_[leaf]) {
                if (leaf->get_option("--" + name)->count() == 0)
                    throw UsageError("--" + name + " is required");
            }
            seed_ = resolve_seed(seed_flag_);
        } catch (const UsageError& e) {
            err_ << "error: " << e.what() << "\n\n" << leaf->help();
            return 2;
        }
        try {
            handlers_.at(leaf)();
            return 0;
        } catch (const UsageError& e) {
            err_ << "error: " << e.what() << "\n\n" << leaf->help();
            return 2;
        } catch (const std::exception& e) {
            err_ << "error: " << e.what() << "\n";
            return 1;
        }
    }

private:
    // Option storage. Every subcommand reads only its own fields.
    struct Truth {
        std::optional<double> amplitude, tau, freq, phase, offset;
    };
    struct DistFlags {
        std::optional<double> tau_mean, tau_std, freq_mean, freq_std, phase_mean, phase_std;
    };

    std::ostream& out_;
    std::ostream& err_;
    CLI::App app_{"Autoencoder and least-squares parameter estimation for decaying signals", "latentfit"};
    std::map<CLI::App*, std::function<void()>> handlers_;
    std::map<CLI::App*, std::vector<std::string>> required_;

    std::string config_path_;
    std::optional<std::uint64_t> seed_flag_;
    std::uint64_t seed_ = 0;
    std::size_t threads_ = 0;

    std::string kind_ = "exp";
    std::optional<std::size_t> n_;
    std::optional<double> snr_;
    std::string out_path_, in_path_, model_path_, json_path_, report_path_, histogram_path_;
    std::string convention_ = "amplitude";
    std::size_t samples_ = 1000;
    double rate_ = 200e6;
    double t0_ = 0.0;
    std::optional<double> latent_limit_;
    DistFlags dist_;
    Truth truth_;

    std::size_t datasets_ = 10, reps_ = 10, batch_ = 16, log_every_ = 1;
    std::vector<std::size_t> epochs_{100, 1000, 100};
    double lr_ = 0.1, lr_decay_ = 1.0, input_gain_ = 0.01, validation_fraction_ = 0.1;
    bool stage1_only_ = false;

    double crlb_snr_ = 0, fbw_ = 0, tm_ = 0, crlb_tau_ = 0;

    bool json_ = false, no_ls_ = false, f32_ = false, no_control_ = false, weights_ = false;
    std::vector<std::string> snrs_, detunings_, widths_;
    std::string feature_ = "lorentzian";
    double tau_drop_ = 0.3, width_ = 1.0;
    std::optional<double> freq_shift_;
    std::size_t bench_batch_ = 1000, bench_reps_ = 5, bench_threads_ = 1;

    // --- construction -------------------------------------------------------------------------

    CLI::App* sub(CLI::App& parent, const std::string& name, const std::string& desc, std::function<void()> fn) {
        CLI::App* s = parent.add_subcommand(name, desc);
        s->add_option("--config", config_path_, "JSON file with flag values (keys = flag names)");
        handlers_[s] = std::move(fn);
        return s;
    }

    void seed_opt(CLI::App* s) {
        s->add_option("--seed", seed_flag_, std::string("RNG seed (falls back to $") + seed_env + ", then 0)");
    }
    void threads_opt(CLI::App* s) {
        s->add_option("--threads", threads_, "worker threads (0 = logical cores)")->capture_default_str();
    }
    void require(CLI::App* s, std::initializer_list<const char*> names) {
        for (const char* n : names) required_[s].emplace_back(n);
    }
    void grid_opts(CLI::App* s) {
        s->add_option("--samples", samples_, "samples per signal")->capture_default_str();
        s->add_option("--rate", rate_, "sample rate (Hz; kHz/MHz/GHz suffixes)")
            ->transform(quantity(Unit::frequency))->capture_default_str();
        s->add_option("--t0", t0_, "time of the first sample (s; ms/us/ns suffixes)")
            ->transform(quantity(Unit::time))->capture_default_str();
    }
    void dist_opts(CLI::App* s) {
        s->add_option("--tau-mean", dist_.tau_mean, "mean of the tau distribution")->transform(quantity(Unit::time));
        s->add_option("--tau-std", dist_.tau_std, "spread of the tau distribution")->transform(quantity(Unit::time));
        s->add_option("--freq-mean", dist_.freq_mean, "mean of the frequency distribution")
            ->transform(quantity(Unit::frequency));
        s->add_option("--freq-std", dist_.freq_std, "spread of the frequency distribution")
            ->transform(quantity(Unit::frequency));
        s->add_option("--phase-mean", dist_.phase_mean, "mean of the phase distribution (rad)")
            ->transform(quantity(Unit::none));
        s->add_option("--phase-std", dist_.phase_std, "spread of the phase distribution (rad)")
            ->transform(quantity(Unit::none));
    }
    void truth_opts(CLI::App* s) {
        s->add_option("--amplitude", truth_.amplitude, "true amplitude (default 1)")->transform(quantity(Unit::none));
        s->add_option("--tau", truth_.tau, "true decay time (default 1.81us exp, latent mean osc)")
            ->transform(quantity(Unit::time));
        s->add_option("--freq", truth_.freq, "true frequency (default latent mean)")
            ->transform(quantity(Unit::frequency));
        s->add_option("--phase", truth_.phase, "true phase in rad (default latent mean)")
            ->transform(quantity(Unit::none));
        s->add_option("--offset", truth_.offset, "true offset (default 0)")->transform(quantity(Unit::none));
    }
    void convention_opt(CLI::App* s) {
        s->add_option("--noise-convention", convention_, "noise sigma from SNR: amplitude (A0/SNR) or variance")
            ->check(CLI::IsMember({"amplitude", "variance"}))
            ->capture_default_str();
    }
    void output_opts(CLI::App* s) {
        s->add_option("--out", out_path_, "output CSV (default stdout)");
        s->add_flag("--json", json_, "emit JSON instead of CSV");
    }

    void build() {
        app_.require_subcommand(1);
        app_.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        app_.get_formatter()->column_width(34);

        auto* gen = sub(app_, "generate", "write a dataset of noisy signals", [this] { cmd_generate(); });
        gen->add_option("--kind", kind_, "exp | osc")->capture_default_str();
        gen->add_option("--n", n_, "number of signals (default 200 exp, 1000 osc)");
        gen->add_option("--snr", snr_, "signal-to-noise ratio (default 2^20, inf = noise-free)")
            ->transform(quantity(Unit::none));
        gen->add_option("--out", out_path_, "dataset file");
        gen->add_option("--json", json_path_, "also write a JSON export here");
        gen->add_option("--latent-limit", latent_limit_, "redraw parameters whose latent value exceeds this");
        seed_opt(gen);
        convention_opt(gen);
        grid_opts(gen);
        dist_opts(gen);
        require(gen, {"out"});

        auto* train = sub(app_, "train", "train an autoencoder with the three-stage protocol", [this] { cmd_train(); });
        train->add_option("--kind", kind_, "exp | osc")->capture_default_str();
        train->add_option("--out", out_path_, "model file");
        train->add_option("--datasets", datasets_, "number of freshly generated training sets")->capture_default_str();
        train->add_option("--reps", reps_, "repetitions of the three stages per training set")->capture_default_str();
        train->add_option("--epochs", epochs_, "epochs of stages 1,2,3")->delimiter(',')->expected(3)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
            ->capture_default_str();
        train->add_option("--lr", lr_, "SGD learning rate")->capture_default_str();
        train->add_option("--lr-decay", lr_decay_, "learning rate factor per training set, in (0, 1]")
            ->capture_default_str();
        train->add_option("--batch", batch_, "mini-batch size")->capture_default_str();
        train->add_option("--input-gain", input_gain_, "init range scale of the input layer")->capture_default_str();
        train->add_option("--n", n_, "signals per training set (default 200 exp, 1000 osc)");
        train->add_option("--snr", snr_, "training SNR (default 2^20)")->transform(quantity(Unit::none));
        train->add_option("--latent-limit", latent_limit_, "redraw parameters beyond this latent value (default 0.995)");
        train->add_option("--validation-fraction", validation_fraction_, "held-out share of each training set")
            ->capture_default_str();
        train->add_flag("--stage1-only", stage1_only_, "control run: stage 1 only, for the summed epochs");
        train->add_option("--report", report_path_, "write the loss curves as JSON here");
        train->add_option("--log-every", log_every_, "progress line every N epochs (0 = silent)")->capture_default_str();
        seed_opt(train);
        convention_opt(train);
        grid_opts(train);
        dist_opts(train);
        require(train, {"out"});

        auto* enc = sub(app_, "encode", "estimate parameters with a trained autoencoder", [this] { cmd_encode(); });
        enc->add_option("--model", model_path_, "model file");
        enc->add_option("--in", in_path_, "dataset file");
        enc->add_option("--out", out_path_, "estimates CSV");
        require(enc, {"model", "in", "out"});

        auto* rec = sub(app_, "reconstruct", "run signals through the whole autoencoder", [this] { cmd_reconstruct(); });
        rec->add_option("--model", model_path_, "model file");
        rec->add_option("--in", in_path_, "dataset file");
        rec->add_option("--out", out_path_, "dataset file with reconstructed samples");
        require(rec, {"model", "in", "out"});

        auto* fit = sub(app_, "fit", "least-squares fit of every signal in a dataset", [this] { cmd_fit(); });
        fit->add_option("--model-fn", kind_, "exp | osc");
        fit->add_option("--in", in_path_, "dataset file");
        fit->add_option("--out", out_path_, "fits CSV");
        threads_opt(fit);
        require(fit, {"model-fn", "in", "out"});

        auto* crlb = sub(app_, "crlb", "Cramer-Rao bound for a damped oscillation", [this] { cmd_crlb(); });
        crlb->add_option("--snr", crlb_snr_, "SNR entering the bound")->transform(quantity(Unit::none));
        crlb->add_option("--fbw", fbw_, "bandwidth")->transform(quantity(Unit::frequency));
        crlb->add_option("--tm", tm_, "measurement window")->transform(quantity(Unit::time));
        crlb->add_option("--tau", crlb_tau_, "decay time")->transform(quantity(Unit::time));
        crlb->add_option("--out", out_path_, "output CSV (default stdout)");
        require(crlb, {"snr", "fbw", "tm", "tau"});

        auto* eval = app_.add_subcommand("eval", "evaluation protocols");
        eval->require_subcommand(1);

        auto* hist = sub(*eval, "hist", "estimate distributions at one operating point", [this] { cmd_hist(); });
        hist->add_option("--model", model_path_, "model file");
        hist->add_option("--snr", snr_, "SNR (default 32)")->transform(quantity(Unit::none));
        hist->add_option("--n", n_, "noisy draws (default 500)");
        hist->add_option("--histogram", histogram_path_, "also write the tau histogram CSV here");
        hist->add_flag("--no-ls", no_ls_, "skip the least-squares reference");
        truth_opts(hist);
        seed_opt(hist);
        threads_opt(hist);
        convention_opt(hist);
        output_opts(hist);
        require(hist, {"model"});

        auto* sweep = sub(*eval, "sweep", "precision against the CRLB over an SNR grid", [this] { cmd_sweep(); });
        sweep->add_option("--model", model_path_, "model file");
        sweep->add_option("--snrs", snrs_, "comma-separated SNR values (default odd powers 2^1..2^19)")
            ->delimiter(',')
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
        sweep->add_option("--n", n_, "draws per SNR (default 100)");
        sweep->add_flag("--no-ls", no_ls_, "skip the least-squares reference");
        truth_opts(sweep);
        seed_opt(sweep);
        threads_opt(sweep);
        convention_opt(sweep);
        output_opts(sweep);
        require(sweep, {"model"});

        auto* scan = sub(*eval, "scan", "track a spectral feature across a detuning axis", [this] { cmd_scan(); });
        scan->add_option("--model", model_path_, "model file");
        scan->add_option("--feature", feature_, "lorentzian | cotton")->capture_default_str();
        scan->add_option("--tau-drop", tau_drop_, "fractional tau drop at line center")->capture_default_str();
        scan->add_option("--width", width_, "line half width (detuning units)")->capture_default_str();
        scan->add_option("--freq-shift", freq_shift_, "dispersive frequency amplitude (cotton; default 50kHz)")
            ->transform(quantity(Unit::frequency));
        scan->add_option("--snr", snr_, "SNR (default 32)")->transform(quantity(Unit::none));
        scan->add_option("--n", n_, "draws per detuning (default 100)");
        scan->add_option("--detunings", detunings_, "comma-separated detuning axis (default 41 points on +-5 width)")
            ->delimiter(',')
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
        scan->add_flag("--no-ls", no_ls_, "skip the least-squares reference");
        truth_opts(scan);
        seed_opt(scan);
        threads_opt(scan);
        convention_opt(scan);
        output_opts(scan);
        require(scan, {"model"});

        auto* bench = sub(*eval, "bench", "encoder latency against FLOPs", [this] { cmd_bench(); });
        bench->add_option("--model", model_path_, "time this model's encoder");
        bench->add_option("--widths", widths_, "encoder widths such as 1000-50-1 (repeatable)")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
        bench->add_option("--batch", bench_batch_, "signals per repetition (>= 1000)")->capture_default_str();
        bench->add_option("--reps", bench_reps_, "repetitions")->capture_default_str();
        bench->add_flag("--f32", f32_, "single-precision inference path");
        bench->add_flag("--no-control", no_control_, "skip the no-op network control row");
        bench->add_option("--threads", bench_threads_, "threads > 1 adds a multi-threaded throughput column")
            ->capture_default_str();
        seed_opt(bench);
        output_opts(bench);

        auto* model = app_.add_subcommand("model", "model files");
        model->require_subcommand(1);
        auto* inspect = sub(*model, "inspect", "print a model summary as JSON", [this] { cmd_inspect(); });
        inspect->add_option("--model", model_path_, "model file");
        inspect->add_flag("--weights", weights_, "include all weights and biases");
        inspect->add_option("--out", out_path_, "output file (default stdout)");
        require(inspect, {"model"});
    }

    CLI::App* leaf_subcommand() {
        CLI::App* cur = &app_;
        while (true) {
            auto subs = cur->get_subcommands();
            if (subs.empty()) return cur;
            cur = subs.front();
        }
    }

    std::string help_for_parsed() {
        CLI::App* leaf = leaf_subcommand();
        return leaf->help();
    }

    // --- helpers ------------------------------------------------------------------------------

    SignalKind kind() const { return parse_kind(kind_); }
    NoiseConvention convention() const { return parse_noise_convention(convention_); }

    SamplingGrid grid() const {
        SamplingGrid g{samples_, rate_, t0_};
        g.validate();
        return g;
    }

    ParamDistribution distribution(SignalKind k) const {
        ParamDistribution d = ParamDistribution::defaults(k);
        auto set = [&](const char* name, const std::optional<double>& mean, const std::optional<double>& sd) {
            if (!mean && !sd) return;
            if (k == SignalKind::exp_decay && std::string_view(name) != "tau")
                throw std::invalid_argument(std::string("--") + name + "-mean/--" + name + "-std apply to osc only");
            auto& p = d.at(name);
            if (mean) p.mean = *mean;
            if (sd) p.stddev = *sd;
        };
        set("tau", dist_.tau_mean, dist_.tau_std);
        set("freq", dist_.freq_mean, dist_.freq_std);
        set("phase", dist_.phase_mean, dist_.phase_std);
        d.validate(k);
        return d;
    }

    SignalParams truth_for(const AutoencoderModel& m) const {
        const double a = truth_.amplitude.value_or(1.0);
        const double y0 = truth_.offset.value_or(0.0);
        if (m.kind == SignalKind::exp_decay) {
            if (truth_.freq || truth_.phase) throw std::invalid_argument("--freq/--phase apply to osc models only");
            return ExpDecayParams{a, truth_.tau.value_or(1.81e-6), y0};
        }
        auto mean_of = [&](const char* name) {
            for (const auto& e : m.mapping.entries)
                if (e.name == name) return e.mean;
            throw std::invalid_argument("model mapping lacks " + std::string(name));
        };
        return DampedOscParams{a, truth_.tau.value_or(mean_of("tau")), truth_.freq.value_or(mean_of("freq")),
                               truth_.phase.value_or(mean_of("phase")), y0};
    }

    template <class Fn>
    void write_output(const std::string& path, Fn&& fn, bool binary = false) {
        if (path.empty()) {
            fn(out_);
            return;
        }
        std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
        fn(os);
        if (!os) throw std::runtime_error("failed writing '" + path + "'");
    }

    static std::vector<double> parse_list(const std::vector<std::string>& items, Unit unit) {
        std::vector<double> v;
        for (const auto& s : items) v.push_back(parse_quantity(s, unit));
        return v;
    }

    // --- commands -----------------------------------------------------------------------------

    void cmd_generate() {
        const SignalKind k = kind();
        DatasetSpec spec = DatasetSpec::training_defaults(k);
        spec.n = n_.value_or(spec.n);
        spec.dist = distribution(k);
        spec.grid = grid();
        spec.snr = snr_.value_or(spec.snr);
        spec.seed = seed_;
        spec.convention = convention();
        if (latent_limit_) spec.latent_limit = *latent_limit_;
        detail::require(spec.snr > 0.0, "--snr must be positive");
        detail::require(spec.n >= 1, "--n must be at least 1");
        const Dataset data = make_dataset(spec);
        io::save_dataset(out_path_, data);
        if (!json_path_.empty())
            write_output(json_path_, [&](std::ostream& os) { os << io::dataset_to_json(data).dump() << '\n'; });
    }

    void cmd_train() {
        const SignalKind k = kind();
        TrainingPlan plan = TrainingPlan::defaults(k);
        plan.n_datasets = datasets_;
        plan.reps_per_dataset = reps_;
        if (epochs_.size() != 3) throw UsageError("--epochs needs three values");
        plan.stage_epochs = {epochs_[0], epochs_[1], epochs_[2]};
        plan.train.learning_rate = lr_;
        plan.lr_decay = lr_decay_;
        plan.train.batch_size = batch_;
        plan.train.seed = Rng::splitmix64(seed_ ^ 0x5EED);
        plan.data.n = n_.value_or(plan.data.n);
        plan.data.dist = distribution(k);
        plan.data.grid = grid();
        plan.data.snr = snr_.value_or(plan.data.snr);
        plan.data.seed = seed_;
        plan.data.convention = convention();
        if (latent_limit_) plan.data.latent_limit = *latent_limit_;
        plan.validation_fraction = validation_fraction_;
        plan.stage1_only = stage1_only_;

        BuildOptions bo;
        bo.seed = seed_;
        bo.input_gain = input_gain_;
        bo.grid = plan.data.grid;
        bo.dist = plan.data.dist;
        AutoencoderModel model = latentfit::build(k, bo);
        const std::size_t every = log_every_;
        std::size_t counter = 0;
        const TrainReport report = train_three_stage(model, plan, [&](Stage s, const EpochRecord& r) {
            if (every != 0 && counter++ % every == 0)
                err_ << "progress stage=" << to_string(s) << " dataset=" << r.dataset << " rep=" << r.repetition
                     << " epoch=" << r.epoch << " train_loss=" << format_number(r.train_loss)
                     << " validation_loss=" << format_number(r.validation_loss) << '\n';
        });
        io::save_model(out_path_, model);
        if (!report_path_.empty())
            write_output(report_path_, [&](std::ostream& os) { os << report_to_json(report).dump() << '\n'; });
    }

    static nlohmann::json report_to_json(const TrainReport& r) {
        nlohmann::json j;
        auto series = [](const std::vector<EpochRecord>& v) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& e : v)
                a.push_back({{"dataset", e.dataset},
                             {"repetition", e.repetition},
                             {"epoch", e.epoch},
                             {"train_loss", e.train_loss},
                             {"validation_loss", e.validation_loss}});
            return a;
        };
        j["full"] = series(r.full);
        j["encoder"] = series(r.encoder);
        j["decoder"] = series(r.decoder);
        j["dataset_seeds"] = r.dataset_seeds;
        j["latent_overflow_fraction"] = r.latent_overflow_fraction;
        j["wall_seconds"] = r.wall_seconds;
        return j;
    }

    void cmd_encode() {
        const AutoencoderModel model = io::load_model(model_path_);
        const Dataset data = io::load_dataset(in_path_);
        detail::require(data.spec.kind == model.kind, "dataset kind does not match the model kind");
        detail::require(data.spec.grid == model.grid, "dataset grid does not match the model grid");
        write_output(out_path_, [&](std::ostream& os) {
            csv::write_estimates_header(os, model.kind);
            for (std::size_t i = 0; i < data.size(); ++i) csv::write_estimate(os, i, encode(model, data.items[i].signal));
        });
    }

    void cmd_reconstruct() {
        const AutoencoderModel model = io::load_model(model_path_);
        Dataset data = io::load_dataset(in_path_);
        detail::require(data.spec.grid == model.grid, "dataset grid does not match the model grid");
        for (auto& item : data.items) item.signal = reconstruct(model, item.signal);
        io::save_dataset(out_path_, data);
    }

    void cmd_fit() {
        const SignalKind k = kind();
        const Dataset data = io::load_dataset(in_path_);
        std::vector<std::optional<FitResult>> fits(data.size());
        parallel_for(data.size(), threads_, [&](std::size_t i) {
            try {
                fits[i] = fit_signal(k, data.items[i].signal);
            } catch (const FitDegenerate&) {
            } catch (const EstimateUnavailable&) {
            }
        });
        const auto names = columns::model_parameter_names(k);
        write_output(out_path_, [&](std::ostream& os) {
            os << "signal_index";
            for (const auto& n : names) os << ',' << n << '_' << columns::unit_of(n);
            for (const auto& n : names) os << ",sigma_" << n << '_' << columns::unit_of(n);
            os << ",converged_1\n";
            for (std::size_t i = 0; i < fits.size(); ++i) {
                os << i;
                if (fits[i]) {
                    for (double v : columns::model_parameters(fits[i]->params)) os << ',' << csv::num(v);
                    for (double v : columns::model_parameters(fits[i]->sigma)) os << ',' << csv::num(v);
                    os << ',' << (fits[i]->converged ? 1 : 0) << '\n';
                } else {
                    for (std::size_t c = 0; c < 2 * names.size(); ++c) os << ",nan";
                    os << ",0\n";
                }
            }
        });
    }

    void cmd_crlb() {
        const CrlbInputs in{crlb_snr_, fbw_, tm_, crlb_tau_};
        const double sf = crlb_sigma_f(in);
        write_output(out_path_, [&](std::ostream& os) {
            os << "sigma_f_hz,sigma_tau_s,sigma_tau_numeric_relation\n";
            os << csv::num(sf) << ',' << csv::num(crlb_sigma_tau_seconds(in)) << ',' << csv::num(crlb_sigma_tau(in))
               << '\n';
        });
    }

    void cmd_hist() {
        const AutoencoderModel model = io::load_model(model_path_);
        const SignalParams truth = truth_for(model);
        const double snr = snr_.value_or(32.0);
        const std::size_t n = n_.value_or(500);
        detail::require(n >= 2, "--n must be at least 2");
        detail::require(snr > 0.0, "--snr must be positive");
        const auto signals = latentfit::detail::noisy_signals(truth, model.grid, snr, convention(), n, seed_, threads_);
        struct Row {
            Method method;
            std::string name;
            DistributionSummary summary;
            std::size_t failures;
        };
        std::vector<Row> rows;
        const auto names = free_parameter_names(model.kind);
        auto add = [&](Method m, const std::vector<std::optional<SignalParams>>& results) {
            const auto est = latentfit::detail::collect(results, names);
            for (std::size_t k = 0; k < names.size(); ++k) {
                detail::require(est.per_param[k].size() >= 2, "fewer than 2 successful estimates");
                rows.push_back({m, names[k],
                                estimate_distribution(est.per_param[k], latentfit::detail::free_value(truth, names[k])),
                                est.failures});
            }
        };
        add(Method::autoencoder, latentfit::detail::run_autoencoder(model, signals));
        if (!no_ls_)
            add(Method::least_squares,
                latentfit::detail::run_least_squares(default_fit_fn(model.kind), signals, threads_));
        if (!histogram_path_.empty())
            write_output(histogram_path_, [&](std::ostream& os) {
                csv::write_histogram(os, rows.front().summary.histogram, csv::unit_of(rows.front().name));
            });
        write_output(out_path_, [&](std::ostream& os) {
            if (json_) {
                nlohmann::json j = nlohmann::json::array();
                for (const auto& r : rows) {
                    nlohmann::json o{{"method", to_string(r.method)},
                                     {"parameter", r.name},
                                     {"unit", csv::unit_of(r.name)},
                                     {"n", r.summary.n},
                                     {"failures", r.failures},
                                     {"mean_offset", r.summary.mean},
                                     {"stddev", r.summary.stddev}};
                    if (r.summary.fit)
                        o["fit"] = {{"center", r.summary.fit->center},
                                    {"center_err", r.summary.fit->center_err},
                                    {"fwhm", r.summary.fit->fwhm()},
                                    {"fwhm_err", r.summary.fit->fwhm_err()},
                                    {"center_significance", r.summary.fit->center_significance()}};
                    j.push_back(std::move(o));
                }
                os << j.dump(2) << '\n';
                return;
            }
            os << "method,parameter,unit,n_1,failures_1,mean_offset,stddev,fit_1,center,center_err,fwhm,fwhm_err,"
                  "center_significance_1\n";
            for (const auto& r : rows) {
                const auto& s = r.summary;
                os << to_string(r.method) << ',' << r.name << ',' << csv::unit_of(r.name) << ',' << s.n << ','
                   << r.failures << ',' << csv::num(s.mean) << ',' << csv::num(s.stddev) << ',' << (s.fit ? 1 : 0);
                if (s.fit)
                    os << ',' << csv::num(s.fit->center) << ',' << csv::num(s.fit->center_err) << ','
                       << csv::num(s.fit->fwhm()) << ',' << csv::num(s.fit->fwhm_err()) << ','
                       << csv::num(s.fit->center_significance());
                else
                    os << ",,,,,";
                os << '\n';
            }
        });
    }

    void cmd_sweep() {
        const AutoencoderModel model = io::load_model(model_path_);
        SweepConfig cfg;
        cfg.truth = truth_for(model);
        cfg.snrs = parse_list(snrs_, Unit::none);
        cfg.n_per_point = n_.value_or(100);
        cfg.seed = seed_;
        cfg.convention = convention();
        cfg.threads = threads_;
        cfg.include_least_squares = !no_ls_;
        const auto rows = snr_sweep(model, default_fit_fn(model.kind), cfg);
        write_output(out_path_, [&](std::ostream& os) {
            if (!json_) {
                csv::write_sweep(os, rows);
                return;
            }
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows)
                for (std::size_t k = 0; k < r.names.size(); ++k)
                    j.push_back({{"snr", r.snr},
                                 {"method", to_string(r.method)},
                                 {"parameter", r.names[k]},
                                 {"unit", csv::unit_of(r.names[k])},
                                 {"truth", r.truth[k]},
                                 {"mean", r.mean[k]},
                                 {"sigma", r.sigma[k]},
                                 {"crlb", r.crlb[k]},
                                 {"crlb_known_nuisance", r.crlb_known[k]},
                                 {"n", r.n},
                                 {"failures", r.failures},
                                 {"flagged", r.flagged()}});
            os << j.dump(2) << '\n';
        });
    }

    void cmd_scan() {
        const AutoencoderModel model = io::load_model(model_path_);
        ScanScenario sc;
        sc.type = parse_feature(feature_);
        sc.baseline = truth_for(model);
        sc.detunings = parse_list(detunings_, Unit::none);
        sc.tau_drop = tau_drop_;
        sc.width = width_;
        sc.freq_shift = sc.type == FeatureType::cotton_effect ? freq_shift_.value_or(50e3) : freq_shift_.value_or(0.0);
        sc.snr = snr_.value_or(32.0);
        sc.convention = convention();
        ScanConfig cfg;
        cfg.n_per_point = n_.value_or(100);
        cfg.seed = seed_;
        cfg.threads = threads_;
        cfg.include_least_squares = !no_ls_;
        const auto rows = run_scan(model, default_fit_fn(model.kind), sc, cfg);
        write_output(out_path_, [&](std::ostream& os) {
            if (!json_) {
                csv::write_scan(os, rows);
                return;
            }
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows)
                for (std::size_t k = 0; k < r.names.size(); ++k)
                    j.push_back({{"detuning", r.detuning},
                                 {"method", to_string(r.method)},
                                 {"parameter", r.names[k]},
                                 {"unit", csv::unit_of(r.names[k])},
                                 {"truth", r.truth[k]},
                                 {"mean", r.mean[k]},
                                 {"stddev", r.stddev[k]},
                                 {"n", r.n},
                                 {"failures", r.failures}});
            os << j.dump(2) << '\n';
        });
    }

    static std::vector<std::size_t> parse_widths(const std::string& s) {
        std::vector<std::size_t> w;
        std::stringstream ss(s);
        std::string part;
        while (std::getline(ss, part, '-')) {
            std::size_t v = 0;
            const auto res = std::from_chars(part.data(), part.data() + part.size(), v);
            if (res.ec != std::errc() || res.ptr != part.data() + part.size() || v == 0)
                throw std::invalid_argument("bad width list '" + s + "' (expected e.g. 1000-50-1)");
            w.push_back(v);
        }
        detail::require(w.size() >= 2, "width list needs an input width and at least one layer");
        return w;
    }

    void cmd_bench() {
        BenchOptions opts;
        opts.batch = bench_batch_;
        opts.repetitions = bench_reps_;
        opts.single_precision = f32_;
        opts.seed = seed_;
        std::vector<BenchReport> reports;
        std::vector<double> throughput;
        auto add = [&](BenchReport r, auto&& throughput_fn) {
            reports.push_back(std::move(r));
            throughput.push_back(bench_threads_ > 1 ? throughput_fn() : 0.0);
        };
        if (!model_path_.empty()) {
            const AutoencoderModel model = io::load_model(model_path_);
            add(bench_encoder(model, opts), [&] { return bench_throughput(model, opts, bench_threads_); });
        }
        std::vector<std::vector<std::size_t>> sizes;
        for (const auto& w : widths_) sizes.push_back(parse_widths(w));
        if (sizes.empty() && model_path_.empty()) sizes = bench_size_sweep();
        for (const auto& w : sizes)
            add(bench_encoder(w, opts), [&] { return bench_throughput(w, opts, bench_threads_); });
        if (!no_control_) {
            const std::size_t n_in = reports.empty() ? 1000 : reports.front().widths.front();
            const std::vector<std::size_t> noop{n_in};
            add(bench_encoder(noop, opts), [&] { return bench_throughput(noop, opts, bench_threads_); });
        }
        write_output(out_path_, [&](std::ostream& os) {
            if (json_) {
                nlohmann::json j = nlohmann::json::array();
                for (std::size_t i = 0; i < reports.size(); ++i) {
                    const auto& r = reports[i];
                    nlohmann::json o{{"network", r.description},     {"flops", r.flops},
                                     {"median_latency_s", r.median_latency}, {"p95_latency_s", r.p95_latency},
                                     {"rate_hz", r.rate},            {"batch", r.batch},
                                     {"repetitions", r.repetitions}, {"precision", r.single_precision ? "f32" : "f64"}};
                    if (bench_threads_ > 1) {
                        o["threads"] = bench_threads_;
                        o["throughput_hz"] = throughput[i];
                    }
                    j.push_back(std::move(o));
                }
                os << j.dump(2) << '\n';
                return;
            }
            if (bench_threads_ <= 1) {
                csv::write_bench(os, reports);
                return;
            }
            std::ostringstream tmp;
            csv::write_bench(tmp, reports);
            std::istringstream lines(tmp.str());
            std::string line;
            std::size_t i = 0;
            while (std::getline(lines, line)) {
                if (i == 0)
                    os << line << ",threads_1,throughput_hz\n";
                else
                    os << line << ',' << bench_threads_ << ',' << csv::num(throughput[i - 1]) << '\n';
                ++i;
            }
        });
    }

    void cmd_inspect() {
        const AutoencoderModel model = io::load_model(model_path_);
        nlohmann::json j = io::model_to_json(model);
        if (!weights_) j.erase("network");
        j["latent_dim"] = model.latent_dim();
        j["encoder_flops"] = flop_count(model.network, model.latent_layer_index + 1);
        j["total_flops"] = flop_count(model.network);
        std::size_t n_params = 0;
        for (const auto& l : model.network.layers()) n_params += static_cast<std::size_t>(l.weights.size() + l.biases.size());
        j["parameter_count"] = n_params;
        write_output(out_path_, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }
};

/// Runs one command line. argv[0] is the program name.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Program p(out, err);
    return p.run(argc, argv);
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"latentfit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace latentfit::cli
