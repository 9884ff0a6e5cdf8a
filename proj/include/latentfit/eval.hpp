#pragma once

// Evaluation protocols: estimate histograms, SNR sweeps against the CRLB, spectral scans and
// encoder throughput benchmarks. Monte-Carlo loops draw noise from per-index RNG streams, so
// results do not depend on the thread count.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "latentfit/autoencoder.hpp"
#include "latentfit/baselines.hpp"
#include "latentfit/errors.hpp"
#include "latentfit/nn.hpp"
#include "latentfit/rng.hpp"
#include "latentfit/signals.hpp"

namespace latentfit {

/// Calls fn(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct SampleStats {
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;  // n - 1 normalisation
};

inline SampleStats sample_stats(std::span<const double> v) {
    SampleStats s;
    s.n = v.size();
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

// ---------------------------------------------------------------------------------------------
// Estimate distributions

struct GaussianFit {
    double amplitude = 0.0;  // counts at the peak
    double center = 0.0;
    double sigma = 0.0;
    double amplitude_err = 0.0;
    double center_err = 0.0;
    double sigma_err = 0.0;

    [[nodiscard]] double fwhm() const { return 2.0 * std::sqrt(2.0 * std::numbers::ln2) * sigma; }
    [[nodiscard]] double fwhm_err() const { return 2.0 * std::sqrt(2.0 * std::numbers::ln2) * sigma_err; }
    /// |center| in units of its uncertainty.
    [[nodiscard]] double center_significance() const {
        return center_err > 0.0 ? std::abs(center) / center_err : std::numeric_limits<double>::infinity();
    }
};

struct Histogram {
    double lo = 0.0;
    double bin_width = 0.0;
    std::vector<std::size_t> counts;

    [[nodiscard]] double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * bin_width; }
};

/// Summary of (estimate - reference).
struct DistributionSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;
    Histogram histogram;
    std::optional<GaussianFit> fit;
};

inline constexpr std::size_t min_fit_samples = 50;

/// Freedman-Diaconis bin width 2 IQR n^(-1/3); falls back to a Scott-like width when IQR is 0.
inline Histogram freedman_diaconis_histogram(std::span<const double> v) {
    detail::require(!v.empty(), "histogram of an empty sample");
    std::vector<double> s(v.begin(), v.end());
    std::ranges::sort(s);
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(s.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        return i + 1 < s.size() ? s[i] * (1.0 - frac) + s[i + 1] * frac : s[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    const double span_ = s.back() - s.front();
    Histogram h;
    if (span_ <= 0.0) {
        h.lo = s.front();
        h.bin_width = 0.0;
        h.counts = {s.size()};
        return h;
    }
    const double cube = std::cbrt(static_cast<double>(s.size()));
    double width = 2.0 * iqr / cube;
    if (!(width > 0.0)) width = 3.49 * sample_stats(s).stddev / cube;
    const auto bins = static_cast<std::size_t>(std::clamp(std::ceil(span_ / width), 1.0, 10000.0));
    width = span_ / static_cast<double>(bins);
    h.lo = s.front();
    h.bin_width = width;
    h.counts.assign(bins, 0);
    for (double x : s) {
        auto i = static_cast<std::size_t>((x - h.lo) / width);
        h.counts[std::min(i, bins - 1)] += 1;
    }
    return h;
}

/// Least-squares Gaussian fit to binned counts with Poisson weights 1/max(count, 1).
inline std::optional<GaussianFit> fit_gaussian(const Histogram& h, const SampleStats& stats) {
    if (h.counts.size() < 4 || !(stats.stddev > 0.0)) return std::nullopt;
    const auto m = static_cast<Eigen::Index>(h.counts.size());
    Eigen::VectorXd x(m), y(m), w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        x[i] = (h.center(static_cast<std::size_t>(i)) - stats.mean) / stats.stddev;
        y[i] = static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
        w[i] = 1.0 / std::sqrt(std::max(y[i], 1.0));
    }
    const double peak0 = static_cast<double>(stats.n) * h.bin_width / (std::sqrt(2.0 * std::numbers::pi) * stats.stddev);
    auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
        r.resize(m);
        J.resize(m, 3);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double d = x[i] - p[1];
            const double s2 = p[2] * p[2];
            const double e = std::exp(-0.5 * d * d / s2);
            r[i] = w[i] * (p[0] * e - y[i]);
            J(i, 0) = w[i] * e;
            J(i, 1) = w[i] * p[0] * e * d / s2;
            J(i, 2) = w[i] * p[0] * e * d * d / (s2 * p[2]);
        }
    };
    LmResult res;
    try {
        res = levenberg_marquardt(model, Eigen::Vector3d(peak0, 0.0, 1.0));
    } catch (const FitDegenerate&) {
        return std::nullopt;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(res.jtj);
    if (!lu.isInvertible() || !res.params.allFinite() || res.params[2] == 0.0) return std::nullopt;
    const Eigen::MatrixXd cov = lu.inverse();
    GaussianFit g;
    g.amplitude = res.params[0];
    g.center = stats.mean + res.params[1] * stats.stddev;
    g.sigma = std::abs(res.params[2]) * stats.stddev;
    g.amplitude_err = std::sqrt(std::max(cov(0, 0), 0.0));
    g.center_err = std::sqrt(std::max(cov(1, 1), 0.0)) * stats.stddev;
    g.sigma_err = std::sqrt(std::max(cov(2, 2), 0.0)) * stats.stddev;
    return g;
}

inline DistributionSummary estimate_distribution(std::span<const double> estimates, double reference) {
    detail::require(estimates.size() >= 2, "a distribution summary needs at least 2 estimates");
    std::vector<double> d(estimates.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        detail::require(std::isfinite(estimates[i]), "estimates must be finite");
        d[i] = estimates[i] - reference;
    }
    const SampleStats st = sample_stats(d);
    DistributionSummary out;
    out.n = st.n;
    out.mean = st.mean;
    out.stddev = st.stddev;
    out.histogram = freedman_diaconis_histogram(d);
    if (st.n >= min_fit_samples && st.stddev > 0.0) out.fit = fit_gaussian(out.histogram, st);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Estimators under evaluation

enum class Method : std::uint8_t { autoencoder = 0, least_squares = 1 };

inline std::string_view to_string(Method m) { return m == Method::autoencoder ? "autoencoder" : "least-squares"; }

/// Least-squares estimator; the default is fit_signal for the model's kind.
using FitFn = std::function<FitResult(const Signal&)>;

inline FitFn default_fit_fn(SignalKind kind) {
    return [kind](const Signal& s) { return fit_signal(kind, s); };
}

/// Names of the free parameters that carry a CRLB: {tau} or {tau, freq}.
inline std::vector<std::string> bounded_parameter_names(SignalKind kind) {
    if (kind == SignalKind::exp_decay) return {"tau"};
    return {"tau", "freq"};
}

namespace detail {

inline double free_value(const SignalParams& p, std::string_view name) {
    const auto names = free_parameter_names(kind_of(p));
    const auto values = free_parameters(p);
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[i];
    throw std::invalid_argument("no parameter named " + std::string(name));
}

/// Estimates of the parameters `names` for every signal. Failed fits give nullopt.
struct MethodEstimates {
    std::vector<std::vector<double>> per_param;  // [param][success index]
    std::size_t failures = 0;
};

inline std::vector<std::optional<SignalParams>> run_least_squares(const FitFn& fit_fn,
                                                                  std::span<const Signal> signals,
                                                                  std::size_t threads) {
    std::vector<std::optional<SignalParams>> out(signals.size());
    parallel_for(signals.size(), threads, [&](std::size_t i) {
        try {
            FitResult r = fit_fn(signals[i]);
            const auto v = free_parameters(r.params);
            const bool finite = std::ranges::all_of(v, [](double x) { return std::isfinite(x); });
            if (r.converged && finite) out[i] = r.params;
        } catch (const FitDegenerate&) {
        } catch (const EstimateUnavailable&) {
        }
    });
    return out;
}

inline MethodEstimates collect(const std::vector<std::optional<SignalParams>>& results,
                               const std::vector<std::string>& names) {
    MethodEstimates m;
    m.per_param.resize(names.size());
    for (const auto& r : results) {
        if (!r) {
            ++m.failures;
            continue;
        }
        for (std::size_t k = 0; k < names.size(); ++k) m.per_param[k].push_back(free_value(*r, names[k]));
    }
    return m;
}

inline std::vector<std::optional<SignalParams>> run_autoencoder(const AutoencoderModel& model,
                                                                std::span<const Signal> signals) {
    const auto est = encode_batch(model, signals);
    std::vector<std::optional<SignalParams>> out;
    out.reserve(est.size());
    for (const auto& e : est) {
        const auto v = free_parameters(e);
        if (std::ranges::all_of(v, [](double x) { return std::isfinite(x); }))
            out.emplace_back(e);
        else
            out.emplace_back();
    }
    return out;
}

inline std::vector<Signal> noisy_signals(const SignalParams& truth, const SamplingGrid& grid, double snr,
                                         NoiseConvention convention, std::size_t n, std::uint64_t seed,
                                         std::size_t threads) {
    std::vector<Signal> out(n);
    parallel_for(n, threads, [&](std::size_t i) {
        Rng rng = Rng::stream(seed, i);
        out[i] = generate(truth, grid, snr, convention, rng);
    });
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// SNR sweep

struct SweepRow {
    double snr = 0.0;
    Method method = Method::autoencoder;
    std::vector<std::string> names;  // parameters with a bound, see bounded_parameter_names
    std::vector<double> truth;
    std::vector<double> mean;
    std::vector<double> sigma;  // empirical standard deviation
    std::vector<double> crlb;        // amplitude and offset estimated
    std::vector<double> crlb_known;  // amplitude and offset known
    std::size_t n = 0;
    std::size_t failures = 0;

    /// More than 10% of the estimates failed.
    [[nodiscard]] bool flagged() const { return n > 0 && 10 * failures > n; }
};

struct SweepConfig {
    SignalParams truth = ExpDecayParams{1.0, 1.81e-6, 0.0};
    std::vector<double> snrs;  // empty: odd powers 2^1 .. 2^19
    std::size_t n_per_point = 100;
    std::uint64_t seed = 0;
    NoiseConvention convention = NoiseConvention::amplitude;
    std::size_t threads = 0;
    bool include_least_squares = true;

    static std::vector<double> default_snrs() {
        std::vector<double> v;
        for (int e = 1; e <= 19; e += 2) v.push_back(std::ldexp(1.0, e));
        return v;
    }
};

namespace detail {

inline SweepRow make_row(double snr, Method method, const SignalParams& truth, const SamplingGrid& grid,
                         NoiseConvention convention, const std::vector<std::optional<SignalParams>>& results) {
    SweepRow row;
    row.snr = snr;
    row.method = method;
    row.names = bounded_parameter_names(kind_of(truth));
    const MethodEstimates est = collect(results, row.names);
    row.n = results.size();
    row.failures = est.failures;
    const CrlbValues bound = crlb_for(truth, grid, snr, convention);
    for (std::size_t k = 0; k < row.names.size(); ++k) {
        const SampleStats st = sample_stats(est.per_param[k]);
        row.truth.push_back(free_value(truth, row.names[k]));
        row.mean.push_back(st.n > 0 ? st.mean : std::numeric_limits<double>::quiet_NaN());
        row.sigma.push_back(st.stddev);
        const bool tau = row.names[k] == "tau";
        row.crlb.push_back(tau ? bound.tau : bound.freq.value());
        row.crlb_known.push_back(tau ? bound.tau_known : bound.freq_known.value());
    }
    return row;
}

}  // namespace detail

/// For each SNR, n_per_point signals at fixed truth are estimated by the autoencoder and the
/// least-squares fit. Rows come in SNR order, autoencoder first. The model is not modified.
inline std::vector<SweepRow> snr_sweep(const AutoencoderModel& model, const FitFn& fit_fn, const SweepConfig& cfg) {
    if (!model.trained) throw InvalidState("autoencoder has not been trained");
    detail::require(kind_of(cfg.truth) == model.kind, "sweep truth does not match the model kind");
    detail::require(cfg.n_per_point >= 2, "n_per_point must be at least 2");
    const std::vector<double> snrs = cfg.snrs.empty() ? SweepConfig::default_snrs() : cfg.snrs;
    for (double s : snrs) detail::require(std::isfinite(s) && s > 0.0, "sweep SNR values must be positive and finite");

    std::vector<SweepRow> rows;
    for (std::size_t p = 0; p < snrs.size(); ++p) {
        const auto signals = detail::noisy_signals(cfg.truth, model.grid, snrs[p], cfg.convention, cfg.n_per_point,
                                                   Rng::splitmix64(cfg.seed + p), cfg.threads);
        rows.push_back(detail::make_row(snrs[p], Method::autoencoder, cfg.truth, model.grid, cfg.convention,
                                        detail::run_autoencoder(model, signals)));
        if (cfg.include_least_squares)
            rows.push_back(detail::make_row(snrs[p], Method::least_squares, cfg.truth, model.grid, cfg.convention,
                                            detail::run_least_squares(fit_fn, signals, cfg.threads)));
    }
    return rows;
}

// ---------------------------------------------------------------------------------------------
// Spectral scans

enum class FeatureType : std::uint8_t { lorentzian_absorption = 0, cotton_effect = 1 };

inline std::string_view to_string(FeatureType f) {
    return f == FeatureType::lorentzian_absorption ? "lorentzian-absorption" : "cotton-effect";
}

inline FeatureType parse_feature(std::string_view s) {
    if (s == "lorentzian-absorption" || s == "lorentzian") return FeatureType::lorentzian_absorption;
    if (s == "cotton-effect" || s == "cotton") return FeatureType::cotton_effect;
    throw std::invalid_argument("unknown scan feature '" + std::string(s) + "'");
}

/// A spectral line crossed by a detuning axis (arbitrary units):
///   1/tau(d) = 1/tau0 + a w^2 / (d^2 + w^2),  a chosen so that tau(0) = (1 - tau_drop) tau0
///   f(d)     = f0 + b d w / (d^2 + w^2)       (cotton-effect only; b = freq_shift)
struct ScanScenario {
    FeatureType type = FeatureType::lorentzian_absorption;
    std::vector<double> detunings;  // empty: 41 points on [-5 w, 5 w]
    SignalParams baseline = ExpDecayParams{1.0, 1.81e-6, 0.0};
    double tau_drop = 0.3;
    double width = 1.0;
    double freq_shift = 0.0;  // Hz
    double snr = 32.0;
    NoiseConvention convention = NoiseConvention::amplitude;

    void validate() const {
        detail::require(width > 0.0 && std::isfinite(width), "scan width must be positive");
        detail::require(tau_drop >= 0.0 && tau_drop < 1.0, "tau_drop must lie in [0, 1)");
        detail::require(std::isfinite(freq_shift), "freq_shift must be finite");
        detail::require(snr > 0.0, "scan SNR must be positive");
        if (type == FeatureType::cotton_effect)
            detail::require(kind_of(baseline) == SignalKind::damped_osc, "the cotton-effect scan needs a damped oscillation");
        else
            detail::require(freq_shift == 0.0, "freq_shift applies to the cotton-effect scan only");
        std::visit([](const auto& p) { detail::validate(p); }, baseline);
    }

    [[nodiscard]] std::vector<double> axis() const {
        if (!detunings.empty()) return detunings;
        std::vector<double> d(41);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = width * (-5.0 + 0.25 * static_cast<double>(i));
        return d;
    }

    /// Absorption coefficient a of the decay-rate line.
    [[nodiscard]] double rate_amplitude() const {
        const double tau0 = detail::free_value(baseline, "tau");
        return 1.0 / ((1.0 - tau_drop) * tau0) - 1.0 / tau0;
    }

    [[nodiscard]] SignalParams params_at(double d) const {
        const double lor = width * width / (d * d + width * width);
        const double disp = d * width / (d * d + width * width);
        SignalParams p = baseline;
        std::visit(
            [&](auto& q) {
                q.tau = 1.0 / (1.0 / q.tau + rate_amplitude() * lor);
                if constexpr (std::is_same_v<std::decay_t<decltype(q)>, DampedOscParams>) {
                    if (type == FeatureType::cotton_effect) q.freq += freq_shift * disp;
                }
            },
            p);
        return p;
    }
};

struct ScanRow {
    double detuning = 0.0;
    Method method = Method::autoencoder;
    std::vector<std::string> names;  // free parameters of the kind
    std::vector<double> truth;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::size_t n = 0;
    std::size_t failures = 0;
};

struct ScanConfig {
    std::size_t n_per_point = 100;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool include_least_squares = true;
};

namespace detail {

inline ScanRow make_scan_row(double d, Method method, const SignalParams& truth,
                             const std::vector<std::optional<SignalParams>>& results) {
    ScanRow row;
    row.detuning = d;
    row.method = method;
    row.names = free_parameter_names(kind_of(truth));
    const MethodEstimates est = collect(results, row.names);
    row.n = results.size();
    row.failures = est.failures;
    for (std::size_t k = 0; k < row.names.size(); ++k) {
        const SampleStats st = sample_stats(est.per_param[k]);
        row.truth.push_back(free_value(truth, row.names[k]));
        row.mean.push_back(st.n > 0 ? st.mean : std::numeric_limits<double>::quiet_NaN());
        row.stddev.push_back(st.stddev);
    }
    return row;
}

}  // namespace detail

/// Per detuning: n_per_point noisy signals at the scenario's parameters, estimated by both
/// methods, reported as mean and standard deviation. The model is not modified.
inline std::vector<ScanRow> run_scan(const AutoencoderModel& model, const FitFn& fit_fn, const ScanScenario& scenario,
                                     const ScanConfig& cfg = {}) {
    if (!model.trained) throw InvalidState("autoencoder has not been trained");
    scenario.validate();
    detail::require(kind_of(scenario.baseline) == model.kind, "scan baseline does not match the model kind");
    detail::require(cfg.n_per_point >= 2, "n_per_point must be at least 2");
    const auto axis = scenario.axis();
    std::vector<ScanRow> rows;
    for (std::size_t p = 0; p < axis.size(); ++p) {
        const SignalParams truth = scenario.params_at(axis[p]);
        const auto signals = detail::noisy_signals(truth, model.grid, scenario.snr, scenario.convention,
                                                   cfg.n_per_point, Rng::splitmix64(cfg.seed + p), cfg.threads);
        rows.push_back(detail::make_scan_row(axis[p], Method::autoencoder, truth, detail::run_autoencoder(model, signals)));
        if (cfg.include_least_squares)
            rows.push_back(detail::make_scan_row(axis[p], Method::least_squares, truth,
                                                 detail::run_least_squares(fit_fn, signals, cfg.threads)));
    }
    return rows;
}

// ---------------------------------------------------------------------------------------------
// Encoder throughput

struct BenchOptions {
    std::size_t batch = 1000;
    std::size_t repetitions = 5;
    std::size_t warmup = 200;  // untimed encodes before measuring
    bool single_precision = false;
    std::uint64_t seed = 0;
};

struct BenchReport {
    std::string description;  // e.g. "1000-50-1"
    std::vector<std::size_t> widths;
    std::uint64_t flops = 0;
    double median_latency = 0.0;  // s per signal
    double p95_latency = 0.0;
    double rate = 0.0;  // 1 / median_latency, signals per second
    std::size_t batch = 0;
    std::size_t repetitions = 0;
    bool single_precision = false;
};

inline std::string describe_widths(std::span<const std::size_t> widths) {
    std::string s;
    for (std::size_t i = 0; i < widths.size(); ++i) s += (i ? "-" : "") + std::to_string(widths[i]);
    return s;
}

namespace detail {

inline double percentile(std::vector<double> v, double q) {
    std::ranges::sort(v);
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
}

/// Times `encode_one(j)` per signal. Signals are prepared by the caller before timing starts.
template <class Encode>
std::vector<double> time_per_signal(std::size_t batch, std::size_t reps, std::size_t warmup, Encode&& encode_one) {
    using clock = std::chrono::steady_clock;
    for (std::size_t j = 0; j < warmup; ++j) encode_one(j % batch);
    std::vector<double> lat;
    lat.reserve(batch * reps);
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t j = 0; j < batch; ++j) {
            const auto t0 = clock::now();
            encode_one(j);
            const auto t1 = clock::now();
            lat.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
    }
    return lat;
}

template <class T>
BenchReport bench_network(const BasicDenseNetwork<T>& net, LayerRange encoder, const LatentMapping& mapping,
                          const BenchOptions& opts) {
    detail::require(opts.batch >= 1000, "benchmark batch must hold at least 1000 signals");
    detail::require(opts.repetitions >= 1, "benchmark needs at least one repetition");
    const std::size_t n_in = net.input_dim();
    // Signal generation happens before timing.
    Rng rng(opts.seed);
    std::vector<T> inputs(opts.batch * n_in);
    for (auto& v : inputs) v = static_cast<T>(rng.gaussian());
    InferenceWorkspace<T> ws;
    std::vector<double> latent(mapping.size());
    volatile double sink = 0.0;
    auto encode_one = [&](std::size_t j) {
        if (encoder.first == encoder.last) {
            // No-op control: harness and clock overhead only.
            sink = sink + static_cast<double>(inputs[j * n_in]);
            return;
        }
        const auto& lat = infer(net, std::span<const T>(inputs.data() + j * n_in, n_in), encoder, ws);
        if (mapping.size() == static_cast<std::size_t>(lat.size())) {
            for (std::size_t k = 0; k < latent.size(); ++k) latent[k] = static_cast<double>(lat[static_cast<Eigen::Index>(k)]);
            const auto params = from_latent(latent, mapping);
            sink = sink + params.front();
        } else if (lat.size() > 0) {
            sink = sink + static_cast<double>(lat[0]);
        }
    };
    const auto lat = time_per_signal(opts.batch, opts.repetitions, opts.warmup, encode_one);
    std::vector<std::size_t> widths{n_in};
    for (std::size_t i = encoder.first; i < encoder.last; ++i) widths.push_back(net.layer(i).n_out());
    BenchReport rep;
    rep.widths = widths;
    rep.description = describe_widths(widths);
    rep.flops = flop_count(std::span<const std::size_t>(widths));
    rep.median_latency = percentile(lat, 0.5);
    rep.p95_latency = percentile(lat, 0.95);
    rep.rate = 1.0 / rep.median_latency;
    rep.batch = opts.batch;
    rep.repetitions = opts.repetitions;
    rep.single_precision = opts.single_precision;
    return rep;
}

}  // namespace detail

/// Times the encoder of a model (input -> latent -> parameters), one signal at a time.
inline BenchReport bench_encoder(const AutoencoderModel& model, const BenchOptions& opts = {}) {
    model.validate();
    if (opts.single_precision)
        return detail::bench_network(model.network.cast<float>(), model.encoder(), model.mapping, opts);
    return detail::bench_network(model.network, model.encoder(), model.mapping, opts);
}

/// Times a randomly initialised tanh encoder with the given widths, e.g. {1000, 50, 1}.
/// A single width gives the no-op control: no layers, only the harness overhead.
inline BenchReport bench_encoder(std::span<const std::size_t> widths, const BenchOptions& opts = {}) {
    detail::require(!widths.empty() && widths.front() > 0, "benchmark widths must start with the input width");
    const DenseNetwork net = widths.size() == 1 ? DenseNetwork(widths.front())
                                                : make_network(widths, Activation::tanh, opts.seed);
    LatentMapping mapping;
    if (widths.size() > 1)
        for (std::size_t k = 0; k < widths.back(); ++k) mapping.entries.push_back({"z" + std::to_string(k), 0.0, 1.0});
    if (opts.single_precision) return detail::bench_network(net.cast<float>(), net.all(), mapping, opts);
    return detail::bench_network(net, net.all(), mapping, opts);
}

namespace detail {

template <class T>
double throughput_network(const BasicDenseNetwork<T>& net, LayerRange encoder, const BenchOptions& opts,
                          std::size_t threads) {
    detail::require(threads >= 1, "throughput needs at least one thread");
    const std::size_t n_in = net.input_dim();
    Rng rng(opts.seed);
    std::vector<T> inputs(opts.batch * n_in);
    for (auto& v : inputs) v = static_cast<T>(rng.gaussian());
    const std::size_t total = opts.batch * opts.repetitions;
    std::vector<double> sinks(threads, 0.0);
    const auto t0 = std::chrono::steady_clock::now();
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                InferenceWorkspace<T> ws;
                double s = 0.0;
                for (std::size_t i = t; i < total; i += threads) {
                    const std::size_t j = i % opts.batch;
                    const auto& lat = infer(net, std::span<const T>(inputs.data() + j * n_in, n_in), encoder, ws);
                    if (lat.size() > 0) s += static_cast<double>(lat[0]);
                }
                sinks[t] = s;
            });
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    volatile double keep = std::accumulate(sinks.begin(), sinks.end(), 0.0);
    (void)keep;
    return static_cast<double>(total) / wall;
}

}  // namespace detail

/// Signals per second when `threads` workers encode the batch concurrently (wall clock).
inline double bench_throughput(const AutoencoderModel& model, const BenchOptions& opts, std::size_t threads) {
    model.validate();
    if (opts.single_precision) return detail::throughput_network(model.network.cast<float>(), model.encoder(), opts, threads);
    return detail::throughput_network(model.network, model.encoder(), opts, threads);
}

inline double bench_throughput(std::span<const std::size_t> widths, const BenchOptions& opts, std::size_t threads) {
    detail::require(!widths.empty() && widths.front() > 0, "benchmark widths must start with the input width");
    const DenseNetwork net = widths.size() == 1 ? DenseNetwork(widths.front())
                                                : make_network(widths, Activation::tanh, opts.seed);
    if (opts.single_precision) return detail::throughput_network(net.cast<float>(), net.all(), opts, threads);
    return detail::throughput_network(net, net.all(), opts, threads);
}

/// Widths from 1000-10-1 to 1000-500-200-100-3.
inline std::vector<std::vector<std::size_t>> bench_size_sweep() {
    return {{1000, 10, 1},        {1000, 25, 3},         {1000, 50, 10, 3},
            {1000, 100, 10, 3},   {1000, 200, 50, 3},    {1000, 500, 200, 100, 3}};
}

/// Least-squares slope of log(latency) against log(FLOPs).
inline double loglog_slope(std::span<const BenchReport> reports) {
    detail::require(reports.size() >= 2, "slope needs at least two reports");
    std::vector<double> x, y;
    for (const auto& r : reports) {
        x.push_back(std::log(static_cast<double>(r.flops)));
        y.push_back(std::log(r.median_latency));
    }
    const SampleStats sx = sample_stats(x), sy = sample_stats(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - sx.mean) * (y[i] - sy.mean);
        sxx += (x[i] - sx.mean) * (x[i] - sx.mean);
    }
    return sxy / sxx;
}

// ---------------------------------------------------------------------------------------------
// CSV

namespace csv {

/// Shortest round-trip text for a double.
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string unit_of(std::string_view param) {
    if (param == "tau") return "s";
    if (param == "freq") return "Hz";
    if (param == "phase") return "rad";
    return "1";
}

inline void write_distribution(std::ostream& os, const DistributionSummary& s, std::string_view unit) {
    const std::string u(unit);
    os << "n,mean_offset_" << u << ",stddev_" << u << ",fit,center_" << u << ",center_err_" << u << ",fwhm_" << u
       << ",fwhm_err_" << u << ",center_significance_1\n";
    os << s.n << ',' << num(s.mean) << ',' << num(s.stddev) << ',' << (s.fit ? 1 : 0);
    if (s.fit)
        os << ',' << num(s.fit->center) << ',' << num(s.fit->center_err) << ',' << num(s.fit->fwhm()) << ','
           << num(s.fit->fwhm_err()) << ',' << num(s.fit->center_significance());
    else
        os << ",,,,,";
    os << '\n';
}

inline void write_histogram(std::ostream& os, const Histogram& h, std::string_view unit) {
    os << "bin_center_" << unit << ",count_1\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) os << num(h.center(i)) << ',' << h.counts[i] << '\n';
}

inline void write_sweep(std::ostream& os, std::span<const SweepRow> rows) {
    os << "snr_1,method,parameter,unit,truth,mean,sigma,crlb,sigma_over_crlb_1,crlb_known_nuisance,n_1,failures_1,"
          "flagged_1\n";
    for (const auto& r : rows)
        for (std::size_t k = 0; k < r.names.size(); ++k)
            os << num(r.snr) << ',' << to_string(r.method) << ',' << r.names[k] << ',' << unit_of(r.names[k]) << ','
               << num(r.truth[k]) << ',' << num(r.mean[k]) << ',' << num(r.sigma[k]) << ',' << num(r.crlb[k]) << ','
               << num(r.sigma[k] / r.crlb[k]) << ',' << num(r.crlb_known[k]) << ',' << r.n << ',' << r.failures << ',' << (r.flagged() ? 1 : 0)
               << '\n';
}

inline void write_scan(std::ostream& os, std::span<const ScanRow> rows) {
    os << "detuning_au,method,parameter,unit,truth,mean,stddev,n_1,failures_1\n";
    for (const auto& r : rows)
        for (std::size_t k = 0; k < r.names.size(); ++k)
            os << num(r.detuning) << ',' << to_string(r.method) << ',' << r.names[k] << ',' << unit_of(r.names[k])
               << ',' << num(r.truth[k]) << ',' << num(r.mean[k]) << ',' << num(r.stddev[k]) << ',' << r.n << ','
               << r.failures << '\n';
}

inline void write_bench(std::ostream& os, std::span<const BenchReport> reports) {
    os << "network,flops_1,median_latency_s,p95_latency_s,rate_hz,batch_1,repetitions_1,precision\n";
    for (const auto& r : reports)
        os << r.description << ',' << r.flops << ',' << num(r.median_latency) << ',' << num(r.p95_latency) << ','
           << num(r.rate) << ',' << r.batch << ',' << r.repetitions << ',' << (r.single_precision ? "f32" : "f64")
           << '\n';
}

/// signal_index, then one column per free parameter with its SI unit.
inline void write_estimates_header(std::ostream& os, SignalKind kind) {
    os << "signal_index";
    for (const auto& n : free_parameter_names(kind)) os << ',' << n << '_' << unit_of(n);
    os << '\n';
}

inline void write_estimate(std::ostream& os, std::size_t index, const SignalParams& p) {
    os << index;
    for (double v : free_parameters(p)) os << ',' << num(v);
    os << '\n';
}

}  // namespace csv

}  // namespace latentfit
