#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "latentfit/signals.hpp"

using namespace latentfit;
using Catch::Approx;

namespace {

double noise_std(const SignalParams& p, const SamplingGrid& g, double snr, NoiseConvention conv, int realizations) {
    const Signal clean = generate(p, g);
    double s2 = 0.0;
    std::size_t count = 0;
    for (int r = 0; r < realizations; ++r) {
        const Signal noisy = generate(p, g, NoiseSpec{snr, static_cast<std::uint64_t>(1000 + r), conv});
        for (std::size_t k = 0; k < g.n_samples; ++k) {
            const double d = noisy.samples[k] - clean.samples[k];
            s2 += d * d;
            ++count;
        }
    }
    return std::sqrt(s2 / static_cast<double>(count));
}

// Mean of |X| for X ~ N(mu, zeta^2).
double folded_normal_mean(double mu, double zeta) {
    return mu * std::erf(mu / (zeta * std::numbers::sqrt2)) +
           zeta * std::sqrt(2.0 / std::numbers::pi) * std::exp(-mu * mu / (2.0 * zeta * zeta));
}

}  // namespace

TEST_CASE("sampling grid geometry") {
    SamplingGrid g;
    CHECK(g.n_samples == 1000);
    CHECK(g.duration() == Approx(5e-6).epsilon(1e-15));
    for (std::size_t k = 0; k < g.n_samples; ++k) REQUIRE(g.time(k) == g.t0 + static_cast<double>(k) / g.sample_rate);
    SamplingGrid bad{1, 200e6, 0.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    SamplingGrid bad_rate{1000, 0.0, 0.0};
    CHECK_THROWS_AS(bad_rate.validate(), std::invalid_argument);
}

TEST_CASE("exp decay closed-form samples") {
    const SamplingGrid g;
    const Signal a = gen_exp_decay({1.0, 1.81e-6, 0.0}, g);
    CHECK(a.samples[0] == 1.0);
    const Signal b = gen_exp_decay({1.0, 1e-6, 0.0}, g);
    // t = 1 us is sample 200.
    CHECK(b.samples[200] == Approx(0.3678794).margin(5e-8));
    CHECK(b.samples[200] == Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(a.size() == g.n_samples);
}

TEST_CASE("damped oscillation closed-form samples") {
    const SamplingGrid g;
    const Signal a = gen_damped_osc({1.0, 1.28e-6, 2.972e6, -0.243, 0.0}, g);
    CHECK(a.samples[0] == Approx(0.97063).epsilon(1e-5));
    CHECK(a.samples[0] == Approx(std::cos(-0.243)).epsilon(1e-15));

    SamplingGrid shifted = g;
    shifted.t0 = 1.0 / (2.0 * 3e6);
    const Signal b = gen_damped_osc({1.0, 1e-6, 3e6, 0.0, 0.0}, shifted);
    CHECK(b.samples[0] == Approx(-0.84648).epsilon(1e-5));
    CHECK(b.samples[0] == Approx(-std::exp(-1.0 / 6.0)).epsilon(1e-12));
}

TEST_CASE("generators reject invalid parameters") {
    const SamplingGrid g;
    CHECK_THROWS_AS(gen_exp_decay({1.0, 0.0, 0.0}, g), std::invalid_argument);
    CHECK_THROWS_AS(gen_exp_decay({1.0, -1e-6, 0.0}, g), std::invalid_argument);
    CHECK_THROWS_AS(gen_damped_osc({1.0, 1e-6, 0.0, 0.0, 0.0}, g), std::invalid_argument);
    CHECK_THROWS_AS(gen_damped_osc({1.0, 1e-6, -3e6, 0.0, 0.0}, g), std::invalid_argument);
    CHECK_THROWS_AS(gen_exp_decay({1.0, 1e-6, 0.0}, SamplingGrid{0, 200e6, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(gen_exp_decay({1.0, 1e-6, 0.0}, g, NoiseSpec{-1.0, 0, NoiseConvention::amplitude}),
                    std::invalid_argument);
}

TEST_CASE("same seed gives bit-identical noise") {
    const SamplingGrid g;
    const DampedOscParams p{1.0, 1.28e-6, 2.972e6, -0.243, 0.0};
    const NoiseSpec n{32.0, 77, NoiseConvention::amplitude};
    CHECK(gen_damped_osc(p, g, n).samples == gen_damped_osc(p, g, n).samples);
    CHECK(gen_exp_decay({}, g, n).samples == gen_exp_decay({}, g, n).samples);
    CHECK(gen_damped_osc(p, g, n).samples != gen_damped_osc(p, g, NoiseSpec{32.0, 78, n.convention}).samples);
}

TEST_CASE("noise level under the variance reading of SNR") {
    const SamplingGrid g;
    // 100 signals x 1000 samples = 1e5 noise samples.
    const double s = noise_std(ExpDecayParams{}, g, 32.0, NoiseConvention::variance, 100);
    CHECK(s == Approx(std::pow(2.0, -2.5)).epsilon(0.01));
    CHECK(s == Approx(0.17678).epsilon(0.01));
}

TEST_CASE("noise level under the amplitude reading of SNR") {
    const SamplingGrid g;
    const double s = noise_std(ExpDecayParams{}, g, 32.0, NoiseConvention::amplitude, 100);
    CHECK(s == Approx(1.0 / 32.0).epsilon(0.01));
    // Noise scales with the amplitude.
    const double s3 = noise_std(ExpDecayParams{3.0, 1e-6, 0.0}, g, 32.0, NoiseConvention::amplitude, 100);
    CHECK(s3 == Approx(3.0 / 32.0).epsilon(0.01));
}

TEST_CASE("noise variance calibration across SNR") {
    const SamplingGrid g;
    for (double snr : {1.0, 8.0, 1024.0, 1048576.0}) {
        const double sv = noise_std(ExpDecayParams{}, g, snr, NoiseConvention::variance, 100);
        CHECK(sv * sv == Approx(1.0 / snr).epsilon(0.02));
        const double sa = noise_std(ExpDecayParams{}, g, snr, NoiseConvention::amplitude, 100);
        CHECK(sa * sa == Approx(1.0 / (snr * snr)).epsilon(0.02));
    }
    CHECK(noise_sigma(std::numeric_limits<double>::infinity()) == 0.0);
    CHECK(parse_noise_convention("variance") == NoiseConvention::variance);
    CHECK_THROWS_AS(parse_noise_convention("power"), std::invalid_argument);
}

TEST_CASE("folded tau distribution") {
    const ParamDistribution d = ParamDistribution::defaults(SignalKind::exp_decay);
    Rng rng(2024), raw(2024);
    const int n = 1000000;
    double sum = 0.0;
    int folded = 0;
    for (int i = 0; i < n; ++i) {
        const double tau = std::get<ExpDecayParams>(sample_params(SignalKind::exp_decay, d, rng)).tau;
        const double x = raw.gaussian(1e-6, 0.5e-6);
        REQUIRE(tau > 0.0);
        REQUIRE(tau == std::abs(x));
        folded += x < 0.0;
        sum += tau;
    }
    const double expected = folded_normal_mean(1e-6, 0.5e-6);
    CHECK(expected == Approx(1.0085e-6).epsilon(1e-4));
    CHECK(sum / n == Approx(expected).epsilon(0.002));
    const double phi_minus_2 = 0.5 * std::erfc(2.0 / std::numbers::sqrt2);
    CHECK(static_cast<double>(folded) / n == Approx(phi_minus_2).epsilon(0.10));
}

TEST_CASE("oscillation parameter spreads") {
    const ParamDistribution d = ParamDistribution::defaults(SignalKind::damped_osc);
    Rng rng(5);
    const int n = 1000000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto p = std::get<DampedOscParams>(sample_params(SignalKind::damped_osc, d, rng));
        s += p.freq;
        s2 += p.freq * p.freq;
        REQUIRE(p.tau > 0.0);
    }
    const double mean = s / n;
    CHECK(mean == Approx(3e6).epsilon(1e-4));
    CHECK(std::sqrt(s2 / n - mean * mean) == Approx(0.1e6).epsilon(0.01));
}

TEST_CASE("degenerate phase distribution") {
    ParamDistribution d = ParamDistribution::defaults(SignalKind::damped_osc);
    d.at("phase").stddev = 1e-12;
    Rng rng(6);
    for (int i = 0; i < 10000; ++i) {
        const auto p = std::get<DampedOscParams>(sample_params(SignalKind::damped_osc, d, rng));
        REQUIRE(std::abs(p.phase) < 1e-10);
    }
    d.at("phase").stddev = 0.0;
    CHECK_THROWS_AS(sample_params(SignalKind::damped_osc, d, rng), std::invalid_argument);
}

TEST_CASE("training dataset defaults") {
    const Dataset e = make_dataset(DatasetSpec::training_defaults(SignalKind::exp_decay));
    CHECK(e.size() == 200);
    CHECK(e.spec.snr == std::pow(2.0, 20));
    for (const auto& item : e.items) {
        REQUIRE(item.signal.size() == 1000);
        REQUIRE(kind_of(item.truth) == SignalKind::exp_decay);
    }
    const Dataset o = make_dataset(DatasetSpec::training_defaults(SignalKind::damped_osc));
    CHECK(o.size() == 1000);
    CHECK(o.items.front().signal.grid == SamplingGrid{});
}

TEST_CASE("datasets are a pure function of their spec") {
    DatasetSpec s = DatasetSpec::training_defaults(SignalKind::damped_osc);
    s.n = 50;
    s.seed = 123;
    s.snr = 32.0;
    const Dataset a = make_dataset(s), b = make_dataset(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.items[i].signal.samples == b.items[i].signal.samples);
        REQUIRE(a.items[i].truth == b.items[i].truth);
    }
    // Item i does not depend on n.
    DatasetSpec longer = s;
    longer.n = 80;
    const Dataset c = make_dataset(longer);
    CHECK(c.items[49].signal.samples == a.items[49].signal.samples);
    // A different seed changes the data.
    DatasetSpec other = s;
    other.seed = 124;
    CHECK(make_dataset(other).items[0].truth != a.items[0].truth);

    const Dataset f = make_dataset(SignalKind::exp_decay, 5, ParamDistribution::defaults(SignalKind::exp_decay),
                                   SamplingGrid{}, 1e6, 9);
    CHECK(f.size() == 5);
    CHECK_THROWS_AS(make_dataset(SignalKind::exp_decay, 0, ParamDistribution::defaults(SignalKind::exp_decay),
                                 SamplingGrid{}, 1e6, 9),
                    std::invalid_argument);
}

TEST_CASE("latent limit filters out-of-range draws") {
    DatasetSpec s = DatasetSpec::training_defaults(SignalKind::damped_osc);
    s.n = 3000;
    s.latent_limit = 0.995;
    const Dataset d = make_dataset(s);
    for (const auto& item : d.items) {
        const auto v = free_parameters(item.truth);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto& p = s.dist.params[i];
            REQUIRE(std::abs((v[i] - p.mean) / (3.0 * p.stddev)) <= 0.995);
        }
    }
}

TEST_CASE("parameter vector helpers") {
    CHECK(parse_kind("exp") == SignalKind::exp_decay);
    CHECK(parse_kind("damped-osc") == SignalKind::damped_osc);
    CHECK_THROWS_AS(parse_kind("sine"), std::invalid_argument);
    const SignalParams p = DampedOscParams{1.0, 2e-6, 3.1e6, 0.2, 0.0};
    const auto v = free_parameters(p);
    CHECK(params_from_free(SignalKind::damped_osc, v) == p);
    CHECK(free_parameter_names(SignalKind::damped_osc) == std::vector<std::string>{"tau", "freq", "phase"});
    CHECK_THROWS_AS(params_from_free(SignalKind::exp_decay, v), std::invalid_argument);
}
