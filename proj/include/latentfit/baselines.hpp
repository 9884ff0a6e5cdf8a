#pragma once

// Reference estimators: Levenberg-Marquardt fits of the two signal models, a coarse FFT
// peak/width estimator and the Cramer-Rao lower bound.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "latentfit/errors.hpp"
#include "latentfit/signals.hpp"

namespace latentfit {

// ---------------------------------------------------------------------------------------------
// Levenberg-Marquardt

struct LmOptions {
    std::size_t max_iterations = 200;
    double relative_tolerance = 1e-12;  // on the cost decrease of an accepted step
    double initial_lambda = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd jtj;  // Gauss-Newton normal matrix at the solution
    double cost = 0.0;    // sum of squared residuals
    std::size_t iterations = 0;
    bool converged = false;
};

/// Minimises sum(r^2). `model(p, r, J)` fills residuals r (size m) and the Jacobian J (m x n).
/// The damping term is lambda * diag(J^T J) (Marquardt scaling).
template <class Model>
LmResult levenberg_marquardt(Model&& model, Eigen::VectorXd params, const LmOptions& options = {}) {
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    model(params, r, jac);
    double cost = r.squaredNorm();
    if (!std::isfinite(cost)) throw FitDegenerate("initial guess gives a non-finite residual");
    const double tiny = 1e-30 * static_cast<double>(std::max<Eigen::Index>(r.size(), 1));

    LmResult result;
    double lambda = options.initial_lambda;
    Eigen::VectorXd r_try;
    Eigen::MatrixXd jac_try;
    std::size_t it = 0;
    bool converged = cost <= tiny;
    while (!converged && it < options.max_iterations) {
        ++it;
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        const double max_diag = a.diagonal().maxCoeff();
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = a;
            for (Eigen::Index i = 0; i < a.rows(); ++i)
                damped(i, i) += lambda * std::max(a(i, i), 1e-12 * max_diag);
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            const Eigen::VectorXd trial = params + step;
            double trial_cost = std::numeric_limits<double>::infinity();
            if (step.allFinite()) {
                model(trial, r_try, jac_try);
                trial_cost = r_try.squaredNorm();
            }
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                const double rel = (cost - trial_cost) / cost;
                params = trial;
                r.swap(r_try);
                jac.swap(jac_try);
                cost = trial_cost;
                lambda = std::max(lambda / options.lambda_down, 1e-15);
                accepted = true;
                if (rel < options.relative_tolerance || cost <= tiny) converged = true;
            } else {
                lambda *= options.lambda_up;
                // No descent direction left at any damping: the point is stationary.
                if (lambda > 1e16) {
                    converged = true;
                    break;
                }
            }
        }
    }
    result.params = std::move(params);
    result.jtj = jac.transpose() * jac;
    result.cost = cost;
    result.iterations = it;
    result.converged = converged;
    return result;
}

// ---------------------------------------------------------------------------------------------
// Fits

struct FitResult {
    SignalParams params;
    SignalParams sigma;  // 1-sigma uncertainty of each field of `params`
    bool converged = false;
    std::size_t iterations = 0;
    double residual_rms = 0.0;
};

namespace detail {

inline void require_fit_input(const Signal& signal, std::size_t min_samples) {
    signal.validate();
    require(signal.size() >= min_samples, "signal has too few samples for this fit");
    const auto [lo, hi] = std::ranges::minmax(signal.samples);
    const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
    if (hi - lo <= 64.0 * std::numeric_limits<double>::epsilon() * scale)
        throw FitDegenerate("signal is constant; decay model is unidentifiable");
}

/// sqrt(diag((J^T J)^-1) * chi^2 / dof)
inline Eigen::VectorXd scaled_sigmas(const LmResult& fit, std::size_t n_samples) {
    const auto p = static_cast<std::size_t>(fit.params.size());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(fit.jtj);
    if (!lu.isInvertible() || lu.rcond() < 1e-15)
        throw FitDegenerate("normal matrix is singular at the solution");
    const Eigen::MatrixXd cov = lu.inverse();
    const double dof = static_cast<double>(n_samples > p ? n_samples - p : 1);
    Eigen::VectorXd s = (cov.diagonal() * (fit.cost / dof)).cwiseMax(0.0).cwiseSqrt();
    return s;
}

inline double wrap_phase(double phi) {
    phi = std::remainder(phi, 2.0 * std::numbers::pi);
    return phi <= -std::numbers::pi ? phi + 2.0 * std::numbers::pi : phi;
}

/// Log-linear fit of the positive early-time samples (offset assumed zero).
inline ExpDecayParams exp_decay_initial_guess(const Signal& s) {
    const double head = std::max(s.samples[0], (s.samples[0] + s.samples[1] + s.samples[2]) / 3.0);
    ExpDecayParams guess{.amplitude = head > 0 ? head : 1.0, .tau = s.grid.duration() / 3.0, .offset = 0.0};
    if (head <= 0.0) return guess;
    double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double y = s.samples[k];
        if (y <= 0.1 * head) break;
        const double t = s.grid.time(k);
        const double w = y * y;
        const double ly = std::log(y);
        sw += w;
        st += w * t;
        sy += w * ly;
        stt += w * t * t;
        sty += w * t * ly;
        ++used;
    }
    const double det = sw * stt - st * st;
    if (used < 3 || det <= 0.0) return guess;
    const double slope = (sw * sty - st * sy) / det;
    const double intercept = (sy - slope * st) / sw;
    if (slope < 0.0 && std::isfinite(slope)) {
        guess.tau = -1.0 / slope;
        guess.amplitude = std::exp(intercept);
    }
    return guess;
}

}  // namespace detail

/// LM fit of A0 exp(-t/tau) + y0 with all three parameters free.
inline FitResult fit_exp_decay(const Signal& signal, std::optional<ExpDecayParams> initial_guess = {},
                               const LmOptions& options = {}) {
    detail::require_fit_input(signal, 4);
    const ExpDecayParams guess = initial_guess.value_or(detail::exp_decay_initial_guess(signal));
    detail::require(guess.tau > 0.0 && std::isfinite(guess.tau), "initial tau must be positive");

    // Fit in time units of the window length so that all parameters are O(1).
    const double scale = signal.grid.duration();
    const auto m = static_cast<Eigen::Index>(signal.size());
    Eigen::VectorXd u(m), y(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        u[k] = signal.grid.time(static_cast<std::size_t>(k)) / scale;
        y[k] = signal.samples[static_cast<std::size_t>(k)];
    }
    auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        r.resize(m);
        jac.resize(m, 3);
        const double a = p[0], tau = p[1], y0 = p[2];
        for (Eigen::Index k = 0; k < m; ++k) {
            const double e = std::exp(-u[k] / tau);
            r[k] = a * e + y0 - y[k];
            jac(k, 0) = e;
            jac(k, 1) = a * e * u[k] / (tau * tau);
            jac(k, 2) = 1.0;
        }
    };
    Eigen::VectorXd p0(3);
    p0 << guess.amplitude, guess.tau / scale, guess.offset;
    const LmResult fit = levenberg_marquardt(model, p0, options);
    const Eigen::VectorXd s = detail::scaled_sigmas(fit, signal.size());

    FitResult out;
    out.params = ExpDecayParams{.amplitude = fit.params[0], .tau = fit.params[1] * scale, .offset = fit.params[2]};
    out.sigma = ExpDecayParams{.amplitude = s[0], .tau = s[1] * scale, .offset = s[2]};
    out.converged = fit.converged;
    out.iterations = fit.iterations;
    out.residual_rms = std::sqrt(fit.cost / static_cast<double>(m));
    return out;
}

// ---------------------------------------------------------------------------------------------
// FFT estimator

struct CoarseEstimate {
    double freq = 0.0;  // Hz
    double tau = 0.0;   // s
};

/// Peak of the magnitude spectrum (DC excluded) refined by parabolic interpolation; tau from
/// the half-maximum width of the power peak, tau = 1 / (pi * FWHM).
inline CoarseEstimate fft_coarse_estimate(const Signal& signal) {
    signal.validate();
    detail::require(signal.size() >= 16, "fft_coarse_estimate needs at least 16 samples");
    const std::size_t n = signal.size();
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, signal.samples);
    const std::size_t half = n / 2;
    std::vector<double> mag(half + 1);
    for (std::size_t k = 0; k <= half; ++k) mag[k] = std::abs(spectrum[k]);

    std::size_t peak = 1;
    for (std::size_t k = 2; k < half; ++k)
        if (mag[k] > mag[peak]) peak = k;
    if (!(mag[peak] > mag[peak - 1] && mag[peak] >= mag[peak + 1]))
        throw EstimateUnavailable("no spectral peak above the DC floor");

    const double bin = signal.grid.sample_rate / static_cast<double>(n);
    const double ym = mag[peak - 1], y0 = mag[peak], yp = mag[peak + 1];
    const double denom = ym - 2.0 * y0 + yp;
    const double delta = denom != 0.0 ? 0.5 * (ym - yp) / denom : 0.0;
    CoarseEstimate est;
    est.freq = (static_cast<double>(peak) + std::clamp(delta, -0.5, 0.5)) * bin;

    auto power = [&](std::size_t k) { return mag[k] * mag[k]; };
    const double half_max = 0.5 * power(peak);
    std::optional<double> left, right;
    for (std::size_t k = peak; k > 0; --k) {
        if (power(k - 1) < half_max) {
            const double frac = (power(k) - half_max) / (power(k) - power(k - 1));
            left = static_cast<double>(k) - frac;
            break;
        }
    }
    for (std::size_t k = peak; k < half; ++k) {
        if (power(k + 1) < half_max) {
            const double frac = (power(k) - half_max) / (power(k) - power(k + 1));
            right = static_cast<double>(k) + frac;
            break;
        }
    }
    double width_bins = 0.0;
    if (left && right)
        width_bins = *right - *left;
    else if (right)
        width_bins = 2.0 * (*right - static_cast<double>(peak));
    else if (left)
        width_bins = 2.0 * (static_cast<double>(peak) - *left);
    else
        throw EstimateUnavailable("spectral peak has no half-maximum crossing");
    // Peaks narrower than a bin are limited by the window; cap tau at the window scale.
    width_bins = std::max(width_bins, 1.0 / std::numbers::pi);
    est.tau = 1.0 / (std::numbers::pi * width_bins * bin);
    return est;
}

namespace detail {

/// Amplitude, phase and offset by linear least squares for fixed tau and f.
inline std::optional<DampedOscParams> project_oscillation(const Signal& s, double tau, double freq, double* cost) {
    const auto m = static_cast<Eigen::Index>(s.size());
    Eigen::MatrixXd basis(m, 3);
    Eigen::VectorXd y(m);
    const double omega = 2.0 * std::numbers::pi * freq;
    for (Eigen::Index k = 0; k < m; ++k) {
        const double t = s.grid.time(static_cast<std::size_t>(k));
        const double e = std::exp(-t / tau);
        basis(k, 0) = e * std::cos(omega * t);
        basis(k, 1) = e * std::sin(omega * t);
        basis(k, 2) = 1.0;
        y[k] = s.samples[static_cast<std::size_t>(k)];
    }
    const Eigen::VectorXd c = basis.colPivHouseholderQr().solve(y);
    if (!c.allFinite()) return std::nullopt;
    if (cost) *cost = (basis * c - y).squaredNorm();
    // A cos(wt + phi) = A cos(phi) cos(wt) - A sin(phi) sin(wt)
    return DampedOscParams{.amplitude = std::hypot(c[0], c[1]),
                           .tau = tau,
                           .freq = freq,
                           .phase = std::atan2(-c[1], c[0]),
                           .offset = c[2]};
}

inline DampedOscParams damped_osc_initial_guess(const Signal& s) {
    CoarseEstimate coarse;
    try {
        coarse = fft_coarse_estimate(s);
    } catch (const EstimateUnavailable& e) {
        throw FitDegenerate(std::string("no oscillation found: ") + e.what());
    }
    const double window = s.grid.duration();
    const double tau0 = std::clamp(coarse.tau, 0.02 * window, 20.0 * window);
    std::optional<DampedOscParams> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (double factor : {0.5, 0.7, 1.0, 1.4, 2.0}) {
        double cost = 0.0;
        auto cand = project_oscillation(s, tau0 * factor, coarse.freq, &cost);
        if (cand && cost < best_cost) {
            best_cost = cost;
            best = cand;
        }
    }
    if (!best) throw FitDegenerate("could not seed the oscillation fit");
    return *best;
}

}  // namespace detail

/// LM fit of A0 exp(-t/tau) cos(2 pi f t + phi) + y0 with all five parameters free.
/// The result is normalised to A0 >= 0 and phi in (-pi, pi].
inline FitResult fit_damped_osc(const Signal& signal, std::optional<DampedOscParams> initial_guess = {},
                                const LmOptions& options = {}) {
    detail::require_fit_input(signal, 8);
    DampedOscParams guess = initial_guess ? *initial_guess : detail::damped_osc_initial_guess(signal);
    if (!(guess.freq > 0.0)) throw FitDegenerate("oscillation frequency must be positive; phase and amplitude are not separable at f = 0");
    detail::require(guess.tau > 0.0 && std::isfinite(guess.tau), "initial tau must be positive");

    const double scale = signal.grid.duration();
    const auto m = static_cast<Eigen::Index>(signal.size());
    Eigen::VectorXd u(m), y(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        u[k] = signal.grid.time(static_cast<std::size_t>(k)) / scale;
        y[k] = signal.samples[static_cast<std::size_t>(k)];
    }
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        r.resize(m);
        jac.resize(m, 5);
        const double a = p[0], tau = p[1], f = p[2], phi = p[3], y0 = p[4];
        for (Eigen::Index k = 0; k < m; ++k) {
            const double e = std::exp(-u[k] / tau);
            const double arg = two_pi * f * u[k] + phi;
            const double c = std::cos(arg), s = std::sin(arg);
            r[k] = a * e * c + y0 - y[k];
            jac(k, 0) = e * c;
            jac(k, 1) = a * e * c * u[k] / (tau * tau);
            jac(k, 2) = -a * e * s * two_pi * u[k];
            jac(k, 3) = -a * e * s;
            jac(k, 4) = 1.0;
        }
    };
    Eigen::VectorXd p0(5);
    p0 << guess.amplitude, guess.tau / scale, guess.freq * scale, guess.phase, guess.offset;
    const LmResult fit = levenberg_marquardt(model, p0, options);
    if (!(std::abs(fit.params[2]) > 0.0)) throw FitDegenerate("fit collapsed to zero frequency");
    const Eigen::VectorXd s = detail::scaled_sigmas(fit, signal.size());

    double amplitude = fit.params[0];
    double phase = fit.params[3];
    if (amplitude < 0.0) {
        amplitude = -amplitude;
        phase += std::numbers::pi;
    }
    FitResult out;
    out.params = DampedOscParams{.amplitude = amplitude,
                                 .tau = fit.params[1] * scale,
                                 .freq = fit.params[2] / scale,
                                 .phase = detail::wrap_phase(phase),
                                 .offset = fit.params[4]};
    out.sigma = DampedOscParams{
        .amplitude = s[0], .tau = s[1] * scale, .freq = s[2] / scale, .phase = s[3], .offset = s[4]};
    out.converged = fit.converged;
    out.iterations = fit.iterations;
    out.residual_rms = std::sqrt(fit.cost / static_cast<double>(m));
    return out;
}

/// Dispatches on the kind; the signature used wherever a fit is passed around as a callable.
inline FitResult fit_signal(SignalKind kind, const Signal& signal) {
    return kind == SignalKind::exp_decay ? fit_exp_decay(signal) : fit_damped_osc(signal);
}

// ---------------------------------------------------------------------------------------------
// Cramer-Rao lower bound

struct CrlbInputs {
    double snr = 0.0;   // signal-to-noise ratio as entering the bound (see crlb_inputs_for)
    double f_bw = 0.0;  // Hz
    double t_m = 0.0;   // s, measurement window
    double tau = 0.0;   // s

    void validate() const {
        for (double v : {snr, f_bw, t_m, tau})
            detail::require(std::isfinite(v) && v > 0.0, "CRLB inputs must be strictly positive and finite");
    }
};

/// Decay correction factor
///   xi(r) = (exp(2/r) - 1) / (3 r^3 cosh(2/r) - 3 r (r^2 + 2)),
/// evaluated without overflow for small r and without cancellation for large r.
/// xi -> 1 as r -> inf and xi ~ 2 / (3 r^3) as r -> 0.
inline double crlb_xi(double r) {
    detail::require(std::isfinite(r) && r > 0.0, "xi(r) needs r > 0");
    // With u = 1/r the denominator is 6 r ((sinh(u)/u)^2 - 1).
    const double u = 1.0 / r;
    if (u <= 1.0) {
        // (sinh u / u)^2 - 1 = sum_{k>=2} 2^(2k-1) u^(2k-2) / (2k)!
        double term = 8.0 * u * u / 24.0;
        double sum = 0.0;
        for (int k = 2; k < 40 && term > 1e-18 * sum; ++k) {
            sum += term;
            term *= 4.0 * u * u / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        }
        return std::expm1(2.0 * u) / (6.0 * r * sum);
    }
    // Divide numerator and denominator by exp(2u).
    const double q = std::exp(-2.0 * u);
    const double one_minus_q = -std::expm1(-2.0 * u);
    const double denom = 6.0 * r * (one_minus_q * one_minus_q / (4.0 * u * u) - q);
    return one_minus_q / denom;
}

/// sigma_f = sqrt(6 xi(tau/T_m) / ((2 pi)^2 SNR^2 f_BW T_m^3))
inline double crlb_sigma_f(const CrlbInputs& in) {
    in.validate();
    const double two_pi = 2.0 * std::numbers::pi;
    const double var = 6.0 * crlb_xi(in.tau / in.t_m) /
                       (two_pi * two_pi * in.snr * in.snr * in.f_bw * in.t_m * in.t_m * in.t_m);
    return std::sqrt(var);
}

/// Numeric relation sigma_tau^2 = 2 pi sigma_f^2, taken as written. Note that the two sides
/// do not carry the same units; for a bound in seconds use crlb_sigma_tau_seconds.
inline double crlb_sigma_tau(const CrlbInputs& in) {
    return std::sqrt(2.0 * std::numbers::pi) * crlb_sigma_f(in);
}

/// Decay-time bound in seconds. For a damped oscillation the decay rate 1/tau and the angular
/// frequency 2 pi f carry the same Fisher information, so sigma_tau = 2 pi tau^2 sigma_f.
inline double crlb_sigma_tau_seconds(const CrlbInputs& in) {
    return 2.0 * std::numbers::pi * in.tau * in.tau * crlb_sigma_f(in);
}

/// Maps a sampled signal onto the bound's inputs. The SNR entering the bound is the rms of the
/// undamped oscillation over the per-sample noise, A0 / (sqrt(2) sigma); f_BW is the Nyquist
/// bandwidth sample_rate / 2; T_m is the window length. With these conventions the bound
/// agrees with the Fisher information of the sampled model (A0, tau, f, phi free).
inline CrlbInputs crlb_inputs_for(const SamplingGrid& grid, double snr, double tau,
                                  NoiseConvention convention = NoiseConvention::amplitude, double amplitude = 1.0) {
    grid.validate();
    const double sigma = noise_sigma(snr, amplitude, convention);
    detail::require(sigma > 0.0, "the bound needs a finite SNR");
    return {.snr = std::abs(amplitude) / (std::numbers::sqrt2 * sigma),
            .f_bw = grid.sample_rate / 2.0,
            .t_m = grid.duration(),
            .tau = tau};
}

/// Which parameters a bound treats as unknown besides the free ones.
/// `estimated`: amplitude and offset are fitted too (the least-squares setting).
/// `known`: amplitude and offset are fixed at their true values, the information available
/// to an estimator trained on signals where they never vary.
enum class Nuisance : std::uint8_t { estimated, known };

/// Cramer-Rao bounds from the Fisher matrix of the sampled model under white Gaussian noise
/// of standard deviation `sigma`. One value per free parameter, in free_parameter_names order.
inline std::vector<double> fisher_bounds(const SignalParams& truth, const SamplingGrid& grid, double sigma,
                                         Nuisance nuisance = Nuisance::estimated) {
    grid.validate();
    detail::require(sigma > 0.0 && std::isfinite(sigma), "noise sigma must be positive");
    std::visit([](const auto& p) { detail::validate(p); }, truth);
    // Time in window units and frequency in cycles per window for conditioning.
    const double scale = grid.duration();
    const bool osc = kind_of(truth) == SignalKind::damped_osc;
    // Columns: A0, tau, [f, phi,] y0. `free_cols` picks tau, [f, phi].
    const Eigen::Index n = osc ? 5 : 3;
    Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g(n);
    for (std::size_t k = 0; k < grid.n_samples; ++k) {
        const double u = grid.time(k) / scale;
        if (!osc) {
            const auto& p = std::get<ExpDecayParams>(truth);
            const double tau = p.tau / scale;
            const double e = std::exp(-u / tau);
            g << e, p.amplitude * e * u / (tau * tau), 1.0;
        } else {
            const auto& p = std::get<DampedOscParams>(truth);
            const double tau = p.tau / scale, f = p.freq * scale;
            const double e = std::exp(-u / tau);
            const double arg = 2.0 * std::numbers::pi * f * u + p.phase;
            const double c = std::cos(arg), sn = std::sin(arg);
            g << e * c, p.amplitude * e * c * u / (tau * tau), -p.amplitude * e * sn * 2.0 * std::numbers::pi * u,
                -p.amplitude * e * sn, 1.0;
        }
        fisher.noalias() += g * g.transpose();
    }
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool nuisance_col = i == 0 || i == n - 1;
        if (!nuisance_col || nuisance == Nuisance::estimated) keep.push_back(i);
    }
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i)
        for (std::size_t j = 0; j < keep.size(); ++j)
            sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fisher(keep[i], keep[j]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
    if (!lu.isInvertible()) throw FitDegenerate("Fisher matrix is singular");
    const Eigen::MatrixXd cov = lu.inverse() * (sigma * sigma);

    std::vector<double> out;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const Eigen::Index col = keep[i];
        if (col == 0 || col == n - 1) continue;
        const double sd = std::sqrt(cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
        if (col == 1) out.push_back(sd * scale);       // tau
        else if (col == 2) out.push_back(sd / scale);  // freq
        else out.push_back(sd);                        // phase
    }
    return out;
}

/// Bound on tau for the non-oscillating model A0 exp(-t/tau) + y0 (A0, tau, y0 free), from the
/// Fisher matrix of the sampled model. The closed-form bound above assumes an oscillation.
inline double crlb_sigma_tau_exp_decay(const ExpDecayParams& params, const SamplingGrid& grid, double sigma) {
    return fisher_bounds(params, grid, sigma)[0];
}

/// Bound per free parameter that has one: {tau} for exp-decay, {tau, freq} for damped-osc.
/// `tau`/`freq` treat amplitude and offset as estimated; the `_known` fields as known.
struct CrlbValues {
    double tau = 0.0;
    std::optional<double> freq;
    double tau_known = 0.0;
    std::optional<double> freq_known;
};

/// Exp-decay: Fisher bound of the sampled model. Damped-osc: the closed-form bound, whose
/// inputs come from crlb_inputs_for. The `_known` fields always come from the Fisher matrix.
inline CrlbValues crlb_for(const SignalParams& truth, const SamplingGrid& grid, double snr,
                           NoiseConvention convention = NoiseConvention::amplitude) {
    const double amplitude = std::visit([](const auto& p) { return p.amplitude; }, truth);
    const double sigma = noise_sigma(snr, amplitude, convention);
    detail::require(sigma > 0.0, "the bound needs a finite SNR");
    const auto known = fisher_bounds(truth, grid, sigma, Nuisance::known);
    if (const auto* p = std::get_if<ExpDecayParams>(&truth))
        return {crlb_sigma_tau_exp_decay(*p, grid, sigma), std::nullopt, known[0], std::nullopt};
    const auto& p = std::get<DampedOscParams>(truth);
    const CrlbInputs in = crlb_inputs_for(grid, snr, p.tau, convention, p.amplitude);
    return {crlb_sigma_tau_seconds(in), crlb_sigma_f(in), known[0], known[1]};
}

}  // namespace latentfit
