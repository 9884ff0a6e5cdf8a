#pragma once

// Hourglass autoencoders whose latent neurons carry the physical signal parameters.
//
// Each latent neuron holds one parameter through the affine map
//     x_lat = (x - mu_x) / (3 zeta_x),
// where (mu_x, zeta_x) are the mean and spread of the training distribution. Training runs
// three stages per repetition: (1) the whole network input -> input, (2) the encoder
// input -> latent truth, (3) the decoder latent truth -> input.

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latentfit/errors.hpp"
#include "latentfit/nn.hpp"
#include "latentfit/rng.hpp"
#include "latentfit/signals.hpp"

namespace latentfit {

struct LatentEntry {
    std::string name;
    double mean = 0.0;
    double stddev = 1.0;

    friend bool operator==(const LatentEntry&, const LatentEntry&) = default;
};

struct LatentMapping {
    std::vector<LatentEntry> entries;

    static LatentMapping from_distribution(const ParamDistribution& dist) {
        LatentMapping m;
        for (const auto& p : dist.params) m.entries.push_back({p.name, p.mean, p.stddev});
        return m;
    }

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }

    void validate() const {
        detail::require(!entries.empty(), "latent mapping is empty");
        for (const auto& e : entries) {
            detail::require(std::isfinite(e.mean), "latent mapping mean must be finite");
            detail::require(std::isfinite(e.stddev) && e.stddev > 0.0, "latent mapping stddev must be positive");
        }
    }

    friend bool operator==(const LatentMapping&, const LatentMapping&) = default;
};

/// (x - mu) / (3 zeta) per component. Values outside [-1, 1] are returned as they are.
inline std::vector<double> to_latent(std::span<const double> values, const LatentMapping& mapping) {
    detail::require(values.size() == mapping.size(), "parameter count does not match the latent mapping");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto& e = mapping.entries[i];
        out[i] = (values[i] - e.mean) / (3.0 * e.stddev);
    }
    return out;
}

inline std::vector<double> to_latent(const SignalParams& params, const LatentMapping& mapping) {
    const auto names = free_parameter_names(kind_of(params));
    detail::require(names.size() == mapping.size(), "parameter set does not match the latent mapping");
    for (std::size_t i = 0; i < names.size(); ++i)
        detail::require(names[i] == mapping.entries[i].name, "latent mapping order does not match the parameters");
    return to_latent(free_parameters(params), mapping);
}

/// 3 zeta x_lat + mu per component.
inline std::vector<double> from_latent(std::span<const double> latent, const LatentMapping& mapping) {
    detail::require(latent.size() == mapping.size(), "latent length does not match the latent mapping");
    std::vector<double> out(latent.size());
    for (std::size_t i = 0; i < latent.size(); ++i) {
        const auto& e = mapping.entries[i];
        out[i] = 3.0 * e.stddev * latent[i] + e.mean;
    }
    return out;
}

/// Widths including input and output: 1000-50-1-50-1000 or 1000-50-10-3-10-50-1000.
inline std::vector<std::size_t> topology(SignalKind kind, std::size_t input_dim = 1000) {
    if (kind == SignalKind::exp_decay) return {input_dim, 50, 1, 50, input_dim};
    return {input_dim, 50, 10, 3, 10, 50, input_dim};
}

struct AutoencoderModel {
    DenseNetwork network;
    std::size_t latent_layer_index = 0;  // index of the layer whose output is the latent vector
    LatentMapping mapping;
    SignalKind kind = SignalKind::exp_decay;
    SamplingGrid grid;
    bool trained = false;

    [[nodiscard]] LayerRange encoder() const noexcept { return {0, latent_layer_index + 1}; }
    [[nodiscard]] LayerRange decoder() const noexcept { return {latent_layer_index + 1, network.size()}; }
    [[nodiscard]] std::size_t latent_dim() const { return network.layer(latent_layer_index).n_out(); }

    void validate() const {
        network.validate();
        mapping.validate();
        grid.validate();
        detail::require(latent_layer_index < network.size(), "latent layer index out of range");
        detail::require(network.input_dim() == grid.n_samples, "network input width does not match the grid");
        detail::require(latent_dim() == mapping.size(), "latent width does not match the latent mapping");
        detail::require(mapping.size() == free_parameter_names(kind).size(),
                        "latent width does not match the free parameters of the signal kind");
    }
};

struct BuildOptions {
    std::uint64_t seed = 0;
    /// Init range scale for the input layer. The input-layer weights that lie outside the span
    /// of the (noise-free) training signals are never updated by SGD, so their initial size
    /// sets how much measurement noise leaks into the latent estimate.
    double input_gain = 0.01;
    SamplingGrid grid{};
    /// Defaults to ParamDistribution::defaults(kind).
    std::optional<ParamDistribution> dist;
};

inline AutoencoderModel build(SignalKind kind, const BuildOptions& options = {}) {
    detail::require(kind == SignalKind::exp_decay || kind == SignalKind::damped_osc, "unknown signal kind");
    options.grid.validate();
    const auto widths = topology(kind, options.grid.n_samples);
    std::vector<double> gains(widths.size() - 1, 1.0);
    gains.front() = options.input_gain;
    AutoencoderModel model;
    model.network = make_network(widths, Activation::tanh, options.seed, gains);
    model.latent_layer_index = kind == SignalKind::exp_decay ? 1 : 2;
    const ParamDistribution dist = options.dist.value_or(ParamDistribution::defaults(kind));
    dist.validate(kind);
    model.mapping = LatentMapping::from_distribution(dist);
    model.kind = kind;
    model.grid = options.grid;
    model.validate();
    return model;
}

// ---------------------------------------------------------------------------------------------
// Training

enum class Stage : std::uint8_t { full = 1, encoder = 2, decoder = 3 };

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::full: return "full";
        case Stage::encoder: return "encoder";
        case Stage::decoder: return "decoder";
    }
    return "?";
}

struct EpochRecord {
    std::size_t dataset = 0;
    std::size_t repetition = 0;
    std::size_t epoch = 0;
    double train_loss = 0.0;       // MSE per output neuron, averaged over the epoch's batches
    double validation_loss = 0.0;  // MSE per output neuron on the held-out split

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingPlan {
    std::size_t n_datasets = 10;
    std::size_t reps_per_dataset = 10;
    /// Stage 2 runs 1000 epochs: at 100 the encoder is still converging and its estimates carry
    /// a systematic error of several ns in τ.
    std::array<std::size_t, 3> stage_epochs{100, 1000, 100};
    TrainConfig train{.learning_rate = 0.1, .batch_size = 16, .epochs = 1, .seed = 0};
    /// Template for every training set; set d uses seed splitmix64(data.seed + d).
    DatasetSpec data = training_defaults(SignalKind::exp_decay);
    /// Learning rate for training set d is train.learning_rate * lr_decay^d.
    double lr_decay = 1.0;
    double validation_fraction = 0.1;
    /// Control run: only stage 1, for the sum of all stage epochs.
    bool stage1_only = false;

    static DatasetSpec training_defaults(SignalKind kind) {
        DatasetSpec s = DatasetSpec::training_defaults(kind);
        s.latent_limit = 0.995;
        return s;
    }

    static TrainingPlan defaults(SignalKind kind) {
        TrainingPlan p;
        p.data = training_defaults(kind);
        return p;
    }

    [[nodiscard]] std::uint64_t dataset_seed(std::size_t d) const { return Rng::splitmix64(data.seed + d); }
};

struct TrainReport {
    std::vector<EpochRecord> full;
    std::vector<EpochRecord> encoder;
    std::vector<EpochRecord> decoder;
    std::vector<std::uint64_t> dataset_seeds;
    /// Fraction of raw draws from the training distribution whose latent target falls outside
    /// (-1, 1); such draws are redrawn before training.
    double latent_overflow_fraction = 0.0;
    double wall_seconds = 0.0;

    /// Equality ignores wall time.
    [[nodiscard]] bool same_losses(const TrainReport& o) const {
        return full == o.full && encoder == o.encoder && decoder == o.decoder && dataset_seeds == o.dataset_seeds;
    }
};

using TrainProgress = std::function<void(Stage, const EpochRecord&)>;

/// Fraction of `n` raw parameter draws whose scaled latent value lies outside (-1, 1).
inline double latent_overflow_fraction(SignalKind kind, const ParamDistribution& dist, std::size_t n,
                                       std::uint64_t seed) {
    const LatentMapping mapping = LatentMapping::from_distribution(dist);
    Rng rng(seed);
    std::size_t over = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto lat = to_latent(sample_params(kind, dist, rng), mapping);
        for (double v : lat)
            if (!(std::abs(v) < 1.0)) {
                ++over;
                break;
            }
    }
    return static_cast<double>(over) / static_cast<double>(n);
}

namespace detail {

struct TrainingMatrices {
    Eigen::MatrixXd signals;  // n_samples x n
    Eigen::MatrixXd latents;  // latent_dim x n
};

inline TrainingMatrices to_matrices(const Dataset& data, const LatentMapping& mapping, std::size_t first,
                                    std::size_t count) {
    TrainingMatrices m;
    const auto rows = static_cast<Eigen::Index>(data.grid().n_samples);
    m.signals.resize(rows, static_cast<Eigen::Index>(count));
    m.latents.resize(static_cast<Eigen::Index>(mapping.size()), static_cast<Eigen::Index>(count));
    for (std::size_t j = 0; j < count; ++j) {
        const auto& item = data.items[first + j];
        const auto col = static_cast<Eigen::Index>(j);
        m.signals.col(col) = Eigen::Map<const Eigen::VectorXd>(item.signal.samples.data(), rows);
        const auto lat = to_latent(item.truth, mapping);
        for (std::size_t i = 0; i < lat.size(); ++i) m.latents(static_cast<Eigen::Index>(i), col) = lat[i];
    }
    return m;
}

}  // namespace detail

/// Runs the three-stage protocol: for each of `n_datasets` freshly generated training sets,
/// `reps_per_dataset` repetitions of stages 1-3. Throws TrainingDiverged on a non-finite loss.
inline TrainReport train_three_stage(AutoencoderModel& model, const TrainingPlan& plan,
                                     const TrainProgress& progress = {}) {
    model.validate();
    plan.train.validate();
    detail::require(plan.n_datasets >= 1 && plan.reps_per_dataset >= 1, "need at least one dataset and repetition");
    detail::require(plan.data.kind == model.kind, "training data kind does not match the model");
    detail::require(plan.data.grid == model.grid, "training grid does not match the model");
    detail::require(plan.validation_fraction >= 0.0 && plan.validation_fraction < 1.0,
                    "validation_fraction must lie in [0, 1)");
    for (std::size_t e : plan.stage_epochs) detail::require(e >= 1, "every stage needs at least one epoch");
    detail::require(plan.lr_decay > 0.0 && plan.lr_decay <= 1.0, "lr_decay must lie in (0, 1]");

    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    report.latent_overflow_fraction =
        latent_overflow_fraction(model.kind, plan.data.dist, 100000, Rng::splitmix64(plan.data.seed ^ 0xA5A5));
    Rng shuffle(plan.train.seed);
    std::size_t global_epoch = 0;
    TrainConfig cfg = plan.train;

    auto run_stage = [&](Stage stage, std::size_t epochs, const Eigen::MatrixXd& in, const Eigen::MatrixXd& out,
                         const Eigen::MatrixXd& val_in, const Eigen::MatrixXd& val_out, LayerRange range,
                         std::vector<EpochRecord>& series, std::size_t d, std::size_t rep) {
        for (std::size_t e = 0; e < epochs; ++e) {
            EpochRecord rec{d, rep, e, 0.0, 0.0};
            rec.train_loss = train_epoch(model.network, in, out, range, cfg, shuffle);
            rec.validation_loss =
                val_in.cols() > 0 ? evaluate_loss(model.network, val_in, val_out, range) : rec.train_loss;
            if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.validation_loss))
                throw TrainingDiverged(global_epoch, "training diverged in stage " + std::string(to_string(stage)) +
                                                         " at global epoch " + std::to_string(global_epoch));
            ++global_epoch;
            series.push_back(rec);
            if (progress) progress(stage, rec);
        }
    };

    for (std::size_t d = 0; d < plan.n_datasets; ++d) {
        DatasetSpec spec = plan.data;
        spec.seed = plan.dataset_seed(d);
        report.dataset_seeds.push_back(spec.seed);
        cfg.learning_rate = plan.train.learning_rate * std::pow(plan.lr_decay, static_cast<double>(d));
        const Dataset data = make_dataset(spec);
        const auto n_val = static_cast<std::size_t>(std::floor(plan.validation_fraction * static_cast<double>(data.size())));
        const std::size_t n_train = data.size() - n_val;
        detail::require(n_train >= cfg.batch_size, "training split is smaller than the batch size");
        const auto train = detail::to_matrices(data, model.mapping, 0, n_train);
        const auto val = detail::to_matrices(data, model.mapping, n_train, n_val);
        const LayerRange all = model.network.all();
        for (std::size_t rep = 0; rep < plan.reps_per_dataset; ++rep) {
            if (plan.stage1_only) {
                const std::size_t total = plan.stage_epochs[0] + plan.stage_epochs[1] + plan.stage_epochs[2];
                run_stage(Stage::full, total, train.signals, train.signals, val.signals, val.signals, all, report.full,
                          d, rep);
                continue;
            }
            run_stage(Stage::full, plan.stage_epochs[0], train.signals, train.signals, val.signals, val.signals, all,
                      report.full, d, rep);
            run_stage(Stage::encoder, plan.stage_epochs[1], train.signals, train.latents, val.signals, val.latents,
                      model.encoder(), report.encoder, d, rep);
            run_stage(Stage::decoder, plan.stage_epochs[2], train.latents, train.signals, val.latents, val.signals,
                      model.decoder(), report.decoder, d, rep);
        }
    }
    model.trained = true;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

// ---------------------------------------------------------------------------------------------
// Inference

namespace detail {

inline void require_ready(const AutoencoderModel& model, std::size_t input_len) {
    if (!model.trained) throw InvalidState("autoencoder has not been trained");
    require(input_len == model.network.input_dim(), "signal length does not match the model input width");
}

}  // namespace detail

/// Latent vector of one signal; runs the encoder layers only.
inline std::vector<double> encode_latent(const AutoencoderModel& model, std::span<const double> samples) {
    detail::require_ready(model, samples.size());
    const Eigen::VectorXd lat = infer(model.network, samples, model.encoder());
    return {lat.data(), lat.data() + lat.size()};
}

inline SignalParams encode(const AutoencoderModel& model, const Signal& signal) {
    const auto lat = encode_latent(model, signal.samples);
    return params_from_free(model.kind, from_latent(lat, model.mapping));
}

/// Encodes many signals through batched matrix products; results follow input order.
inline std::vector<SignalParams> encode_batch(const AutoencoderModel& model, std::span<const Signal> signals,
                                              std::size_t chunk = 256) {
    std::vector<SignalParams> out;
    out.reserve(signals.size());
    const auto rows = static_cast<Eigen::Index>(model.network.input_dim());
    for (std::size_t start = 0; start < signals.size(); start += chunk) {
        const std::size_t len = std::min(chunk, signals.size() - start);
        Eigen::MatrixXd batch(rows, static_cast<Eigen::Index>(len));
        for (std::size_t j = 0; j < len; ++j) {
            detail::require_ready(model, signals[start + j].size());
            batch.col(static_cast<Eigen::Index>(j)) =
                Eigen::Map<const Eigen::VectorXd>(signals[start + j].samples.data(), rows);
        }
        const ForwardCache c = forward(model.network, batch, model.encoder());
        for (std::size_t j = 0; j < len; ++j) {
            const Eigen::VectorXd lat = c.output().col(static_cast<Eigen::Index>(j));
            out.push_back(params_from_free(model.kind, from_latent({lat.data(), static_cast<std::size_t>(lat.size())},
                                                                   model.mapping)));
        }
    }
    return out;
}

/// Full pass input -> output on the model's grid.
inline Signal reconstruct(const AutoencoderModel& model, const Signal& signal) {
    detail::require_ready(model, signal.size());
    const Eigen::VectorXd out = infer(model.network, std::span<const double>(signal.samples));
    return {{out.data(), out.data() + out.size()}, model.grid};
}

}  // namespace latentfit
