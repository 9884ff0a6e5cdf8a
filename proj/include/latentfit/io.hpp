#pragma once

// Versioned binary containers for datasets and models, plus JSON exports.
//
// All multi-byte values are little-endian regardless of host byte order.
//
// Dataset file ("LFDS", version 1):
//   magic[4] u32 version | u8 kind | u8 noise_convention | u64 n
//   grid: u64 n_samples, f64 sample_rate, f64 t0
//   dist: u32 count, count x {str name, f64 mean, f64 stddev, u8 transform}
//   f64 snr | u64 seed | f64 latent_limit
//   n x n_samples f64 sample blocks
//   n ground-truth records: exp-decay {A0, tau, y0}; damped-osc {A0, tau, f, phi, y0}
//
// Model file ("LFAE", version 1):
//   magic[4] u32 version | u8 kind | u32 latent_layer_index | u8 trained
//   grid (as above) | u32 mapping count, count x {str name, f64 mean, f64 stddev}
//   network section ("LFNN", version 1):
//     u32 layer count | u64 input_dim
//     per layer: u64 n_in, u64 n_out, u8 activation, n_out*n_in f64 row-major weights, n_out f64 biases
//
// Strings are u32 length + bytes.

#include <json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "latentfit/autoencoder.hpp"
#include "latentfit/errors.hpp"
#include "latentfit/nn.hpp"
#include "latentfit/signals.hpp"

namespace latentfit::io {

inline constexpr std::array<char, 4> dataset_magic{'L', 'F', 'D', 'S'};
inline constexpr std::array<char, 4> model_magic{'L', 'F', 'A', 'E'};
inline constexpr std::array<char, 4> network_magic{'L', 'F', 'N', 'N'};
inline constexpr std::uint32_t dataset_version = 1;
inline constexpr std::uint32_t model_version = 1;
inline constexpr std::uint32_t network_version = 1;

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& os) : os_(os) {}

    void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void magic(const std::array<char, 4>& m) { os_.write(m.data(), 4); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    template <class U>
    void put_le(U v) {
        std::array<char, sizeof(U)> buf{};
        for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        os_.write(buf.data(), buf.size());
    }

    std::ostream& os_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& is) : is_(is) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get_le<std::uint8_t>()); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    std::string str() {
        const std::uint32_t len = u32();
        if (len > (1U << 20)) throw FormatError("string field too long");
        std::string s(len, '\0');
        read(s.data(), len);
        return s;
    }
    void expect_magic(const std::array<char, 4>& m, std::string_view what) {
        std::array<char, 4> got{};
        read(got.data(), 4);
        if (got != m) throw FormatError("bad magic bytes: not a " + std::string(what) + " file");
    }
    void expect_end() {
        if (is_.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after the container");
    }

private:
    void read(char* dst, std::size_t n) {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError("unexpected end of file");
    }
    template <class U>
    U get_le() {
        std::array<char, sizeof(U)> buf{};
        read(buf.data(), buf.size());
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<std::uint8_t>(buf[i])) << (8 * i);
        return v;
    }

    std::istream& is_;
};

namespace detail {

inline void write_grid(BinaryWriter& w, const SamplingGrid& g) {
    w.u64(g.n_samples);
    w.f64(g.sample_rate);
    w.f64(g.t0);
}

inline SamplingGrid read_grid(BinaryReader& r) {
    SamplingGrid g;
    g.n_samples = r.u64();
    g.sample_rate = r.f64();
    g.t0 = r.f64();
    if (g.n_samples < 2 || g.n_samples > (1ULL << 28) || !(g.sample_rate > 0.0))
        throw FormatError("invalid sampling grid in file");
    return g;
}

inline SignalKind read_kind(std::uint8_t v) {
    if (v > 1) throw FormatError("unknown signal kind tag " + std::to_string(v));
    return static_cast<SignalKind>(v);
}

inline std::size_t truth_width(SignalKind k) { return k == SignalKind::exp_decay ? 3 : 5; }

inline std::vector<double> truth_record(const SignalParams& p) {
    if (const auto* e = std::get_if<ExpDecayParams>(&p)) return {e->amplitude, e->tau, e->offset};
    const auto& o = std::get<DampedOscParams>(p);
    return {o.amplitude, o.tau, o.freq, o.phase, o.offset};
}

inline SignalParams truth_from_record(SignalKind k, const std::vector<double>& v) {
    if (k == SignalKind::exp_decay) return ExpDecayParams{v[0], v[1], v[2]};
    return DampedOscParams{v[0], v[1], v[2], v[3], v[4]};
}

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    fn(os);
    os.flush();
    if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
    return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Datasets

inline void write_dataset(std::ostream& os, const Dataset& data) {
    BinaryWriter w(os);
    const DatasetSpec& s = data.spec;
    w.magic(dataset_magic);
    w.u32(dataset_version);
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u8(static_cast<std::uint8_t>(s.convention));
    w.u64(data.items.size());
    detail::write_grid(w, s.grid);
    w.u32(static_cast<std::uint32_t>(s.dist.params.size()));
    for (const auto& p : s.dist.params) {
        w.str(p.name);
        w.f64(p.mean);
        w.f64(p.stddev);
        w.u8(static_cast<std::uint8_t>(p.transform));
    }
    w.f64(s.snr);
    w.u64(s.seed);
    w.f64(s.latent_limit);
    for (const auto& item : data.items) {
        if (item.signal.samples.size() != s.grid.n_samples)
            throw std::invalid_argument("dataset signal length does not match its grid");
        for (double v : item.signal.samples) w.f64(v);
    }
    for (const auto& item : data.items)
        for (double v : detail::truth_record(item.truth)) w.f64(v);
}

inline Dataset read_dataset(std::istream& is) {
    BinaryReader r(is);
    r.expect_magic(dataset_magic, "dataset");
    const std::uint32_t version = r.u32();
    if (version != dataset_version)
        throw FormatError("unsupported dataset version " + std::to_string(version));
    Dataset data;
    DatasetSpec& s = data.spec;
    s.kind = detail::read_kind(r.u8());
    const std::uint8_t conv = r.u8();
    if (conv > 1) throw FormatError("unknown noise convention tag");
    s.convention = static_cast<NoiseConvention>(conv);
    const std::uint64_t n = r.u64();
    s.n = n;
    s.grid = detail::read_grid(r);
    const std::uint32_t count = r.u32();
    if (count > 16) throw FormatError("implausible distribution size");
    s.dist.params.clear();
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamSpec p;
        p.name = r.str();
        p.mean = r.f64();
        p.stddev = r.f64();
        const std::uint8_t t = r.u8();
        if (t > 1) throw FormatError("unknown transform tag");
        p.transform = static_cast<Transform>(t);
        s.dist.params.push_back(std::move(p));
    }
    s.snr = r.f64();
    s.seed = r.u64();
    s.latent_limit = r.f64();
    if (n > (1ULL << 32) / s.grid.n_samples) throw FormatError("implausible dataset size");
    data.items.resize(n);
    for (auto& item : data.items) {
        item.signal.grid = s.grid;
        item.signal.samples.resize(s.grid.n_samples);
        for (double& v : item.signal.samples) v = r.f64();
    }
    const std::size_t width = detail::truth_width(s.kind);
    for (auto& item : data.items) {
        std::vector<double> rec(width);
        for (double& v : rec) v = r.f64();
        item.truth = detail::truth_from_record(s.kind, rec);
    }
    r.expect_end();
    return data;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& data) {
    detail::write_file(path, [&](std::ostream& os) { write_dataset(os, data); });
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    auto is = detail::open_input(path);
    return read_dataset(is);
}

namespace detail {

/// JSON has no infinity; it is written as the string "inf".
inline nlohmann::json number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double number(const nlohmann::json& j) {
    if (j.is_string()) {
        if (j == "inf") return std::numeric_limits<double>::infinity();
        if (j == "-inf") return -std::numeric_limits<double>::infinity();
        throw FormatError("expected a number, got string " + j.dump());
    }
    if (!j.is_number()) throw FormatError("expected a number, got " + j.dump());
    return j.get<double>();
}

}  // namespace detail

inline nlohmann::json dataset_to_json(const Dataset& data) {
    const DatasetSpec& s = data.spec;
    nlohmann::json j;
    j["format"] = "latentfit-dataset";
    j["version"] = dataset_version;
    j["kind"] = to_string(s.kind);
    j["noise_convention"] = to_string(s.convention);
    j["n"] = data.items.size();
    j["grid"] = {{"n_samples", s.grid.n_samples}, {"sample_rate_hz", s.grid.sample_rate}, {"t0_s", s.grid.t0}};
    for (const auto& p : s.dist.params)
        j["distribution"].push_back({{"name", p.name},
                                     {"mean", p.mean},
                                     {"stddev", p.stddev},
                                     {"transform", p.transform == Transform::absolute ? "absolute" : "identity"}});
    j["snr"] = detail::number(s.snr);
    j["seed"] = s.seed;
    j["latent_limit"] = detail::number(s.latent_limit);
    j["signals"] = nlohmann::json::array();
    for (const auto& item : data.items)
        j["signals"].push_back({{"truth", detail::truth_record(item.truth)}, {"samples", item.signal.samples}});
    return j;
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "latentfit-dataset") throw FormatError("not a latentfit dataset document");
        Dataset data;
        DatasetSpec& s = data.spec;
        s.kind = parse_kind(j.at("kind").get<std::string>());
        s.convention = parse_noise_convention(j.at("noise_convention").get<std::string>());
        s.grid.n_samples = j.at("grid").at("n_samples").get<std::size_t>();
        s.grid.sample_rate = j.at("grid").at("sample_rate_hz").get<double>();
        s.grid.t0 = j.at("grid").at("t0_s").get<double>();
        s.dist.params.clear();
        for (const auto& p : j.at("distribution"))
            s.dist.params.push_back({p.at("name").get<std::string>(), p.at("mean").get<double>(),
                                     p.at("stddev").get<double>(),
                                     p.at("transform") == "absolute" ? Transform::absolute : Transform::identity});
        s.snr = detail::number(j.at("snr"));
        s.seed = j.at("seed").get<std::uint64_t>();
        s.latent_limit = detail::number(j.at("latent_limit"));
        for (const auto& item : j.at("signals")) {
            LabeledSignal ls;
            ls.signal.grid = s.grid;
            ls.signal.samples = item.at("samples").get<std::vector<double>>();
            const auto rec = item.at("truth").get<std::vector<double>>();
            if (rec.size() != detail::truth_width(s.kind)) throw FormatError("ground-truth record has wrong width");
            ls.truth = detail::truth_from_record(s.kind, rec);
            data.items.push_back(std::move(ls));
        }
        s.n = data.items.size();
        return data;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("dataset JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Networks and models

inline void write_network(std::ostream& os, const DenseNetwork& net) {
    BinaryWriter w(os);
    w.magic(network_magic);
    w.u32(network_version);
    w.u32(static_cast<std::uint32_t>(net.size()));
    w.u64(net.input_dim());
    for (const auto& l : net.layers()) {
        w.u64(l.n_in());
        w.u64(l.n_out());
        w.u8(static_cast<std::uint8_t>(l.activation));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.f64(l.weights(r, c));
        for (Eigen::Index r = 0; r < l.biases.size(); ++r) w.f64(l.biases[r]);
    }
}

inline DenseNetwork read_network(std::istream& is) {
    BinaryReader r(is);
    r.expect_magic(network_magic, "network");
    const std::uint32_t version = r.u32();
    if (version != network_version) throw FormatError("unsupported network version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    const std::uint64_t input_dim = r.u64();
    if (count > 1024 || input_dim == 0 || input_dim > (1ULL << 24)) throw FormatError("implausible network header");
    DenseNetwork net(input_dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint64_t n_in = r.u64(), n_out = r.u64();
        const std::uint8_t act = r.u8();
        if (act > 1) throw FormatError("unknown activation tag");
        if (n_in != net.output_dim() || n_out == 0 || n_out > (1ULL << 24))
            throw FormatError("layer " + std::to_string(i) + " has inconsistent dimensions");
        DenseLayer layer(n_in, n_out, static_cast<Activation>(act));
        for (Eigen::Index row = 0; row < layer.weights.rows(); ++row)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(row, c) = r.f64();
        for (Eigen::Index row = 0; row < layer.biases.size(); ++row) layer.biases[row] = r.f64();
        try {
            net.add_layer(std::move(layer));
        } catch (const std::invalid_argument& e) {
            throw FormatError(std::string("invalid layer in file: ") + e.what());
        }
    }
    return net;
}

inline void write_model(std::ostream& os, const AutoencoderModel& model) {
    BinaryWriter w(os);
    w.magic(model_magic);
    w.u32(model_version);
    w.u8(static_cast<std::uint8_t>(model.kind));
    w.u32(static_cast<std::uint32_t>(model.latent_layer_index));
    w.u8(model.trained ? 1 : 0);
    detail::write_grid(w, model.grid);
    w.u32(static_cast<std::uint32_t>(model.mapping.size()));
    for (const auto& e : model.mapping.entries) {
        w.str(e.name);
        w.f64(e.mean);
        w.f64(e.stddev);
    }
    write_network(os, model.network);
}

inline AutoencoderModel read_model(std::istream& is) {
    BinaryReader r(is);
    r.expect_magic(model_magic, "model");
    const std::uint32_t version = r.u32();
    if (version != model_version) throw FormatError("unsupported model version " + std::to_string(version));
    AutoencoderModel m;
    m.kind = detail::read_kind(r.u8());
    m.latent_layer_index = r.u32();
    m.trained = r.u8() != 0;
    m.grid = detail::read_grid(r);
    const std::uint32_t count = r.u32();
    if (count > 16) throw FormatError("implausible latent mapping size");
    for (std::uint32_t i = 0; i < count; ++i) {
        LatentEntry e;
        e.name = r.str();
        e.mean = r.f64();
        e.stddev = r.f64();
        m.mapping.entries.push_back(std::move(e));
    }
    m.network = read_network(is);
    r.expect_end();
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("inconsistent model file: ") + e.what());
    }
    return m;
}

inline void save_model(const std::filesystem::path& path, const AutoencoderModel& model) {
    detail::write_file(path, [&](std::ostream& os) { write_model(os, model); });
}

inline AutoencoderModel load_model(const std::filesystem::path& path) {
    auto is = detail::open_input(path);
    return read_model(is);
}

inline nlohmann::json network_to_json(const DenseNetwork& net) {
    nlohmann::json j;
    j["input_dim"] = net.input_dim();
    j["layers"] = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        nlohmann::json lj;
        lj["n_in"] = l.n_in();
        lj["n_out"] = l.n_out();
        lj["activation"] = to_string(l.activation);
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weights.size()));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
        lj["weights_row_major"] = std::move(w);
        lj["biases"] = std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size());
        j["layers"].push_back(std::move(lj));
    }
    return j;
}

inline nlohmann::json model_to_json(const AutoencoderModel& m) {
    nlohmann::json j;
    j["format"] = "latentfit-model";
    j["version"] = model_version;
    j["kind"] = to_string(m.kind);
    j["latent_layer_index"] = m.latent_layer_index;
    j["trained"] = m.trained;
    j["grid"] = {{"n_samples", m.grid.n_samples}, {"sample_rate_hz", m.grid.sample_rate}, {"t0_s", m.grid.t0}};
    for (const auto& e : m.mapping.entries)
        j["mapping"].push_back({{"name", e.name}, {"mean", e.mean}, {"stddev", e.stddev}});
    j["widths"] = m.network.widths();
    j["network"] = network_to_json(m.network);
    return j;
}

}  // namespace latentfit::io
