#include "adkd/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "adkd/ops.hpp"

namespace adkd {

LayerSpec LayerSpec::Conv(int out_channels, int k, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.out_channels = out_channels;
    s.k = k;
    s.stride = stride;
    s.pad = pad;
    return s;
}
LayerSpec LayerSpec::Dense(int out_dim) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.out_dim = out_dim;
    return s;
}
LayerSpec LayerSpec::ReLU() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}
LayerSpec LayerSpec::GlobalAvgPool() {
    LayerSpec s;
    s.kind = LayerKind::GlobalAvgPool;
    return s;
}
LayerSpec LayerSpec::Flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}
LayerSpec LayerSpec::Projection(int out_dim) {
    LayerSpec s;
    s.kind = LayerKind::Projection;
    s.out_dim = out_dim;
    return s;
}
LayerSpec LayerSpec::Upsample(int factor) {
    LayerSpec s;
    s.kind = LayerKind::Upsample;
    s.factor = factor;
    return s;
}
LayerSpec LayerSpec::Reshape(int c, int h, int w) {
    LayerSpec s;
    s.kind = LayerKind::Reshape;
    s.c = c;
    s.h = h;
    s.w = w;
    return s;
}

std::uint64_t architecture_fingerprint(const std::vector<LayerSpec>& specs,
                                       const Shape& input_shape) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int e : input_shape) h = fnv1a64(&e, sizeof(e), h);
    for (const auto& s : specs) {
        int fields[9] = {static_cast<int>(s.kind), s.out_channels, s.k, s.stride,
                         s.pad,  s.out_dim,        s.factor,       s.c, s.w};
        h = fnv1a64(fields, sizeof(fields), h);
        h = fnv1a64(&s.h, sizeof(s.h), h);
    }
    return h;
}

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Dense: return "dense";
        case LayerKind::ReLU: return "relu";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Projection: return "projection";
        case LayerKind::Upsample: return "upsample";
        case LayerKind::Reshape: return "reshape";
    }
    return "?";
}

[[noreturn]] void build_error(std::size_t layer, const std::string& msg) {
    throw ArgumentError("build_model: layer " + std::to_string(layer) + ": " + msg);
}

}  // namespace

Model Model::build(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed) {
    if (specs.empty()) throw ArgumentError("build_model: empty layer list");
    if (input_shape.empty()) throw ArgumentError("build_model: empty input shape");

    Model m;
    m.specs_ = std::move(specs);
    m.input_shape_ = std::move(input_shape);
    m.fingerprint_ = architecture_fingerprint(m.specs_, m.input_shape_);

    Rng rng(seed);
    Shape cur = m.input_shape_;  // per-sample shape
    for (std::size_t i = 0; i < m.specs_.size(); ++i) {
        const LayerSpec& s = m.specs_[i];
        m.layer_param_start_.push_back(-1);
        switch (s.kind) {
            case LayerKind::Conv: {
                if (cur.size() != 3) build_error(i, "conv expects [C,H,W] input");
                const int C = cur[0], H = cur[1], W = cur[2];
                if (s.k > H + 2 * s.pad || s.k > W + 2 * s.pad)
                    build_error(i, "kernel larger than padded input");
                const int HO = (H + 2 * s.pad - s.k) / s.stride + 1;
                const int WO = (W + 2 * s.pad - s.k) / s.stride + 1;
                const int fan_in = C * s.k * s.k;
                const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
                std::vector<float> wdata(
                    static_cast<std::size_t>(s.out_channels) * C * s.k * s.k);
                for (auto& v : wdata) v = rng.uniform(-bound, bound);
                m.layer_param_start_[i] = static_cast<int>(m.params_.size());
                m.params_.push_back(Tensor::from_data({s.out_channels, C, s.k, s.k},
                                                      std::move(wdata), true));
                m.params_.push_back(Tensor::zeros({s.out_channels}, true));
                m.param_names_.push_back("layer" + std::to_string(i) + ".weight");
                m.param_names_.push_back("layer" + std::to_string(i) + ".bias");
                cur = {s.out_channels, HO, WO};
                break;
            }
            case LayerKind::Dense:
            case LayerKind::Projection: {
                if (cur.size() != 1) build_error(i, "dense expects flat [D] input");
                const int fan_in = cur[0];
                const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
                std::vector<float> wdata(static_cast<std::size_t>(fan_in) * s.out_dim);
                for (auto& v : wdata) v = rng.uniform(-bound, bound);
                m.layer_param_start_[i] = static_cast<int>(m.params_.size());
                m.params_.push_back(
                    Tensor::from_data({fan_in, s.out_dim}, std::move(wdata), true));
                m.params_.push_back(Tensor::zeros({s.out_dim}, true));
                m.param_names_.push_back("layer" + std::to_string(i) + ".weight");
                m.param_names_.push_back("layer" + std::to_string(i) + ".bias");
                cur = {s.out_dim};
                break;
            }
            case LayerKind::ReLU:
                break;
            case LayerKind::GlobalAvgPool:
                if (cur.size() != 3) build_error(i, "global_avg_pool expects [C,H,W]");
                cur = {cur[0]};
                break;
            case LayerKind::Flatten: {
                int n = 1;
                for (int e : cur) n *= e;
                cur = {n};
                break;
            }
            case LayerKind::Upsample:
                if (cur.size() != 3) build_error(i, "upsample expects [C,H,W]");
                if (s.factor < 1) build_error(i, "upsample factor must be >= 1");
                cur = {cur[0], cur[1] * s.factor, cur[2] * s.factor};
                break;
            case LayerKind::Reshape: {
                int n = 1;
                for (int e : cur) n *= e;
                if (n != s.c * s.h * s.w) build_error(i, "reshape element count mismatch");
                cur = {s.c, s.h, s.w};
                break;
            }
        }
        m.output_shapes_.push_back(cur);
    }
    return m;
}

Tensor Model::run(const Tensor& batch, bool with_grad, int stop_layer) const {
    Shape expect = input_shape_;
    if (batch.ndim() != static_cast<int>(expect.size()) + 1) {
        throw DimensionError("forward: batch shape " + shape_str(batch.shape()) +
                             " does not extend input shape " + shape_str(expect));
    }
    for (std::size_t i = 0; i < expect.size(); ++i) {
        if (batch.dim(static_cast<int>(i) + 1) != expect[i]) {
            throw DimensionError("forward: batch shape " + shape_str(batch.shape()) +
                                 " does not match input shape " + shape_str(expect));
        }
    }
    const bool train_params = with_grad && !frozen_;
    const int N = batch.dim(0);
    Tensor x = batch;
    for (int i = 0; i < stop_layer; ++i) {
        const LayerSpec& s = specs_[static_cast<std::size_t>(i)];
        const int ps = layer_param_start_[static_cast<std::size_t>(i)];
        Tensor w, b;
        if (ps >= 0) {
            w = params_[static_cast<std::size_t>(ps)];
            b = params_[static_cast<std::size_t>(ps) + 1];
            if (!train_params) {
                w = w.detach_copy(false);
                b = b.detach_copy(false);
            }
        }
        switch (s.kind) {
            case LayerKind::Conv:
                x = conv2d(x, w, b, s.stride, s.pad);
                break;
            case LayerKind::Dense:
            case LayerKind::Projection:
                x = bias_add_rows(matmul(x, w), b);
                break;
            case LayerKind::ReLU:
                x = relu(x);
                break;
            case LayerKind::GlobalAvgPool:
                x = global_avg_pool(x);
                break;
            case LayerKind::Flatten: {
                int n = 1;
                for (int d = 1; d < x.ndim(); ++d) n *= x.dim(d);
                x = reshape(x, {N, n});
                break;
            }
            case LayerKind::Upsample:
                x = upsample_nearest2d(x, s.factor);
                break;
            case LayerKind::Reshape:
                x = reshape(x, {N, s.c, s.h, s.w});
                break;
        }
    }
    return x;
}

Tensor Model::forward(const Tensor& batch, bool with_grad) const {
    return run(batch, with_grad, static_cast<int>(specs_.size()));
}

int Model::projection_index() const {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        if (specs_[i].kind == LayerKind::Projection) return static_cast<int>(i);
    }
    return -1;
}

Tensor Model::trunk_forward(const Tensor& batch, bool with_grad) const {
    int pi = projection_index();
    if (pi < 0) return forward(batch, with_grad);
    return run(batch, with_grad, pi);
}

void Model::freeze() {
    frozen_ = true;
    for (auto& p : params_) p.set_requires_grad(false);
}

void Model::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::uint64_t Model::param_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
        h = fnv1a64(p.data().data(), p.numel() * sizeof(float), h);
    }
    return h;
}

Model Model::clone_trainable() const {
    Model m = Model::build(specs_, input_shape_, 0);
    std::vector<std::vector<float>> vals;
    vals.reserve(params_.size());
    for (const auto& p : params_) vals.emplace_back(p.data().begin(), p.data().end());
    m.load_params(vals);
    return m;
}

void Model::load_params(const std::vector<std::vector<float>>& values) {
    if (frozen_) throw StateError("load_params: model is frozen");
    if (values.size() != params_.size()) {
        throw CompatibilityError("load_params: expected " + std::to_string(params_.size()) +
                                 " tensors, got " + std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != params_[i].numel()) {
            throw CompatibilityError("load_params: size mismatch on " + param_names_[i]);
        }
        std::copy(values[i].begin(), values[i].end(), params_[i].data_mut().begin());
    }
}

// --- checkpoint serialization -------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'D', 'K', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}
void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}
void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}
std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw FormatError("checkpoint truncated");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw FormatError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

nlohmann::json spec_to_json(const LayerSpec& s) {
    nlohmann::json j;
    j["kind"] = kind_name(s.kind);
    switch (s.kind) {
        case LayerKind::Conv:
            j["out_channels"] = s.out_channels;
            j["k"] = s.k;
            j["stride"] = s.stride;
            j["pad"] = s.pad;
            break;
        case LayerKind::Dense:
        case LayerKind::Projection:
            j["out_dim"] = s.out_dim;
            break;
        case LayerKind::Upsample:
            j["factor"] = s.factor;
            break;
        case LayerKind::Reshape:
            j["c"] = s.c;
            j["h"] = s.h;
            j["w"] = s.w;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec spec_from_json(const nlohmann::json& j) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "conv")
        return LayerSpec::Conv(j.at("out_channels"), j.at("k"), j.at("stride"), j.at("pad"));
    if (k == "dense") return LayerSpec::Dense(j.at("out_dim"));
    if (k == "relu") return LayerSpec::ReLU();
    if (k == "global_avg_pool") return LayerSpec::GlobalAvgPool();
    if (k == "flatten") return LayerSpec::Flatten();
    if (k == "projection") return LayerSpec::Projection(j.at("out_dim"));
    if (k == "upsample") return LayerSpec::Upsample(j.at("factor"));
    if (k == "reshape") return LayerSpec::Reshape(j.at("c"), j.at("h"), j.at("w"));
    throw FormatError("checkpoint: unknown layer kind '" + k + "'");
}

}  // namespace

void save_checkpoint(const Model& model, const Provenance& prov, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u64(os, model.fingerprint());
    put_u32(os, static_cast<std::uint32_t>(model.params().size()));
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const Tensor& p = model.params()[i];
        const std::string& name = model.param_names()[i];
        put_u16(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(static_cast<char>(p.ndim()));
        for (int d = 0; d < p.ndim(); ++d) put_u32(os, static_cast<std::uint32_t>(p.dim(d)));
        os.write(reinterpret_cast<const char*>(p.data().data()),
                 static_cast<std::streamsize>(p.numel() * sizeof(float)));
    }
    nlohmann::json j;
    j["task"] = prov.task;
    j["seed"] = prov.seed;
    j["epochs"] = prov.epochs;
    j["input_shape"] = model.input_shape();
    nlohmann::json arch = nlohmann::json::array();
    for (const auto& s : model.specs()) arch.push_back(spec_to_json(s));
    j["arch"] = arch;
    const std::string text = j.dump();
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw FormatError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad checkpoint magic in " + path);
    }
    const std::uint32_t version = get_u32(is);
    if (version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t fingerprint = get_u64(is);
    const std::uint32_t count = get_u32(is);

    std::vector<std::string> names(count);
    std::vector<std::vector<float>> values(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t nlen = get_u16(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        if (!is) throw FormatError("checkpoint truncated");
        const int ndims = is.get();
        if (ndims < 0) throw FormatError("checkpoint truncated");
        std::size_t numel = 1;
        for (int d = 0; d < ndims; ++d) numel *= get_u32(is);
        std::vector<float> payload(numel);
        is.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!is) throw FormatError("checkpoint truncated");
        names[t] = std::move(name);
        values[t] = std::move(payload);
    }
    const std::uint32_t jlen = get_u32(is);
    std::string text(jlen, '\0');
    is.read(text.data(), jlen);
    if (!is) throw FormatError("checkpoint truncated");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint provenance is not valid JSON: ") + e.what());
    }
    std::vector<LayerSpec> specs;
    for (const auto& js : j.at("arch")) specs.push_back(spec_from_json(js));
    Shape input_shape = j.at("input_shape").get<Shape>();

    LoadedCheckpoint out;
    out.model = Model::build(specs, input_shape, 0);
    if (out.model.fingerprint() != fingerprint) {
        throw FormatError("checkpoint fingerprint does not match its own architecture");
    }
    out.model.load_params(values);
    out.provenance.task = j.at("task").get<std::string>();
    out.provenance.seed = j.at("seed").get<std::uint64_t>();
    out.provenance.epochs = j.at("epochs").get<int>();
    return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::uint64_t expected_fingerprint) {
    LoadedCheckpoint c = load_checkpoint(path);
    if (c.model.fingerprint() != expected_fingerprint) {
        throw CompatibilityError("checkpoint " + path +
                                 " was saved from a different architecture");
    }
    return c;
}

}  // namespace adkd
