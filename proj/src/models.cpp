#include "cat/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cat/kernels.hpp"
#include "cat/rng.hpp"

using nlohmann::json;

namespace cat {

void MlpSpec::validate(const std::string& name) const {
    if (layer_sizes.size() < 2)
        throw ConfigError(name + ": layer_sizes needs at least 2 entries, got " +
                          std::to_string(layer_sizes.size()));
    for (std::size_t s : layer_sizes)
        if (s == 0) throw ConfigError(name + ": layer sizes must be positive");
}

ModelParams init_params(const MlpSpec& spec_g, const MlpSpec& spec_f, const MlpSpec& spec_d,
                        std::uint64_t seed) {
    spec_g.validate("spec_g");
    spec_f.validate("spec_f");
    spec_d.validate("spec_d");
    if (spec_f.in_dim() != spec_g.out_dim())
        throw ConfigError("init_params: spec_f input dim (" + std::to_string(spec_f.in_dim()) +
                          ") != spec_g output dim (" + std::to_string(spec_g.out_dim()) + ")");
    if (spec_d.in_dim() != spec_g.out_dim())
        throw ConfigError("init_params: spec_d input dim (" + std::to_string(spec_d.in_dim()) +
                          ") != spec_g output dim (" + std::to_string(spec_g.out_dim()) + ")");
    if (spec_d.output != OutputTransform::sigmoid || spec_d.out_dim() != 1)
        throw ConfigError("init_params: discriminator must end with sigmoid and output dim 1");

    Rng rng(seed);
    ModelParams p;
    p.spec_g = spec_g;
    p.spec_f = spec_f;
    p.spec_d = spec_d;
    p.seed = seed;
    p.g = init_net_params(spec_g, rng);
    p.f = init_net_params(spec_f, rng);
    p.d = init_net_params(spec_d, rng);
    return p;
}

NetParams init_net_params(const MlpSpec& spec, Rng& rng) {
    spec.validate("init_net_params");
    NetParams net;
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        std::size_t fan_in = spec.layer_sizes[l], fan_out = spec.layer_sizes[l + 1];
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor W({fan_in, fan_out});
        for (std::size_t i = 0; i < W.size(); ++i) W[i] = rng.uniform(-bound, bound);
        net.push_back(LayerParams{std::move(W), Tensor({fan_out})});
    }
    return net;
}

Tensor affine_plain(const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.rank() != 2 || W.rank() != 2 || b.rank() != 1 || x.cols() != W.rows() ||
        b.size() != W.cols())
        throw DimensionError("affine_plain: shapes " + shape_str(x.shape()) + " x " +
                             shape_str(W.shape()) + " + " + shape_str(b.shape()));
    std::size_t batch = x.rows(), in = x.cols(), out = W.cols();
    Tensor y({batch, out});
    for (std::size_t i = 0; i < batch; ++i) std::copy(b.data(), b.data() + out, y.row_ptr(i));
    kernels::gemm_nn(x.data(), W.data(), y.data(), batch, in, out);
    return y;
}

namespace {
double stable_sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
}
}  // namespace

Tensor mlp_forward(const MlpSpec& spec, const NetParams& p, const Tensor& x) {
    if (p.size() != spec.n_layers())
        throw InternalError("mlp_forward: params/spec layer count mismatch");
    if (x.rank() != 2 || x.cols() != spec.in_dim())
        throw DimensionError("mlp_forward: input shape " + shape_str(x.shape()) +
                             " does not match spec input dim " + std::to_string(spec.in_dim()));
    Tensor h = x;
    for (std::size_t l = 0; l < p.size(); ++l) {
        h = affine_plain(h, p[l].W, p[l].b);
        if (l + 1 < p.size()) {
            if (spec.activation == Activation::relu) {
                Tensor a(h.shape());
                kernels::relu_fwd(h.data(), a.data(), h.size());
                h = std::move(a);
            } else {
                for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i]);
            }
        }
    }
    if (spec.output == OutputTransform::sigmoid)
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = std::clamp(stable_sigmoid(h[i]), kDiscriminatorClamp,
                              1.0 - kDiscriminatorClamp);
    return h;
}

Tensor extract_features(const ModelParams& params, const Tensor& x) {
    return mlp_forward(params.spec_g, params.g, x);
}

Tensor classify(const ModelParams& params, const Tensor& z) {
    return mlp_forward(params.spec_f, params.f, z);
}

Tensor discriminate(const ModelParams& params, const Tensor& z) {
    return mlp_forward(params.spec_d, params.d, z);
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2)
        throw DimensionError("argmax_rows: expected rank 2, got " + shape_str(logits.shape()));
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* row = logits.row_ptr(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (row[j] > row[best]) best = j;  // strict: ties keep the smaller index
        out[i] = static_cast<int>(best);
    }
    return out;
}

TapeNet lift_net(Tape& t, const NetParams& p, bool requires_grad) {
    TapeNet net;
    for (const LayerParams& lp : p) {
        net.Ws.push_back(t.leaf(lp.W, requires_grad));
        net.bs.push_back(t.leaf(lp.b, requires_grad));
    }
    return net;
}

NodeId mlp_on_tape(Tape& t, const MlpSpec& spec, const TapeNet& net, NodeId x) {
    if (net.Ws.size() != spec.n_layers())
        throw InternalError("mlp_on_tape: params/spec layer count mismatch");
    NodeId h = x;
    for (std::size_t l = 0; l < net.Ws.size(); ++l) {
        h = ops::affine(t, h, net.Ws[l], net.bs[l]);
        if (l + 1 < net.Ws.size())
            h = spec.activation == Activation::relu ? ops::relu(t, h) : ops::tanh(t, h);
    }
    if (spec.output == OutputTransform::sigmoid)
        h = ops::sigmoid_clamped(t, h, kDiscriminatorClamp);
    return h;
}

std::vector<Tensor*> net_tensors(NetParams& p) {
    std::vector<Tensor*> out;
    for (LayerParams& lp : p) {
        out.push_back(&lp.W);
        out.push_back(&lp.b);
    }
    return out;
}

std::vector<const Tensor*> net_tensors(const NetParams& p) {
    std::vector<const Tensor*> out;
    for (const LayerParams& lp : p) {
        out.push_back(&lp.W);
        out.push_back(&lp.b);
    }
    return out;
}

std::vector<Tensor*> all_tensors(ModelParams& p) {
    std::vector<Tensor*> out;
    for (NetParams* net : {&p.g, &p.f, &p.d})
        for (Tensor* t : net_tensors(*net)) out.push_back(t);
    return out;
}

// --- base64 ---

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kB64[(v >> 18) & 63]);
        out.push_back(kB64[(v >> 12) & 63]);
        out.push_back(kB64[(v >> 6) & 63]);
        out.push_back(kB64[v & 63]);
    }
    if (i + 1 == bytes.size()) {
        unsigned v = bytes[i] << 16;
        out.push_back(kB64[(v >> 18) & 63]);
        out.push_back(kB64[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (i + 2 == bytes.size()) {
        unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kB64[(v >> 18) & 63]);
        out.push_back(kB64[(v >> 12) & 63]);
        out.push_back(kB64[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw DataError("base64: length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int pad = 0;
        unsigned v = 0;
        for (int j = 0; j < 4; ++j) {
            char c = text[i + j];
            if (c == '=') {
                if (i + 4 != text.size() || j < 2) throw DataError("base64: stray padding");
                ++pad;
                v <<= 6;
                continue;
            }
            if (pad > 0) throw DataError("base64: data after padding");
            int x = val(c);
            if (x < 0) throw DataError(std::string("base64: invalid character '") + c + "'");
            v = (v << 6) | static_cast<unsigned>(x);
        }
        out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
    }
    return out;
}

std::vector<unsigned char> doubles_to_le_bytes(const std::vector<double>& v) {
    std::vector<unsigned char> bytes;
    bytes.reserve(v.size() * 8);
    for (double d : v) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(d);
        for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<unsigned char>((u >> (8 * k)) & 0xff));
    }
    return bytes;
}

std::vector<double> doubles_from_le_bytes(const std::vector<unsigned char>& bytes) {
    if (bytes.size() % 8 != 0) throw DataError("f64 array: byte length not a multiple of 8");
    std::vector<double> v(bytes.size() / 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t u = 0;
        for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(bytes[i * 8 + k]) << (8 * k);
        v[i] = std::bit_cast<double>(u);
    }
    return v;
}

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

std::string output_name(OutputTransform o) {
    switch (o) {
        case OutputTransform::none: return "none";
        case OutputTransform::sigmoid: return "sigmoid";
        case OutputTransform::softmax_deferred: return "softmax_deferred";
    }
    return "?";
}

OutputTransform output_from_name(const std::string& s) {
    if (s == "none") return OutputTransform::none;
    if (s == "sigmoid") return OutputTransform::sigmoid;
    if (s == "softmax_deferred") return OutputTransform::softmax_deferred;
    throw ConfigError("unknown output transform '" + s +
                      "' (expected none, sigmoid, or softmax_deferred)");
}

// --- checkpoint JSON ---

namespace {

json spec_to_json(const MlpSpec& s) {
    return json{{"layer_sizes", s.layer_sizes},
                {"activation", activation_name(s.activation)},
                {"output", output_name(s.output)}};
}

MlpSpec spec_from_json(const json& j, const std::string& name) {
    if (!j.is_object()) throw DataError("checkpoint: " + name + " is not an object");
    MlpSpec s;
    s.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    s.activation = activation_from_name(j.at("activation").get<std::string>());
    s.output = output_from_name(j.at("output").get<std::string>());
    s.validate(name);
    return s;
}

json array_to_json(const Tensor& t) {
    return json{{"shape", t.shape()}, {"data", base64_encode(doubles_to_le_bytes(t.vec()))}};
}

Tensor array_from_json(const json& j, const std::string& name) {
    auto shape = j.at("shape").get<std::vector<std::size_t>>();
    auto data = doubles_from_le_bytes(base64_decode(j.at("data").get<std::string>()));
    std::size_t want = 1;
    for (std::size_t s : shape) want *= s;
    if (want != data.size())
        throw DataError("checkpoint array " + name + ": shape " + shape_str(shape) +
                        " does not match " + std::to_string(data.size()) + " values");
    return Tensor(std::move(shape), std::move(data));
}

void net_arrays_to_json(json& arrays, const std::string& prefix, const NetParams& net) {
    for (std::size_t l = 0; l < net.size(); ++l) {
        arrays[prefix + "." + std::to_string(l) + ".W"] = array_to_json(net[l].W);
        arrays[prefix + "." + std::to_string(l) + ".b"] = array_to_json(net[l].b);
    }
}

NetParams net_arrays_from_json(const json& arrays, const std::string& prefix,
                               const MlpSpec& spec) {
    NetParams net;
    for (std::size_t l = 0; l < spec.n_layers(); ++l) {
        std::string kw = prefix + "." + std::to_string(l) + ".W";
        std::string kb = prefix + "." + std::to_string(l) + ".b";
        if (!arrays.contains(kw) || !arrays.contains(kb))
            throw DataError("checkpoint: missing array " + kw + " or " + kb);
        Tensor W = array_from_json(arrays.at(kw), kw);
        Tensor b = array_from_json(arrays.at(kb), kb);
        if (W.rank() != 2 || W.rows() != spec.layer_sizes[l] ||
            W.cols() != spec.layer_sizes[l + 1] || b.rank() != 1 || b.size() != W.cols())
            throw DataError("checkpoint: array shapes for " + kw + " do not chain with the spec");
        net.push_back(LayerParams{std::move(W), std::move(b)});
    }
    return net;
}

}  // namespace

std::string checkpoint_to_json(const ModelParams& params) {
    json arrays = json::object();
    net_arrays_to_json(arrays, "g", params.g);
    net_arrays_to_json(arrays, "f", params.f);
    net_arrays_to_json(arrays, "d", params.d);
    json doc{{"format", "cat-uda-checkpoint-v1"},
             {"seed", params.seed},
             {"spec_g", spec_to_json(params.spec_g)},
             {"spec_f", spec_to_json(params.spec_f)},
             {"spec_d", spec_to_json(params.spec_d)},
             {"arrays", std::move(arrays)}};
    return doc.dump(2) + "\n";
}

ModelParams checkpoint_from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "cat-uda-checkpoint-v1")
            throw DataError("checkpoint: unknown format '" + doc.value("format", "") + "'");
        ModelParams p;
        p.seed = doc.at("seed").get<std::uint64_t>();
        p.spec_g = spec_from_json(doc.at("spec_g"), "spec_g");
        p.spec_f = spec_from_json(doc.at("spec_f"), "spec_f");
        p.spec_d = spec_from_json(doc.at("spec_d"), "spec_d");
        const json& arrays = doc.at("arrays");
        p.g = net_arrays_from_json(arrays, "g", p.spec_g);
        p.f = net_arrays_from_json(arrays, "f", p.spec_f);
        p.d = net_arrays_from_json(arrays, "d", p.spec_d);
        return p;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: missing or mistyped field: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << checkpoint_to_json(params);
    if (!out) throw DataError("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace cat
