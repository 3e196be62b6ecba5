#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cat/autograd.hpp"
#include "cat/rng.hpp"
#include "cat/tensor.hpp"

// The three networks of the adversarial UDA setup:
//   g(·;θ_g): X → Z   feature extractor
//   f(·;θ_f): Z → Y   classifier (raw logits; softmax lives in the loss)
//   d(·;θ_d): Z → (0,1) domain discriminator (sigmoid, clamped)
// Discriminator input is z = g(x): d is typed Z → {0,1}, so the adversarial
// pass is d∘g.

namespace cat {

enum class Activation { relu, tanh };
// softmax_deferred marks "raw logits here, softmax inside the loss"; at
// forward time it behaves like none.
enum class OutputTransform { none, sigmoid, softmax_deferred };

inline constexpr double kDiscriminatorClamp = 1e-7;

struct MlpSpec {
    std::vector<std::size_t> layer_sizes;  // input dim first, output dim last
    Activation activation = Activation::relu;
    OutputTransform output = OutputTransform::none;

    void validate(const std::string& name) const;
    std::size_t in_dim() const { return layer_sizes.front(); }
    std::size_t out_dim() const { return layer_sizes.back(); }
    std::size_t n_layers() const { return layer_sizes.size() - 1; }

    bool operator==(const MlpSpec&) const = default;
};

struct LayerParams {
    Tensor W;  // [in x out]
    Tensor b;  // [out]
};
using NetParams = std::vector<LayerParams>;

struct ModelParams {
    MlpSpec spec_g, spec_f, spec_d;
    NetParams g, f, d;
    std::uint64_t seed = 0;
};

// Xavier-uniform weights (|w| <= sqrt(6/(fan_in+fan_out))), zero biases;
// fully determined by seed, drawn in g → f → d order.
ModelParams init_params(const MlpSpec& spec_g, const MlpSpec& spec_f, const MlpSpec& spec_d,
                        std::uint64_t seed);

// Initialize a single network from an already-seeded generator (used for the
// standalone domain-probe as well as by init_params for g, f, d in order).
NetParams init_net_params(const MlpSpec& spec, Rng& rng);

// --- plain forward passes (no tape; bitwise-identical to the tape path) ---

Tensor affine_plain(const Tensor& x, const Tensor& W, const Tensor& b);
Tensor mlp_forward(const MlpSpec& spec, const NetParams& p, const Tensor& x);

Tensor extract_features(const ModelParams& params, const Tensor& x);   // [batch x d_z]
Tensor classify(const ModelParams& params, const Tensor& z);           // [batch x C] logits
Tensor discriminate(const ModelParams& params, const Tensor& z);       // [batch x 1] in (0,1)

// argmax per row, ties toward the smaller index
std::vector<int> argmax_rows(const Tensor& logits);

// --- tape forward passes ---

// Parameter leaves for one network, in layer order.
struct TapeNet {
    std::vector<NodeId> Ws, bs;
};
TapeNet lift_net(Tape& t, const NetParams& p, bool requires_grad = true);
NodeId mlp_on_tape(Tape& t, const MlpSpec& spec, const TapeNet& net, NodeId x);

// Parameter tensors in a fixed order (W0,b0,W1,b1,... per net; nets g,f,d).
std::vector<Tensor*> net_tensors(NetParams& p);
std::vector<const Tensor*> net_tensors(const NetParams& p);
std::vector<Tensor*> all_tensors(ModelParams& p);

// --- checkpoint I/O: single JSON document, arrays base64 little-endian f64;
// round-trips bitwise ---

std::string checkpoint_to_json(const ModelParams& params);
ModelParams checkpoint_from_json(const std::string& json_text);
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

// base64 of raw bytes (shared by checkpoints and bank snapshots)
std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);
// f64 <-> little-endian bytes
std::vector<unsigned char> doubles_to_le_bytes(const std::vector<double>& v);
std::vector<double> doubles_from_le_bytes(const std::vector<unsigned char>& bytes);

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& s);
std::string output_name(OutputTransform o);
OutputTransform output_from_name(const std::string& s);

}  // namespace cat
