#pragma once

#include <cstddef>
#include <vector>

#include "cat/autograd.hpp"
#include "cat/tensor.hpp"

// Training objectives: source cross-entropy (Eq. 1), domain adversarial
// (Eq. 2), the CAT contrastive loss (Eq. 11 / Algorithm 1, unsquared l2),
// their λ-weighted combination, derivation diagnostics (Eqs. 4, 8-10), and a
// KLD-alignment baseline. Each loss has a pure value form and a tape form
// whose forward value matches the pure form bitwise.

namespace cat {

struct Neighbor {
    std::size_t id;      // bank id
    Tensor feature;      // [d_z], a snapshot: gradient-constant
    double cosine = 0.0; // similarity to the anchor at query time
};

struct NeighborSets {
    std::vector<Neighbor> close;    // C_i, descending cosine
    std::vector<Neighbor> distant;  // D_i, ascending cosine
};

struct LossBreakdown {
    double l_cls = 0.0;
    double l_d = 0.0;
    double l_con = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

// --- pure value forms ---

// mean over batch of -log softmax(logits)[label]; label outside [0,C) → DataError
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// -mean(log d_src) - mean(log(1-d_tgt)); source labeled 1, target 0.
// Entries outside (0,1) → InternalError (the clamp upstream failed).
double domain_adversarial_loss(const Tensor& d_src, const Tensor& d_tgt);

// Eq. 4 softmax over bank dot products; diagnostic, not on the gradient path
Tensor similarity_softmax(const Tensor& anchor, const Tensor& bank_feats);

// Eq. 9: Σ_C log p - Σ_D log p via Eq. 4 probabilities; cross-checked against
// the Eq. 10 dot-product form (equal when |C| == |D|) → InternalError on
// disagreement, PreconditionError on unequal set sizes.
double log_likelihood_ratio(const Tensor& anchor, const NeighborSets& sets,
                            const Tensor& bank_feats);

// Algorithm 1: (1/N') Σ_i [Σ_{n∈C_i} ||z_s-z_t^n||₂ - Σ_{m∈D_i} ||z_s-z_t^m||₂]
double contrastive_loss(const Tensor& z_s_batch, const std::vector<NeighborSets>& sets);

// total = l_cls + l_d + λ·l_con; λ < 0 → ConfigError
LossBreakdown total_loss(double l_cls, double l_d, double l_con, double lambda);

// KL between diagonal Gaussians moment-matched to the two batches (population
// moments, variances floored at 1e-6), averaged over feature dimensions.
// Batches need ≥ 2 rows each → PreconditionError.
double kld_alignment_loss(const Tensor& z_s_batch, const Tensor& z_t_batch);

inline constexpr double kVarianceFloor = 1e-6;

// --- tape forms ---

NodeId cross_entropy_on_tape(Tape& t, NodeId logits, const std::vector<int>& labels);
NodeId domain_adversarial_on_tape(Tape& t, NodeId d_src, NodeId d_tgt);
// gradient flows into the anchors only; set features are constants
NodeId contrastive_on_tape(Tape& t, NodeId z_s_batch, const std::vector<NeighborSets>& sets);
NodeId kld_on_tape(Tape& t, NodeId z_s_batch, NodeId z_t_batch);

}  // namespace cat
