#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cat/losses.hpp"
#include "cat/models.hpp"
#include "cat/tensor.hpp"

// Target-domain feature bank B: dense ids 0..M-1, each holding that sample's
// latest feature z_t = g(x_t). Retrieval is brute-force exact top-K /
// bottom-K over cosine similarity; ties break by ascending id so runs are
// bit-reproducible. Zero-norm entries score cosine 0 (neutral) rather than
// erroring: an all-relu feature extractor can legitimately emit a zero row.

namespace cat {

class FeatureBank {
public:
    // takes ownership of pre-computed features [M x d_z]
    explicit FeatureBank(Tensor feats);

    // one full forward pass of g over all target samples with current params
    static FeatureBank init(const ModelParams& params, const Tensor& target_x);

    std::size_t size() const { return feats_.rows(); }   // M
    std::size_t dim() const { return feats_.cols(); }    // d_z
    std::uint64_t version() const { return version_; }
    const Tensor& features() const { return feats_; }
    Tensor feature(std::size_t id) const;

    // entries[ids[j]] = momentum*old + (1-momentum)*feats[j]; momentum 0 is
    // exact replacement. Bumps version once per call.
    void update(const std::vector<std::size_t>& ids, const Tensor& feats,
                double momentum = 0.0);

    // K entries with highest cosine similarity, descending (ties: ascending id)
    std::vector<Neighbor> query_close(const Tensor& anchor, std::size_t K) const;
    // K entries with lowest cosine similarity, ascending (ties: ascending id)
    std::vector<Neighbor> query_distant(const Tensor& anchor, std::size_t K) const;
    // one NeighborSets{close, distant} per anchor row
    std::vector<NeighborSets> build_sets(const Tensor& anchors, std::size_t K) const;

    // JSON snapshot in the checkpoint container style (base64 LE f64)
    std::string to_json() const;
    static FeatureBank from_json(const std::string& text);

private:
    std::vector<Neighbor> query(const double* anchor, std::size_t K, bool closest) const;

    Tensor feats_;               // [M x d_z]
    std::vector<double> norms_;  // cached row l2 norms
    std::uint64_t version_ = 0;
};

}  // namespace cat
