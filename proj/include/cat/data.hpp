#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cat/rng.hpp"
#include "cat/tensor.hpp"

// Deterministic synthetic two-domain datasets and the unpaired minibatch
// sampler. All generators are pure functions of (config, seed).

namespace cat {

enum class DomainTag { source, target };

struct LabeledDataset {
    Tensor x;            // [N x d]
    std::vector<int> y;  // [N], values in [0, n_classes)
    int n_classes = 0;
    DomainTag domain = DomainTag::source;

    std::size_t n() const { return x.rows(); }
    std::size_t dim() const { return x.cols(); }
    void validate() const;
};

// One unpaired minibatch: source and target halves sampled independently.
// The target half carries ids only; target labels never enter the training path.
struct DomainBatch {
    Tensor xs;                            // [N' x d]
    std::vector<int> ys;                  // [N']
    Tensor xt;                            // [N' x d]
    std::vector<std::size_t> target_ids;  // [N'], bank ids
};

// Interleaved half-circles, n/2 points per class, Gaussian noise noise_sd.
// Class 0: (cos t, sin t); class 1: (1 - cos t, 0.5 - sin t), t in [0, pi].
LabeledDataset gen_two_moons(std::size_t n, double noise_sd, std::uint64_t seed);

// Rotation about the origin (2-D only) then translation; labels kept, no
// fresh noise. `seed` is accepted for interface symmetry and unused.
LabeledDataset shift_domain(const LabeledDataset& ds, double rotation_deg,
                            const Tensor& translate, std::uint64_t seed);

// Isotropic Gaussian clusters; duplicate centers are allowed.
LabeledDataset gen_blobs(int n_classes, std::size_t n_per_class, const Tensor& centers,
                         double sd, std::uint64_t seed);

// CSV: header x0..x{d-1},y,domain; values round-trip bitwise.
void export_dataset_csv(const std::string& path, const LabeledDataset& ds);
LabeledDataset import_dataset_csv(const std::string& path);

// Uniform without replacement within independent per-domain epoch
// permutations; drop-last batching. Epochs are defined by the target
// permutation.
class BatchSampler {
public:
    BatchSampler(std::size_t n_source, std::size_t n_target, std::size_t batch_size, Rng rng);

    DomainBatch next_batch(const LabeledDataset& source, const LabeledDataset& target);

    std::size_t batch_size() const { return batch_size_; }
    std::size_t batches_per_epoch() const { return n_target_ / batch_size_; }
    std::size_t target_epochs_completed() const { return target_epochs_; }

private:
    std::size_t n_source_, n_target_, batch_size_;
    Rng rng_;
    std::vector<std::size_t> src_perm_, tgt_perm_;
    std::size_t src_pos_ = 0, tgt_pos_ = 0;
    std::size_t target_epochs_ = 0;
};

}  // namespace cat
