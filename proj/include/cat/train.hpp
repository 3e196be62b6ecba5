#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cat/bank.hpp"
#include "cat/data.hpp"
#include "cat/losses.hpp"
#include "cat/models.hpp"

// Algorithm 1's optimization loop: GRL scheduling, SGD with momentum,
// per-epoch evaluation, proxy A-distance, and the λ/K ablation grid.

namespace cat {

enum class Mode { source_only, dann, dann_cat, dann_kld };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct GrlSchedule {
    enum class Kind { constant, dann_ramp };
    Kind kind = Kind::dann_ramp;
    double mu = 1.0;  // used by constant
};

// constant(μ) → μ; dann_ramp → 2/(1+e^{-10p}) - 1.
// p outside [0,1] is clamped with a warning.
double grl_schedule(const GrlSchedule& s, double progress);

struct DatasetSpec {
    std::string kind = "two_moons";  // "two_moons" | "blobs"
    // two_moons
    std::size_t n = 2000;  // per domain
    double noise_sd = 0.1;
    // blobs
    int n_classes = 3;
    std::size_t n_per_class = 300;
    double sd = 0.3;
    std::vector<std::vector<double>> centers = {{0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}};
    // source → target shift
    double rotation_deg = 30.0;
    std::vector<double> translate = {0.0, 0.0};
};

struct ArchSpec {
    std::vector<std::size_t> g_hidden = {64, 64};
    std::size_t feature_dim = 4;
    std::vector<std::size_t> d_hidden = {16};
    Activation activation = Activation::relu;
};

MlpSpec make_g_spec(const ArchSpec& a, std::size_t in_dim);
MlpSpec make_f_spec(const ArchSpec& a, int n_classes);
MlpSpec make_d_spec(const ArchSpec& a);

struct RunConfig {
    Mode mode = Mode::dann_cat;
    double lambda = 1.0;
    std::size_t K = 5;
    std::size_t batch_size = 32;
    std::size_t epochs = 50;
    double lr = 0.002;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    double grad_clip = 5.0;
    GrlSchedule grl;
    double bank_momentum = 0.0;
    bool normalize_features = false;  // l2-normalize anchors/neighbors in L_con
    std::uint64_t seed = 1;
    std::size_t adist_interval = 10;  // epochs between A-distance probes (0: ends only)
    DatasetSpec dataset;
    ArchSpec arch;

    void validate() const;
};

struct MetricsRecord {
    std::size_t epoch = 0;
    double l_cls = 0.0, l_d = 0.0, l_con = 0.0, total = 0.0;
    double source_acc = 0.0, target_acc = 0.0;
    std::optional<double> a_distance;  // empty CSV cell when not computed
    std::int64_t wall_ms = 0;
};

// Thrown when a step produces a non-finite loss/gradient; carries the
// breakdown for the diagnostic dump.
struct NonFiniteLossError : Error {
    LossBreakdown breakdown;
    std::size_t epoch = 0, step = 0;
    NonFiniteLossError(const std::string& msg, LossBreakdown b, std::size_t epoch_,
                       std::size_t step_)
        : Error(msg), breakdown(b), epoch(epoch_), step(step_) {}
};

struct DatasetPair {
    LabeledDataset source, target;
};
// Both domains from the master seed's data streams; target = shifted copy.
DatasetPair make_datasets(const DatasetSpec& spec, std::uint64_t master_seed);

// SGD-with-momentum velocities, parallel to all_tensors(params).
struct SgdState {
    std::vector<Tensor> velocity;
    static SgdState init(ModelParams& params);
};

// One Algorithm-1 step: forwards, losses, backward, per-network clipped SGD
// update, then bank update with detached z_t. `bank` may be null for modes
// that do not maintain one.
LossBreakdown train_step(ModelParams& params, SgdState& opt, FeatureBank* bank,
                         const DomainBatch& batch, const RunConfig& cfg, double mu);

struct FitResult {
    ModelParams params;
    std::vector<MetricsRecord> metrics;
};

// Full deterministic run: record 0 is the pre-training evaluation; records
// 1..epochs hold per-epoch mean losses plus evaluation.
FitResult fit(const RunConfig& cfg);

// fraction of rows with argmax(classify(g(x))) == y (ties → smaller index)
double evaluate(const ModelParams& params, const LabeledDataset& ds);

// Eq. 12: max(0, 2(1-2ε))
double a_distance_from_error(double eps);
// Proxy A-distance: 50/50 split per domain, probe [d_z,32,1] sigmoid trained
// exactly 10 epochs (SGD lr 0.01, momentum 0.9, batch 64, clip 5.0), ε = test
// error at threshold 0.5. Needs ≥ 20 rows per domain.
double a_distance(const Tensor& feats_s, const Tensor& feats_t, std::uint64_t seed);

struct AblationRow {
    double lambda = 0.0;
    std::size_t K = 0;
    double mean_target_acc = 0.0;
    double std_target_acc = 0.0;
    std::size_t n_seeds = 0;  // seeds that finished
    bool failed = false;      // any seed aborted
    std::string error;        // first failure message
};

// One dann_cat fit per (λ, K, seed); rows in the given (λ, K) order.
// jobs > 1 runs fits concurrently; row order is unaffected.
std::vector<AblationRow> run_ablation(const RunConfig& base_cfg, const std::vector<double>& lambdas,
                                      const std::vector<std::size_t>& Ks,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::size_t jobs = 1);

// metrics CSV (exact header epoch,l_cls,l_d,l_con,total,source_acc,target_acc,
// a_distance,wall_ms); round-trips through read_metrics_csv
std::string metrics_to_csv(const std::vector<MetricsRecord>& records);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

// ablation CSV: lambda,K,mean_target_acc,std_target_acc,n_seeds,status
std::string ablation_to_csv(const std::vector<AblationRow>& rows);
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace cat
