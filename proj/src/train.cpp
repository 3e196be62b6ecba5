#include "cat/train.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>
#include <utility>

#include "cat/kernels.hpp"
#include "cat/log.hpp"

namespace cat {

namespace {

constexpr const char* kMetricsHeader =
    "epoch,l_cls,l_d,l_con,total,source_acc,target_acc,a_distance,wall_ms";
constexpr const char* kAblationHeader = "lambda,K,mean_target_acc,std_target_acc,n_seeds,status";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::size_t parse_size(const std::string& s, const std::string& where) {
    std::size_t v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError(where + ": bad integer '" + s + "'");
    return v;
}

std::int64_t parse_i64(const std::string& s, const std::string& where) {
    std::int64_t v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError(where + ": bad integer '" + s + "'");
    return v;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << text;
    out.flush();
    if (!out) throw DataError("write failed: " + path);
}

// unit-l2 copy of a bank feature; same arithmetic as ops::row_normalize
Tensor unit_copy(const Tensor& v) {
    Tensor out = v;
    double n = std::sqrt(kernels::sumsq(out.data(), out.size()));
    if (n == 0.0) throw DegenerateInputError("normalize_features: zero-norm bank feature");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= n;
    return out;
}

// per-layer gradient tensors in net_tensors order (W0, b0, W1, b1, ...)
std::vector<Tensor> collect_grads(const Tape& t, const TapeNet& net) {
    std::vector<Tensor> gs;
    gs.reserve(net.Ws.size() * 2);
    for (std::size_t l = 0; l < net.Ws.size(); ++l) {
        gs.push_back(t.gradient(net.Ws[l]));
        gs.push_back(t.gradient(net.bs[l]));
    }
    return gs;
}

// global l2 norm over one network's gradients; scales them down to `clip` if
// exceeded. Returns false when the norm is non-finite.
bool clip_net_grads(std::vector<Tensor>& grads, double clip) {
    double ss = 0.0;
    for (const Tensor& g : grads) ss += kernels::sumsq(g.data(), g.size());
    double norm = std::sqrt(ss);
    if (!std::isfinite(norm)) return false;
    if (norm > clip) {
        double scale = clip / norm;
        for (Tensor& g : grads) kernels::scal(scale, g.data(), g.size());
    }
    return true;
}

Tensor centers_tensor(const DatasetSpec& spec) {
    if (spec.centers.empty()) throw ConfigError("dataset: blobs needs at least one center");
    std::size_t dim = spec.centers.front().size();
    if (dim == 0) throw ConfigError("dataset: blob centers must be non-empty points");
    Tensor c({spec.centers.size(), dim});
    for (std::size_t i = 0; i < spec.centers.size(); ++i) {
        if (spec.centers[i].size() != dim)
            throw ConfigError("dataset: blob center " + std::to_string(i) + " has dim " +
                              std::to_string(spec.centers[i].size()) + ", expected " +
                              std::to_string(dim));
        for (std::size_t j = 0; j < dim; ++j) c.at(i, j) = spec.centers[i][j];
    }
    return c;
}

std::size_t dataset_dim(const DatasetSpec& spec) {
    return spec.kind == "blobs" && !spec.centers.empty() ? spec.centers.front().size() : 2;
}

void validate_dataset_spec(const DatasetSpec& spec) {
    if (spec.kind != "two_moons" && spec.kind != "blobs")
        throw ConfigError("dataset: kind must be 'two_moons' or 'blobs', got '" + spec.kind + "'");
    if (spec.kind == "two_moons") {
        if (spec.n == 0 || spec.n % 2 != 0)
            throw ConfigError("dataset: two_moons n must be positive and even, got " +
                              std::to_string(spec.n));
        if (!(spec.noise_sd >= 0.0))
            throw ConfigError("dataset: noise_sd must be >= 0, got " + format_f64(spec.noise_sd));
    } else {
        if (spec.n_classes < 2)
            throw ConfigError("dataset: blobs n_classes must be >= 2, got " +
                              std::to_string(spec.n_classes));
        if (spec.n_per_class == 0) throw ConfigError("dataset: blobs n_per_class must be >= 1");
        if (!(spec.sd > 0.0))
            throw ConfigError("dataset: blobs sd must be > 0, got " + format_f64(spec.sd));
        if (spec.centers.size() != static_cast<std::size_t>(spec.n_classes))
            throw ConfigError("dataset: " + std::to_string(spec.centers.size()) +
                              " blob centers for " + std::to_string(spec.n_classes) + " classes");
        centers_tensor(spec);  // shape checks
    }
    std::size_t dim = dataset_dim(spec);
    if (spec.translate.size() != dim)
        throw ConfigError("dataset: translate has dim " + std::to_string(spec.translate.size()) +
                          ", data has dim " + std::to_string(dim));
    if (spec.rotation_deg != 0.0 && dim != 2)
        throw ConfigError("dataset: rotation requires 2-D data, got dim " + std::to_string(dim));
}

}  // namespace

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::source_only: return "source_only";
        case Mode::dann: return "dann";
        case Mode::dann_cat: return "dann_cat";
        case Mode::dann_kld: return "dann_kld";
    }
    throw InternalError("mode_name: unhandled mode");
}

Mode mode_from_name(const std::string& s) {
    if (s == "source_only") return Mode::source_only;
    if (s == "dann") return Mode::dann;
    if (s == "dann_cat") return Mode::dann_cat;
    if (s == "dann_kld") return Mode::dann_kld;
    throw ConfigError("unknown mode '" + s +
                      "' (expected source_only, dann, dann_cat, or dann_kld)");
}

double grl_schedule(const GrlSchedule& s, double progress) {
    if (s.kind == GrlSchedule::Kind::constant) {
        if (s.mu < 0.0)
            throw ConfigError("grl_schedule: constant mu must be >= 0, got " + format_f64(s.mu));
        return s.mu;
    }
    double p = progress;
    if (!(p >= 0.0 && p <= 1.0)) {
        log::warn("grl_schedule: progress " + format_f64(progress) + " clamped to [0,1]");
        p = std::clamp(p, 0.0, 1.0);
    }
    return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

MlpSpec make_g_spec(const ArchSpec& a, std::size_t in_dim) {
    if (in_dim == 0) throw ConfigError("make_g_spec: input dim must be >= 1");
    MlpSpec s;
    s.layer_sizes.push_back(in_dim);
    s.layer_sizes.insert(s.layer_sizes.end(), a.g_hidden.begin(), a.g_hidden.end());
    s.layer_sizes.push_back(a.feature_dim);
    s.activation = a.activation;
    s.output = OutputTransform::none;
    s.validate("g_spec");
    return s;
}

MlpSpec make_f_spec(const ArchSpec& a, int n_classes) {
    if (n_classes < 2)
        throw ConfigError("make_f_spec: n_classes must be >= 2, got " + std::to_string(n_classes));
    MlpSpec s;
    s.layer_sizes = {a.feature_dim, static_cast<std::size_t>(n_classes)};
    s.activation = a.activation;
    s.output = OutputTransform::softmax_deferred;
    s.validate("f_spec");
    return s;
}

MlpSpec make_d_spec(const ArchSpec& a) {
    MlpSpec s;
    s.layer_sizes.push_back(a.feature_dim);
    s.layer_sizes.insert(s.layer_sizes.end(), a.d_hidden.begin(), a.d_hidden.end());
    s.layer_sizes.push_back(1);
    s.activation = a.activation;
    s.output = OutputTransform::sigmoid;
    s.validate("d_spec");
    return s;
}

void RunConfig::validate() const {
    if (!(lambda >= 0.0))
        throw ConfigError("config: lambda must be >= 0, got " + format_f64(lambda));
    if (mode == Mode::source_only && lambda != 0.0)
        throw ConfigError("config: mode source_only requires lambda == 0, got " +
                          format_f64(lambda));
    if (K == 0) throw ConfigError("config: K must be >= 1");
    if (batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
    if (mode == Mode::dann_kld && batch_size < 2)
        throw ConfigError("config: dann_kld needs batch_size >= 2 for per-batch moments");
    if (!(lr > 0.0)) throw ConfigError("config: lr must be > 0, got " + format_f64(lr));
    if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0))
        throw ConfigError("config: sgd_momentum must be in [0,1), got " +
                          format_f64(sgd_momentum));
    if (!(weight_decay >= 0.0))
        throw ConfigError("config: weight_decay must be >= 0, got " + format_f64(weight_decay));
    if (!(grad_clip > 0.0))
        throw ConfigError("config: grad_clip must be > 0, got " + format_f64(grad_clip));
    if (!(bank_momentum >= 0.0 && bank_momentum < 1.0))
        throw ConfigError("config: bank_momentum must be in [0,1), got " +
                          format_f64(bank_momentum));
    if (grl.kind == GrlSchedule::Kind::constant && !(grl.mu >= 0.0))
        throw ConfigError("config: grl.mu must be >= 0, got " + format_f64(grl.mu));
    validate_dataset_spec(dataset);
    if (arch.feature_dim == 0) throw ConfigError("config: feature_dim must be >= 1");
    for (std::size_t h : arch.g_hidden)
        if (h == 0) throw ConfigError("config: g_hidden sizes must be >= 1");
    for (std::size_t h : arch.d_hidden)
        if (h == 0) throw ConfigError("config: d_hidden sizes must be >= 1");
}

DatasetPair make_datasets(const DatasetSpec& spec, std::uint64_t master_seed) {
    validate_dataset_spec(spec);
    Tensor translate({spec.translate.size()}, spec.translate);
    DatasetPair p;
    LabeledDataset shifted;
    if (spec.kind == "two_moons") {
        p.source = gen_two_moons(spec.n, spec.noise_sd, derive_seed(master_seed, streams::data_src));
        shifted = gen_two_moons(spec.n, spec.noise_sd, derive_seed(master_seed, streams::data_tgt));
    } else {
        Tensor centers = centers_tensor(spec);
        p.source = gen_blobs(spec.n_classes, spec.n_per_class, centers, spec.sd,
                             derive_seed(master_seed, streams::data_src));
        shifted = gen_blobs(spec.n_classes, spec.n_per_class, centers, spec.sd,
                            derive_seed(master_seed, streams::data_tgt));
    }
    p.target = shift_domain(shifted, spec.rotation_deg, translate, 0);
    p.target.domain = DomainTag::target;
    return p;
}

SgdState SgdState::init(ModelParams& params) {
    SgdState s;
    for (Tensor* t : all_tensors(params)) s.velocity.push_back(Tensor::zeros_like(*t));
    return s;
}

LossBreakdown train_step(ModelParams& params, SgdState& opt, FeatureBank* bank,
                         const DomainBatch& batch, const RunConfig& cfg, double mu) {
    const bool adversarial = cfg.mode != Mode::source_only;
    const bool contrast = cfg.lambda > 0.0 &&
                          (cfg.mode == Mode::dann_cat || cfg.mode == Mode::dann_kld);
    const bool need_zt = adversarial || bank != nullptr;
    if (cfg.mode == Mode::dann_cat && cfg.lambda > 0.0 && bank == nullptr)
        throw PreconditionError("train_step: dann_cat with lambda > 0 needs a feature bank");
    if (batch.xs.rank() != 2 || batch.xt.rank() != 2 || batch.xs.rows() != batch.xt.rows())
        throw DimensionError("train_step: batch halves must be [N' x d] with equal N'");
    std::size_t n_tensors = 2 * (params.g.size() + params.f.size() + params.d.size());
    if (opt.velocity.size() != n_tensors)
        throw PreconditionError("train_step: SgdState holds " +
                                std::to_string(opt.velocity.size()) + " velocities for " +
                                std::to_string(n_tensors) + " parameter tensors");

    Tape t;
    TapeNet g = lift_net(t, params.g);
    TapeNet f = lift_net(t, params.f);
    TapeNet d;
    if (adversarial) d = lift_net(t, params.d);

    NodeId xs = t.leaf(batch.xs, false);
    NodeId zs = mlp_on_tape(t, params.spec_g, g, xs);
    NodeId logits = mlp_on_tape(t, params.spec_f, f, zs);
    NodeId l_cls = cross_entropy_on_tape(t, logits, batch.ys);

    NodeId zt = 0;
    if (need_zt) {
        NodeId xt = t.leaf(batch.xt, false);
        zt = mlp_on_tape(t, params.spec_g, g, xt);
    }

    // zero-weight terms are omitted so a disabled loss leaves no float residue
    std::vector<std::pair<NodeId, double>> terms{{l_cls, 1.0}};
    double l_d_v = 0.0, l_con_v = 0.0;

    if (adversarial) {
        NodeId ds_out = mlp_on_tape(t, params.spec_d, d, ops::grl(t, zs, mu));
        NodeId dt_out = mlp_on_tape(t, params.spec_d, d, ops::grl(t, zt, mu));
        NodeId l_d = domain_adversarial_on_tape(t, ds_out, dt_out);
        l_d_v = t.value(l_d)[0];
        terms.emplace_back(l_d, 1.0);
    }

    if (contrast) {
        NodeId l_con;
        if (cfg.mode == Mode::dann_cat) {
            std::vector<NeighborSets> sets = bank->build_sets(t.value(zs), cfg.K);
            NodeId anchors = zs;
            if (cfg.normalize_features) {
                anchors = ops::row_normalize(t, zs);
                for (NeighborSets& ns : sets) {
                    for (Neighbor& nb : ns.close) nb.feature = unit_copy(nb.feature);
                    for (Neighbor& nb : ns.distant) nb.feature = unit_copy(nb.feature);
                }
            }
            l_con = contrastive_on_tape(t, anchors, sets);
        } else {
            l_con = kld_on_tape(t, zs, zt);
        }
        l_con_v = t.value(l_con)[0];
        terms.emplace_back(l_con, cfg.lambda);
    }

    NodeId total = ops::weighted_sum(t, terms);
    LossBreakdown bd = total_loss(t.value(l_cls)[0], l_d_v, l_con_v, cfg.lambda);
    if (!std::isfinite(bd.l_cls) || !std::isfinite(bd.l_d) || !std::isfinite(bd.l_con) ||
        !std::isfinite(bd.total))
        throw NonFiniteLossError("non-finite loss", bd, 0, 0);
    // only meaningful once both sides are known finite (NaN != NaN)
    if (bd.total != t.value(total)[0])
        throw InternalError("train_step: composed total " + format_f64(bd.total) +
                            " != tape total " + format_f64(t.value(total)[0]));

    t.backward(total);

    struct NetUpdate {
        std::vector<Tensor*> ps;
        std::vector<Tensor> gs;
        std::size_t voff;
    };
    std::vector<NetUpdate> nets;
    nets.push_back({net_tensors(params.g), collect_grads(t, g), 0});
    nets.push_back({net_tensors(params.f), collect_grads(t, f), nets[0].ps.size()});
    if (adversarial)
        nets.push_back(
            {net_tensors(params.d), collect_grads(t, d), nets[0].ps.size() + nets[1].ps.size()});

    // clip (and check) every network before touching any parameter, so a
    // non-finite gradient aborts the step with the model untouched
    for (NetUpdate& nu : nets)
        if (!clip_net_grads(nu.gs, cfg.grad_clip))
            throw NonFiniteLossError("non-finite gradient", bd, 0, 0);

    for (NetUpdate& nu : nets) {
        for (std::size_t i = 0; i < nu.ps.size(); ++i) {
            Tensor& p = *nu.ps[i];
            Tensor& v = opt.velocity[nu.voff + i];
            Tensor& grad = nu.gs[i];
            // d = grad + wd*p; v = m*v + d; p -= lr*v
            kernels::axpy(cfg.weight_decay, p.data(), grad.data(), grad.size());
            kernels::scal(cfg.sgd_momentum, v.data(), v.size());
            kernels::axpy(1.0, grad.data(), v.data(), v.size());
            kernels::axpy(-cfg.lr, v.data(), p.data(), p.size());
        }
    }

    if (bank != nullptr) bank->update(batch.target_ids, t.value(zt), cfg.bank_momentum);
    return bd;
}

double evaluate(const ModelParams& params, const LabeledDataset& ds) {
    ds.validate();
    std::vector<int> pred = argmax_rows(classify(params, extract_features(params, ds.x)));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == ds.y[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.n());
}

FitResult fit(const RunConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&t0] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    };

    DatasetPair data = make_datasets(cfg.dataset, cfg.seed);
    const LabeledDataset& src = data.source;
    const LabeledDataset& tgt = data.target;

    ModelParams params =
        init_params(make_g_spec(cfg.arch, src.dim()), make_f_spec(cfg.arch, src.n_classes),
                    make_d_spec(cfg.arch), derive_seed(cfg.seed, streams::init));
    SgdState opt = SgdState::init(params);
    BatchSampler sampler(src.n(), tgt.n(), cfg.batch_size,
                         Rng(derive_seed(cfg.seed, streams::sampler)));

    std::optional<FeatureBank> bank;
    if (cfg.mode == Mode::dann_cat) bank.emplace(FeatureBank::init(params, tgt.x));

    const std::uint64_t adist_master = derive_seed(cfg.seed, streams::adist);
    auto adist_due = [&cfg](std::size_t epoch) {
        if (epoch == 0 || epoch == cfg.epochs) return true;
        return cfg.adist_interval > 0 && epoch % cfg.adist_interval == 0;
    };
    auto probe_adist = [&](std::size_t epoch) {
        return a_distance(extract_features(params, src.x), extract_features(params, tgt.x),
                          derive_seed(adist_master, epoch));
    };

    std::vector<MetricsRecord> metrics;
    {
        MetricsRecord r;  // record 0: the untrained model
        r.epoch = 0;
        r.source_acc = evaluate(params, src);
        r.target_acc = evaluate(params, tgt);
        if (adist_due(0)) r.a_distance = probe_adist(0);
        r.wall_ms = wall_ms();
        metrics.push_back(r);
    }

    const std::size_t bpe = sampler.batches_per_epoch();
    const std::size_t steps_total = cfg.epochs * bpe;
    std::size_t global_step = 0;
    log::info("fit: mode=" + mode_name(cfg.mode) + " lambda=" + format_f64(cfg.lambda) +
              " K=" + std::to_string(cfg.K) + " seed=" + std::to_string(cfg.seed) + " (" +
              std::to_string(steps_total) + " steps)");

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double s_cls = 0.0, s_d = 0.0, s_con = 0.0, s_tot = 0.0;
        for (std::size_t b = 0; b < bpe; ++b) {
            // p runs 0 → 1 across all steps of the run (a single step sits at 1)
            double progress = steps_total > 1 ? static_cast<double>(global_step) /
                                                    static_cast<double>(steps_total - 1)
                                              : 1.0;
            double mu = grl_schedule(cfg.grl, progress);
            DomainBatch batch = sampler.next_batch(src, tgt);
            LossBreakdown bd;
            try {
                bd = train_step(params, opt, bank ? &*bank : nullptr, batch, cfg, mu);
            } catch (const NonFiniteLossError& e) {
                throw NonFiniteLossError(std::string(e.what()) + " at epoch " +
                                             std::to_string(epoch) + ", step " +
                                             std::to_string(global_step),
                                         e.breakdown, epoch, global_step);
            }
            s_cls += bd.l_cls;
            s_d += bd.l_d;
            s_con += bd.l_con;
            s_tot += bd.total;
            ++global_step;
        }
        MetricsRecord r;
        r.epoch = epoch;
        double nb = static_cast<double>(bpe);
        r.l_cls = s_cls / nb;
        r.l_d = s_d / nb;
        r.l_con = s_con / nb;
        r.total = s_tot / nb;
        r.source_acc = evaluate(params, src);
        r.target_acc = evaluate(params, tgt);
        if (adist_due(epoch)) r.a_distance = probe_adist(epoch);
        r.wall_ms = wall_ms();
        log::debug("epoch " + std::to_string(epoch) + ": total=" + format_f64(r.total) +
                   " src_acc=" + format_f64(r.source_acc) +
                   " tgt_acc=" + format_f64(r.target_acc));
        metrics.push_back(r);
    }
    return FitResult{std::move(params), std::move(metrics)};
}

double a_distance_from_error(double eps) {
    if (!(eps >= 0.0 && eps <= 1.0))
        throw PreconditionError("a_distance_from_error: error rate " + format_f64(eps) +
                                " outside [0,1]");
    return std::max(0.0, 2.0 * (1.0 - 2.0 * eps));
}

double a_distance(const Tensor& feats_s, const Tensor& feats_t, std::uint64_t seed) {
    if (feats_s.rank() != 2 || feats_t.rank() != 2 || feats_s.cols() != feats_t.cols())
        throw DimensionError("a_distance: features must be [N x d] with matching d, got " +
                             shape_str(feats_s.shape()) + " vs " + shape_str(feats_t.shape()));
    const std::size_t ns = feats_s.rows(), nt = feats_t.rows(), dz = feats_s.cols();
    if (ns < 20 || nt < 20)
        throw PreconditionError("a_distance: needs >= 20 rows per domain, got " +
                                std::to_string(ns) + " source and " + std::to_string(nt) +
                                " target");
    if (!feats_s.finite() || !feats_t.finite())
        throw PreconditionError("a_distance: non-finite features");

    Rng rng(seed);
    auto split = [&rng](const Tensor& feats) {
        std::vector<std::size_t> perm(feats.rows());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        std::size_t n_tr = feats.rows() / 2;
        Tensor tr({n_tr, feats.cols()}), te({feats.rows() - n_tr, feats.cols()});
        for (std::size_t i = 0; i < feats.rows(); ++i) {
            Tensor& dst = i < n_tr ? tr : te;
            std::size_t row = i < n_tr ? i : i - n_tr;
            std::copy(feats.row_ptr(perm[i]), feats.row_ptr(perm[i]) + feats.cols(),
                      dst.row_ptr(row));
        }
        return std::pair<Tensor, Tensor>(std::move(tr), std::move(te));
    };
    auto [tr_s, te_s] = split(feats_s);
    auto [tr_t, te_t] = split(feats_t);

    MlpSpec probe_spec;
    probe_spec.layer_sizes = {dz, 32, 1};
    probe_spec.activation = Activation::relu;
    probe_spec.output = OutputTransform::sigmoid;
    NetParams probe = init_net_params(probe_spec, rng);

    constexpr double kLr = 0.01, kMomentum = 0.9, kClip = 5.0;
    constexpr std::size_t kEpochs = 10, kHalfBatch = 8;  // 8 + 8 rows per step

    std::vector<Tensor> vel;
    for (const LayerParams& lp : probe) {
        vel.push_back(Tensor::zeros_like(lp.W));
        vel.push_back(Tensor::zeros_like(lp.b));
    }

    LabeledDataset ds_s{tr_s, std::vector<int>(tr_s.rows(), 0), 2, DomainTag::source};
    LabeledDataset ds_t{tr_t, std::vector<int>(tr_t.rows(), 0), 2, DomainTag::target};
    std::size_t bs = std::min({kHalfBatch, tr_s.rows(), tr_t.rows()});
    BatchSampler sampler(tr_s.rows(), tr_t.rows(), bs, Rng(rng.next_u64()));
    const std::size_t bpe = sampler.batches_per_epoch();

    for (std::size_t epoch = 0; epoch < kEpochs; ++epoch) {
        for (std::size_t b = 0; b < bpe; ++b) {
            DomainBatch batch = sampler.next_batch(ds_s, ds_t);
            Tape t;
            TapeNet net = lift_net(t, probe);
            NodeId ps = mlp_on_tape(t, probe_spec, net, t.leaf(batch.xs, false));
            NodeId pt = mlp_on_tape(t, probe_spec, net, t.leaf(batch.xt, false));
            NodeId loss = domain_adversarial_on_tape(t, ps, pt);
            if (!std::isfinite(t.value(loss)[0]))
                throw InternalError("a_distance: probe loss non-finite");
            t.backward(loss);

            std::vector<Tensor> grads = collect_grads(t, net);
            if (!clip_net_grads(grads, kClip))
                throw InternalError("a_distance: probe gradient non-finite");
            std::vector<Tensor*> ptrs = net_tensors(probe);
            for (std::size_t i = 0; i < ptrs.size(); ++i) {
                kernels::scal(kMomentum, vel[i].data(), vel[i].size());
                kernels::axpy(1.0, grads[i].data(), vel[i].data(), vel[i].size());
                kernels::axpy(-kLr, vel[i].data(), ptrs[i]->data(), ptrs[i]->size());
            }
        }
    }

    // test error at threshold 0.5: predict "source" iff p > 0.5
    Tensor out_s = mlp_forward(probe_spec, probe, te_s);
    Tensor out_t = mlp_forward(probe_spec, probe, te_t);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < out_s.size(); ++i)
        if (!(out_s[i] > 0.5)) ++wrong;
    for (std::size_t i = 0; i < out_t.size(); ++i)
        if (out_t[i] > 0.5) ++wrong;
    double eps = static_cast<double>(wrong) / static_cast<double>(te_s.rows() + te_t.rows());
    return a_distance_from_error(eps);
}

std::vector<AblationRow> run_ablation(const RunConfig& base_cfg, const std::vector<double>& lambdas,
                                      const std::vector<std::size_t>& Ks,
                                      const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
    if (lambdas.empty() || Ks.empty() || seeds.empty())
        throw ConfigError("run_ablation: lambdas, Ks, and seeds must all be non-empty");

    struct Cell {
        bool ok = false;
        double acc = 0.0;
        std::string error;
    };
    const std::size_t n_rows = lambdas.size() * Ks.size();
    std::vector<std::vector<Cell>> cells(n_rows, std::vector<Cell>(seeds.size()));

    auto run_cell = [&](std::size_t row, std::size_t si) {
        Cell& cell = cells[row][si];
        try {
            RunConfig c = base_cfg;
            c.mode = Mode::dann_cat;
            c.lambda = lambdas[row / Ks.size()];
            c.K = Ks[row % Ks.size()];
            c.seed = seeds[si];
            c.validate();
            FitResult fr = fit(c);
            cell.acc = fr.metrics.back().target_acc;
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    };

    const std::size_t n_tasks = n_rows * seeds.size();
    const std::size_t n_jobs = std::max<std::size_t>(1, std::min(jobs, n_tasks));
    if (n_jobs == 1) {
        for (std::size_t k = 0; k < n_tasks; ++k) run_cell(k / seeds.size(), k % seeds.size());
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t k = next.fetch_add(1); k < n_tasks; k = next.fetch_add(1))
                run_cell(k / seeds.size(), k % seeds.size());
        };
        std::vector<std::thread> pool;
        pool.reserve(n_jobs);
        for (std::size_t j = 0; j < n_jobs; ++j) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    std::vector<AblationRow> rows;
    rows.reserve(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        AblationRow row;
        row.lambda = lambdas[r / Ks.size()];
        row.K = Ks[r % Ks.size()];
        std::vector<double> accs;
        for (const Cell& c : cells[r]) {
            if (c.ok) {
                accs.push_back(c.acc);
            } else {
                row.failed = true;
                if (row.error.empty()) row.error = c.error;
            }
        }
        row.n_seeds = accs.size();
        if (!accs.empty()) {
            double mean = std::accumulate(accs.begin(), accs.end(), 0.0) /
                          static_cast<double>(accs.size());
            row.mean_target_acc = mean;
            if (accs.size() >= 2) {
                double ssd = 0.0;
                for (double a : accs) ssd += (a - mean) * (a - mean);
                row.std_target_acc = std::sqrt(ssd / static_cast<double>(accs.size() - 1));
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const MetricsRecord& r : records) {
        out += std::to_string(r.epoch);
        out += ',';
        out += format_f64(r.l_cls);
        out += ',';
        out += format_f64(r.l_d);
        out += ',';
        out += format_f64(r.l_con);
        out += ',';
        out += format_f64(r.total);
        out += ',';
        out += format_f64(r.source_acc);
        out += ',';
        out += format_f64(r.target_acc);
        out += ',';
        if (r.a_distance) out += format_f64(*r.a_distance);
        out += ',';
        out += std::to_string(r.wall_ms);
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
    write_text_file(path, metrics_to_csv(records));
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("metrics CSV " + path + ": empty file");
    if (line != kMetricsHeader)
        throw DataError("metrics CSV " + path + ": bad header '" + line + "'");
    std::vector<MetricsRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string where = "metrics CSV " + path + " line " + std::to_string(lineno);
        std::vector<std::string> f = split_csv(line);
        if (f.size() != 9)
            throw DataError(where + ": expected 9 fields, got " + std::to_string(f.size()));
        MetricsRecord r;
        r.epoch = parse_size(f[0], where);
        r.l_cls = parse_f64(f[1], where);
        r.l_d = parse_f64(f[2], where);
        r.l_con = parse_f64(f[3], where);
        r.total = parse_f64(f[4], where);
        r.source_acc = parse_f64(f[5], where);
        r.target_acc = parse_f64(f[6], where);
        if (!f[7].empty()) r.a_distance = parse_f64(f[7], where);
        r.wall_ms = parse_i64(f[8], where);
        records.push_back(r);
    }
    return records;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    std::string out = kAblationHeader;
    out += '\n';
    for (const AblationRow& r : rows) {
        out += format_f64(r.lambda);
        out += ',';
        out += std::to_string(r.K);
        out += ',';
        if (r.n_seeds > 0) out += format_f64(r.mean_target_acc);
        out += ',';
        if (r.n_seeds > 0) out += format_f64(r.std_target_acc);
        out += ',';
        out += std::to_string(r.n_seeds);
        out += ',';
        out += r.failed ? "failed" : "ok";
        out += '\n';
    }
    return out;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    write_text_file(path, ablation_to_csv(rows));
}

}  // namespace cat
