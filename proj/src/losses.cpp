#include "cat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cat/kernels.hpp"

namespace cat {

namespace {

void require_logits(const Tensor& logits, std::size_t n_labels) {
    if (logits.rank() != 2)
        throw DimensionError("cross_entropy: logits must be rank 2, got " +
                             shape_str(logits.shape()));
    if (logits.rows() != n_labels)
        throw DimensionError("cross_entropy: " + std::to_string(logits.rows()) +
                             " logit rows vs " + std::to_string(n_labels) + " labels");
    if (logits.cols() == 0) throw DimensionError("cross_entropy: zero classes");
}

void require_probs(const Tensor& t, const char* what) {
    if (t.rank() != 2 || t.cols() != 1)
        throw DimensionError(std::string("domain_adversarial_loss: ") + what +
                             " must be [n x 1], got " + shape_str(t.shape()));
    if (t.rows() == 0)
        throw DimensionError(std::string("domain_adversarial_loss: ") + what + " is empty");
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!(t[i] > 0.0 && t[i] < 1.0))
            throw InternalError(std::string("domain_adversarial_loss: ") + what + " entry " +
                                std::to_string(i) + " = " + std::to_string(t[i]) +
                                " escaped the (0,1) clamp");
}

double l2_distance(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j] - b[j];
        s += d * d;
    }
    return std::sqrt(s);
}

void require_sets(const Tensor& zs, const std::vector<NeighborSets>& sets) {
    if (zs.rank() != 2)
        throw DimensionError("contrastive_loss: anchors must be rank 2, got " +
                             shape_str(zs.shape()));
    if (sets.size() != zs.rows())
        throw PreconditionError("contrastive_loss: " + std::to_string(sets.size()) +
                                " neighbor sets for " + std::to_string(zs.rows()) + " anchors");
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (sets[i].close.empty() || sets[i].distant.empty())
            throw PreconditionError("contrastive_loss: empty close or distant set for anchor " +
                                    std::to_string(i));
        for (const auto& lst : {&sets[i].close, &sets[i].distant})
            for (const Neighbor& nb : *lst)
                if (nb.feature.size() != zs.cols())
                    throw DimensionError("contrastive_loss: neighbor feature dim " +
                                         std::to_string(nb.feature.size()) + " vs anchor dim " +
                                         std::to_string(zs.cols()));
    }
}

struct ColumnMoments {
    std::vector<double> mean, var;
    std::vector<char> floored;
};

ColumnMoments column_moments(const Tensor& z, const char* what) {
    if (z.rank() != 2)
        throw DimensionError(std::string("kld_alignment_loss: ") + what +
                             " must be rank 2, got " + shape_str(z.shape()));
    std::size_t n = z.rows(), d = z.cols();
    if (n < 2)
        throw PreconditionError(std::string("kld_alignment_loss: ") + what +
                                " needs at least 2 rows, got " + std::to_string(n));
    ColumnMoments m;
    m.mean.assign(d, 0.0);
    m.var.assign(d, 0.0);
    m.floored.assign(d, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = z.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) m.mean[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) m.mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = z.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) {
            double c = row[j] - m.mean[j];
            m.var[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        m.var[j] /= static_cast<double>(n);  // population variance
        if (m.var[j] < kVarianceFloor) {
            m.var[j] = kVarianceFloor;
            m.floored[j] = 1;
        }
    }
    return m;
}

}  // namespace

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_logits(logits, labels.size());
    std::size_t B = logits.rows(), C = logits.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw DataError("cross_entropy: label " + std::to_string(y) + " at row " +
                            std::to_string(i) + " outside [0," + std::to_string(C) + ")");
        const double* row = logits.row_ptr(i);
        double m = row[0];
        for (std::size_t j = 1; j < C; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) s += std::exp(row[j] - m);
        acc += m + std::log(s) - row[static_cast<std::size_t>(y)];
    }
    return acc / static_cast<double>(B);
}

double domain_adversarial_loss(const Tensor& d_src, const Tensor& d_tgt) {
    require_probs(d_src, "d_src");
    require_probs(d_tgt, "d_tgt");
    double a = 0.0;
    for (std::size_t i = 0; i < d_src.size(); ++i) a += std::log(d_src[i]);
    a /= static_cast<double>(d_src.size());
    double b = 0.0;
    for (std::size_t i = 0; i < d_tgt.size(); ++i) b += std::log(1.0 - d_tgt[i]);
    b /= static_cast<double>(d_tgt.size());
    return -a - b;
}

Tensor similarity_softmax(const Tensor& anchor, const Tensor& bank_feats) {
    if (anchor.rank() != 1)
        throw DimensionError("similarity_softmax: anchor must be rank 1, got " +
                             shape_str(anchor.shape()));
    if (bank_feats.rank() != 2 || bank_feats.cols() != anchor.size())
        throw DimensionError("similarity_softmax: bank shape " + shape_str(bank_feats.shape()) +
                             " vs anchor dim " + std::to_string(anchor.size()));
    std::size_t M = bank_feats.rows();
    if (M == 0) throw DimensionError("similarity_softmax: empty bank");
    Tensor p({M});
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < M; ++i) {
        p[i] = kernels::dot(anchor.data(), bank_feats.row_ptr(i), anchor.size());
        m = std::max(m, p[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        p[i] = std::exp(p[i] - m);
        s += p[i];
    }
    for (std::size_t i = 0; i < M; ++i) p[i] /= s;
    return p;
}

double log_likelihood_ratio(const Tensor& anchor, const NeighborSets& sets,
                            const Tensor& bank_feats) {
    if (sets.close.size() != sets.distant.size())
        throw PreconditionError("log_likelihood_ratio: |close| (" +
                                std::to_string(sets.close.size()) + ") != |distant| (" +
                                std::to_string(sets.distant.size()) + ")");
    if (bank_feats.rank() != 2 || bank_feats.cols() != anchor.size())
        throw DimensionError("log_likelihood_ratio: bank shape " + shape_str(bank_feats.shape()) +
                             " vs anchor dim " + std::to_string(anchor.size()));
    std::size_t M = bank_feats.rows();
    // Eq. 4 in log space: log p_i = s_i - m - log Σ exp(s - m)
    std::vector<double> scores(M);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < M; ++i) {
        scores[i] = kernels::dot(anchor.data(), bank_feats.row_ptr(i), anchor.size());
        m = std::max(m, scores[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < M; ++i) s += std::exp(scores[i] - m);
    double lse = m + std::log(s);
    auto log_p = [&](const Neighbor& nb) {
        if (nb.id >= M)
            throw DataError("log_likelihood_ratio: neighbor id " + std::to_string(nb.id) +
                            " outside bank of size " + std::to_string(M));
        return scores[nb.id] - lse;
    };
    double form_softmax = 0.0;
    for (const Neighbor& nb : sets.close) form_softmax += log_p(nb);
    for (const Neighbor& nb : sets.distant) form_softmax -= log_p(nb);
    // Eq. 10: denominators cancel at equal cardinality, leaving dot differences
    double form_dot = 0.0;
    for (const Neighbor& nb : sets.close)
        form_dot += kernels::dot(anchor.data(), nb.feature.data(), anchor.size());
    for (const Neighbor& nb : sets.distant)
        form_dot -= kernels::dot(anchor.data(), nb.feature.data(), anchor.size());
    if (std::abs(form_softmax - form_dot) > 1e-10 * std::max(1.0, std::abs(form_dot)))
        throw InternalError("log_likelihood_ratio: softmax form " + std::to_string(form_softmax) +
                            " disagrees with dot form " + std::to_string(form_dot));
    return form_softmax;
}

double contrastive_loss(const Tensor& z_s_batch, const std::vector<NeighborSets>& sets) {
    require_sets(z_s_batch, sets);
    std::size_t N = z_s_batch.rows(), d = z_s_batch.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double* anchor = z_s_batch.row_ptr(i);
        double acc = 0.0;
        for (const Neighbor& nb : sets[i].close) acc += l2_distance(anchor, nb.feature.data(), d);
        for (const Neighbor& nb : sets[i].distant)
            acc -= l2_distance(anchor, nb.feature.data(), d);
        total += acc;
    }
    return total / static_cast<double>(N);
}

LossBreakdown total_loss(double l_cls, double l_d, double l_con, double lambda) {
    if (lambda < 0.0)
        throw ConfigError("total_loss: lambda must be >= 0, got " + std::to_string(lambda));
    LossBreakdown b;
    b.l_cls = l_cls;
    b.l_d = l_d;
    b.l_con = l_con;
    b.lambda = lambda;
    b.total = l_cls + l_d + lambda * l_con;
    return b;
}

double kld_alignment_loss(const Tensor& z_s_batch, const Tensor& z_t_batch) {
    ColumnMoments s = column_moments(z_s_batch, "source batch");
    ColumnMoments t = column_moments(z_t_batch, "target batch");
    if (z_s_batch.cols() != z_t_batch.cols())
        throw DimensionError("kld_alignment_loss: feature dims " +
                             std::to_string(z_s_batch.cols()) + " vs " +
                             std::to_string(z_t_batch.cols()));
    std::size_t d = z_s_batch.cols();
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double dm = t.mean[j] - s.mean[j];
        acc += 0.5 * (s.var[j] / t.var[j] + dm * dm / t.var[j] - 1.0 +
                      std::log(t.var[j] / s.var[j]));
    }
    return acc / static_cast<double>(d);
}

// --- tape forms ---

NodeId cross_entropy_on_tape(Tape& t, NodeId logits, const std::vector<int>& labels) {
    double value = cross_entropy(t.value(logits), labels);
    return t.push(Tensor::scalar(value), {logits}, [logits, labels](Tape& tp, const Tensor& cot) {
        const Tensor& lv = tp.value(logits);
        Tensor& dl = tp.cot_accum(logits);
        std::size_t B = lv.rows(), C = lv.cols();
        double scale = cot[0] / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i) {
            const double* row = lv.row_ptr(i);
            double* drow = dl.row_ptr(i);
            double m = row[0];
            for (std::size_t j = 1; j < C; ++j) m = std::max(m, row[j]);
            double s = 0.0;
            for (std::size_t j = 0; j < C; ++j) s += std::exp(row[j] - m);
            for (std::size_t j = 0; j < C; ++j) {
                double p = std::exp(row[j] - m) / s;
                double onehot = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                drow[j] += scale * (p - onehot);
            }
        }
    });
}

NodeId domain_adversarial_on_tape(Tape& t, NodeId d_src, NodeId d_tgt) {
    double value = domain_adversarial_loss(t.value(d_src), t.value(d_tgt));
    return t.push(Tensor::scalar(value), {d_src, d_tgt},
                  [d_src, d_tgt](Tape& tp, const Tensor& cot) {
                      const Tensor& sv = tp.value(d_src);
                      const Tensor& tv = tp.value(d_tgt);
                      Tensor& ds = tp.cot_accum(d_src);
                      Tensor& dt = tp.cot_accum(d_tgt);
                      double ns = static_cast<double>(sv.size());
                      double nt = static_cast<double>(tv.size());
                      for (std::size_t i = 0; i < sv.size(); ++i)
                          ds[i] += cot[0] * (-1.0 / (ns * sv[i]));
                      for (std::size_t i = 0; i < tv.size(); ++i)
                          dt[i] += cot[0] * (1.0 / (nt * (1.0 - tv[i])));
                  });
}

NodeId contrastive_on_tape(Tape& t, NodeId z_s_batch, const std::vector<NeighborSets>& sets) {
    double value = contrastive_loss(t.value(z_s_batch), sets);
    return t.push(
        Tensor::scalar(value), {z_s_batch}, [z_s_batch, sets](Tape& tp, const Tensor& cot) {
            const Tensor& zv = tp.value(z_s_batch);
            Tensor& dz = tp.cot_accum(z_s_batch);
            std::size_t N = zv.rows(), d = zv.cols();
            double scale = cot[0] / static_cast<double>(N);
            for (std::size_t i = 0; i < N; ++i) {
                const double* anchor = zv.row_ptr(i);
                double* drow = dz.row_ptr(i);
                auto add_term = [&](const Neighbor& nb, double sign) {
                    double dist = l2_distance(anchor, nb.feature.data(), d);
                    if (dist == 0.0) return;  // subgradient 0 at the kink
                    double c = sign * scale / dist;
                    for (std::size_t j = 0; j < d; ++j)
                        drow[j] += c * (anchor[j] - nb.feature[j]);
                };
                for (const Neighbor& nb : sets[i].close) add_term(nb, +1.0);
                for (const Neighbor& nb : sets[i].distant) add_term(nb, -1.0);
            }
        });
}

NodeId kld_on_tape(Tape& t, NodeId z_s_batch, NodeId z_t_batch) {
    double value = kld_alignment_loss(t.value(z_s_batch), t.value(z_t_batch));
    return t.push(
        Tensor::scalar(value), {z_s_batch, z_t_batch},
        [z_s_batch, z_t_batch](Tape& tp, const Tensor& cot) {
            const Tensor& zs = tp.value(z_s_batch);
            const Tensor& zt = tp.value(z_t_batch);
            Tensor& dzs = tp.cot_accum(z_s_batch);
            Tensor& dzt = tp.cot_accum(z_t_batch);
            ColumnMoments s = column_moments(zs, "source batch");
            ColumnMoments tm = column_moments(zt, "target batch");
            std::size_t d = zs.cols();
            double ns = static_cast<double>(zs.rows()), nt = static_cast<double>(zt.rows());
            double scale = cot[0] / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
                double vs = s.var[j], vt = tm.var[j];
                double dm = tm.mean[j] - s.mean[j];
                double d_ms = -dm / vt;
                double d_mt = dm / vt;
                // floored variances are constants: no gradient through them
                double d_vs = s.floored[j] ? 0.0 : 0.5 * (1.0 / vt - 1.0 / vs);
                double d_vt =
                    tm.floored[j] ? 0.0 : 0.5 * (-vs / (vt * vt) - dm * dm / (vt * vt) + 1.0 / vt);
                for (std::size_t i = 0; i < zs.rows(); ++i) {
                    double zc = zs.at(i, j) - s.mean[j];
                    dzs.at(i, j) += scale * (d_ms / ns + d_vs * 2.0 * zc / ns);
                }
                for (std::size_t i = 0; i < zt.rows(); ++i) {
                    double zc = zt.at(i, j) - tm.mean[j];
                    dzt.at(i, j) += scale * (d_mt / nt + d_vt * 2.0 * zc / nt);
                }
            }
        });
}

}  // namespace cat
