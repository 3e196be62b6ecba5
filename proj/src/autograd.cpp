#include "cat/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "cat/kernels.hpp"

namespace cat {

namespace {

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2)
        throw DimensionError(std::string(what) + " must be rank 2, got shape " +
                             shape_str(t.shape()));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

NodeId Tape::leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
    return nodes_.size() - 1;
}

NodeId Tape::push(Tensor value, std::vector<NodeId> parents, BackwardFn bwd, bool force_no_grad) {
    bool rg = false;
    for (NodeId p : parents) {
        if (p >= nodes_.size()) throw PreconditionError("Tape::push: parent id out of range");
        rg = rg || nodes_[p].requires_grad;
    }
    if (force_no_grad) rg = false;
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(bwd), rg});
    return nodes_.size() - 1;
}

const Tensor& Tape::value(NodeId id) const {
    if (id >= nodes_.size()) throw PreconditionError("Tape::value: node id out of range");
    return nodes_[id].value;
}

bool Tape::requires_grad(NodeId id) const {
    if (id >= nodes_.size()) throw PreconditionError("Tape::requires_grad: node id out of range");
    return nodes_[id].requires_grad;
}

void Tape::backward(NodeId root) {
    if (root >= nodes_.size()) throw PreconditionError("Tape::backward: root id out of range");
    if (nodes_[root].value.size() != 1)
        throw PreconditionError("Tape::backward: root must be a scalar, got shape " +
                                shape_str(nodes_[root].value.shape()));
    cots_.clear();
    cots_.reserve(nodes_.size());
    for (const Node& n : nodes_) cots_.push_back(Tensor::zeros_like(n.value));
    visited_.assign(nodes_.size(), 0);
    visited_[root] = 1;
    cots_[root][0] = 1.0;
    for (NodeId id = root + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (!visited_[id] || !n.requires_grad) continue;
        for (NodeId p : n.parents) visited_[p] = 1;
        if (n.bwd) n.bwd(*this, cots_[id]);
    }
    ran_backward_ = true;
}

const Tensor& Tape::gradient(NodeId id) const {
    if (!ran_backward_) throw PreconditionError("Tape::gradient: backward() not run");
    if (id >= cots_.size())
        throw PreconditionError("Tape::gradient: node was pushed after backward()");
    return cots_[id];
}

Tensor& Tape::cot_accum(NodeId id) {
    if (id >= cots_.size()) throw InternalError("Tape::cot_accum: no cotangent buffer");
    return cots_[id];
}

namespace ops {

NodeId affine(Tape& t, NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const Tensor& bv = t.value(b);
    require_rank2(xv, "affine: x");
    require_rank2(wv, "affine: W");
    if (bv.rank() != 1)
        throw DimensionError("affine: b must be rank 1, got shape " + shape_str(bv.shape()));
    if (xv.cols() != wv.rows())
        throw DimensionError("affine: x cols (" + std::to_string(xv.cols()) +
                             ") != W rows (" + std::to_string(wv.rows()) + ")");
    if (bv.size() != wv.cols())
        throw DimensionError("affine: b size (" + std::to_string(bv.size()) +
                             ") != W cols (" + std::to_string(wv.cols()) + ")");
    std::size_t batch = xv.rows(), in = xv.cols(), out = wv.cols();
    Tensor y({batch, out});
    for (std::size_t i = 0; i < batch; ++i)
        std::copy(bv.data(), bv.data() + out, y.row_ptr(i));
    kernels::gemm_nn(xv.data(), wv.data(), y.data(), batch, in, out);
    return t.push(std::move(y), {x, w, b},
                  [x, w, b, batch, in, out](Tape& tp, const Tensor& cot) {
                      const Tensor& xv2 = tp.value(x);
                      const Tensor& wv2 = tp.value(w);
                      // dx += cot · W^T
                      kernels::gemm_nt(cot.data(), wv2.data(), tp.cot_accum(x).data(), batch, out,
                                       in);
                      // dW += x^T · cot
                      kernels::gemm_tn(xv2.data(), cot.data(), tp.cot_accum(w).data(), batch, in,
                                       out);
                      // db += column sums of cot
                      kernels::colsum_acc(cot.data(), tp.cot_accum(b).data(), batch, out);
                  });
}

NodeId relu(Tape& t, NodeId x) {
    const Tensor& xv = t.value(x);
    Tensor y(xv.shape());
    kernels::relu_fwd(xv.data(), y.data(), xv.size());
    return t.push(std::move(y), {x}, [x](Tape& tp, const Tensor& cot) {
        const Tensor& xv2 = tp.value(x);
        kernels::relu_bwd(xv2.data(), cot.data(), tp.cot_accum(x).data(), xv2.size());
    });
}

NodeId tanh(Tape& t, NodeId x) {
    const Tensor& xv = t.value(x);
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::tanh(xv[i]);
    // dx += cot ⊙ (1 - tanh(x)^2); recomputed from x, bitwise-identical to forward
    return t.push(std::move(y), {x}, [x](Tape& tp, const Tensor& cot) {
        const Tensor& xv2 = tp.value(x);
        Tensor& dx = tp.cot_accum(x);
        for (std::size_t i = 0; i < xv2.size(); ++i) {
            double th = std::tanh(xv2[i]);
            dx[i] += cot[i] * (1.0 - th * th);
        }
    });
}

NodeId sigmoid_clamped(Tape& t, NodeId x, double eps) {
    if (!(eps > 0.0 && eps < 0.5))
        throw ConfigError("sigmoid_clamped: eps must be in (0, 0.5), got " + std::to_string(eps));
    const Tensor& xv = t.value(x);
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i)
        y[i] = std::clamp(stable_sigmoid(xv[i]), eps, 1.0 - eps);
    return t.push(std::move(y), {x}, [x, eps](Tape& tp, const Tensor& cot) {
        const Tensor& xv2 = tp.value(x);
        Tensor& dx = tp.cot_accum(x);
        for (std::size_t i = 0; i < xv2.size(); ++i) {
            double s = stable_sigmoid(xv2[i]);
            if (s < eps || s > 1.0 - eps) continue;  // clamped: derivative 0
            dx[i] += cot[i] * s * (1.0 - s);
        }
    });
}

NodeId grl(Tape& t, NodeId x, double mu) {
    if (mu < 0.0) throw ConfigError("grl: mu must be >= 0, got " + std::to_string(mu));
    Tensor y = t.value(x);  // identity forward (bitwise copy)
    if (mu == 0.0) {
        // reversal disabled: cut the gradient path entirely so upstream
        // parameters see exact zeros, not -0.0 debris
        return t.push(std::move(y), {x}, nullptr, /*force_no_grad=*/true);
    }
    return t.push(std::move(y), {x}, [x, mu](Tape& tp, const Tensor& cot) {
        kernels::axpy(-mu, cot.data(), tp.cot_accum(x).data(), cot.size());
    });
}

NodeId concat_rows(Tape& t, NodeId a, NodeId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require_rank2(av, "concat_rows: a");
    require_rank2(bv, "concat_rows: b");
    if (av.cols() != bv.cols())
        throw DimensionError("concat_rows: col mismatch " + std::to_string(av.cols()) + " vs " +
                             std::to_string(bv.cols()));
    std::size_t ra = av.rows(), rb = bv.rows(), c = av.cols();
    Tensor y({ra + rb, c});
    std::copy(av.data(), av.data() + ra * c, y.data());
    std::copy(bv.data(), bv.data() + rb * c, y.data() + ra * c);
    return t.push(std::move(y), {a, b}, [a, b, ra, rb, c](Tape& tp, const Tensor& cot) {
        Tensor& da = tp.cot_accum(a);
        Tensor& db = tp.cot_accum(b);
        kernels::vadd(da.data(), cot.data(), da.data(), ra * c);
        kernels::vadd(db.data(), cot.data() + ra * c, db.data(), rb * c);
    });
}

NodeId row_normalize(Tape& t, NodeId x) {
    const Tensor& xv = t.value(x);
    require_rank2(xv, "row_normalize: x");
    std::size_t r = xv.rows(), c = xv.cols();
    Tensor y({r, c});
    std::vector<double> norms(r);
    for (std::size_t i = 0; i < r; ++i) {
        double n = std::sqrt(kernels::sumsq(xv.row_ptr(i), c));
        if (n == 0.0)
            throw DegenerateInputError("row_normalize: zero-norm row " + std::to_string(i));
        norms[i] = n;
        const double* src = xv.row_ptr(i);
        double* dst = y.row_ptr(i);
        for (std::size_t j = 0; j < c; ++j) dst[j] = src[j] / n;
    }
    Tensor z = y;  // unit rows, captured for the VJP
    return t.push(std::move(y), {x},
                  [x, z = std::move(z), norms, r, c](Tape& tp, const Tensor& cot) {
                      Tensor& dx = tp.cot_accum(x);
                      // d(v/||v||) applied to cot: (cot - z (z·cot)) / ||v||
                      for (std::size_t i = 0; i < r; ++i) {
                          const double* zr = z.row_ptr(i);
                          const double* g = cot.row_ptr(i);
                          double* d = dx.row_ptr(i);
                          double zg = kernels::dot(zr, g, c);
                          for (std::size_t j = 0; j < c; ++j)
                              d[j] += (g[j] - zg * zr[j]) / norms[i];
                      }
                  });
}

NodeId weighted_sum(Tape& t, const std::vector<std::pair<NodeId, double>>& terms) {
    if (terms.empty()) throw PreconditionError("weighted_sum: needs at least one term");
    double acc = 0.0;
    for (const auto& [id, w] : terms) {
        if (t.value(id).size() != 1)
            throw PreconditionError("weighted_sum: term " + std::to_string(id) +
                                    " is not a scalar");
        acc += w * t.value(id)[0];
    }
    return t.push(Tensor::scalar(acc), [&] {
        std::vector<NodeId> ps;
        for (const auto& [id, w] : terms) ps.push_back(id);
        return ps;
    }(), [terms](Tape& tp, const Tensor& cot) {
        for (const auto& [id, w] : terms) tp.cot_accum(id)[0] += w * cot[0];
    });
}

}  // namespace ops

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 && logits.rank() != 2)
        throw DimensionError("softmax: expected rank 1 or 2, got shape " +
                             shape_str(logits.shape()));
    std::size_t rows = logits.rank() == 2 ? logits.rows() : 1;
    std::size_t cols = logits.rank() == 2 ? logits.cols() : logits.size();
    if (cols == 0) throw DimensionError("softmax: empty rows");
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* src = logits.data() + i * cols;
        double* dst = out.data() + i * cols;
        double m = src[0];
        for (std::size_t j = 1; j < cols; ++j) m = std::max(m, src[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            dst[j] = std::exp(src[j] - m);
            s += dst[j];
        }
        for (std::size_t j = 0; j < cols; ++j) dst[j] /= s;
    }
    return out;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError("cosine_similarity: size mismatch " + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()));
    double na = std::sqrt(kernels::sumsq(a.data(), a.size()));
    double nb = std::sqrt(kernels::sumsq(b.data(), b.size()));
    if (na == 0.0 || nb == 0.0)
        throw DegenerateInputError("cosine_similarity: zero-norm vector");
    return kernels::dot(a.data(), b.data(), a.size()) / (na * nb);
}

Tensor grl_forward(const Tensor& x) { return x; }

Tensor grl_backward(const Tensor& cotangent, double mu) {
    if (mu < 0.0) throw ConfigError("grl_backward: mu must be >= 0, got " + std::to_string(mu));
    if (mu == 0.0) return Tensor::zeros_like(cotangent);
    Tensor out = cotangent;
    kernels::scal(-mu, out.data(), out.size());
    return out;
}

}  // namespace cat
