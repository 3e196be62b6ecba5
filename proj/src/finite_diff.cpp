#include "cat/finite_diff.hpp"

#include <bit>
#include <cmath>
#include <cstdint>

namespace cat {

FdReport finite_diff_check(const LossFn& loss_fn, std::vector<Tensor> inputs,
                           const std::vector<Tensor>& analytic, double rtol, double h,
                           double denom_floor) {
    if (h <= 0.0) throw PreconditionError("finite_diff_check: h must be > 0");
    if (analytic.size() != inputs.size())
        throw PreconditionError("finite_diff_check: analytic gradient count (" +
                                std::to_string(analytic.size()) + ") != input count (" +
                                std::to_string(inputs.size()) + ")");
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (!inputs[i].same_shape(analytic[i]))
            throw DimensionError("finite_diff_check: input " + std::to_string(i) + " shape " +
                                 shape_str(inputs[i].shape()) + " != gradient shape " +
                                 shape_str(analytic[i].shape()));

    double l1 = loss_fn(inputs);
    double l2 = loss_fn(inputs);
    if (std::bit_cast<std::uint64_t>(l1) != std::bit_cast<std::uint64_t>(l2))
        throw OracleError("finite_diff_check: loss function is not deterministic (" +
                          std::to_string(l1) + " vs " + std::to_string(l2) + ")");
    if (!std::isfinite(l1))
        throw OracleError("finite_diff_check: loss is not finite at the base point");

    FdReport rep;
    rep.pass = true;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t j = 0; j < inputs[t].size(); ++j) {
            double saved = inputs[t][j];
            inputs[t][j] = saved + h;
            double fp = loss_fn(inputs);
            inputs[t][j] = saved - h;
            double fm = loss_fn(inputs);
            inputs[t][j] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw OracleError("finite_diff_check: loss not finite near base point (input " +
                                  std::to_string(t) + ", index " + std::to_string(j) + ")");
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[t][j];
            double abs_err = std::abs(a - numeric);
            double rel = abs_err / std::max({std::abs(a), std::abs(numeric), denom_floor});
            if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = t;
                rep.worst_index = j;
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
    }
    rep.pass = rep.max_rel_err <= rtol;
    return rep;
}

}  // namespace cat
