#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cat/tensor.hpp"

// Central-difference gradient oracle. Evaluates the loss twice up front and
// throws OracleError if the bits differ (a non-deterministic loss makes the
// check meaningless).

namespace cat {

struct FdReport {
    double max_abs_err = 0.0;
    // per-element |analytic-numeric| / max(|analytic|, |numeric|, denom_floor)
    double max_rel_err = 0.0;
    std::size_t worst_input = 0;   // which tensor
    std::size_t worst_index = 0;   // flat index within it
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool pass = false;  // max_rel_err <= rtol
};

using LossFn = std::function<double(const std::vector<Tensor>&)>;

// denom_floor keeps near-zero gradient entries from inflating the relative
// error: with rtol 1e-4 and floor 1e-3 the absolute slack is 1e-7.
FdReport finite_diff_check(const LossFn& loss_fn, std::vector<Tensor> inputs,
                           const std::vector<Tensor>& analytic, double rtol = 1e-4,
                           double h = 1e-5, double denom_floor = 1e-3);

}  // namespace cat
