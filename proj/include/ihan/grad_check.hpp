#pragma once

#include <functional>
#include <vector>

#include "ihan/tensor.hpp"

namespace ihan {

// Scalar function of a parameter list. When `grads` is non-null the function
// must also fill it with the analytic gradient (same shapes as params), which
// a tape-backed function gets for free.
using ScalarFn = std::function<double(const std::vector<Tensor>& params, std::vector<Tensor>* grads)>;

// Central finite differences against the analytic gradient, per coordinate.
// Returns the max relative error with denominator max(|analytic|, |numeric|, 1e-8).
// Throws EvalError if the function produces a non-finite value.
double grad_check(const ScalarFn& f, std::vector<Tensor> params, double h);

} // namespace ihan
