#include "ihan/grad_check.hpp"

#include <cmath>

#include "ihan/errors.hpp"

namespace ihan {

double grad_check(const ScalarFn& f, std::vector<Tensor> params, double h) {
    if (!(h >= 1e-6 && h <= 1e-4)) {
        throw ConfigError("grad_check: step size " + std::to_string(h) +
                          " outside [1e-6, 1e-4]");
    }
    std::vector<Tensor> analytic;
    const double base = f(params, &analytic);
    if (!std::isfinite(base)) {
        throw EvalError("grad_check: function value is not finite");
    }
    if (analytic.size() != params.size()) {
        throw ConsistencyError("grad_check: got " + std::to_string(analytic.size()) +
                               " gradient tensors for " + std::to_string(params.size()) + " params");
    }
    double max_rel = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (!analytic[t].same_shape(params[t])) {
            throw DimensionError("grad_check: gradient " + analytic[t].shape_str() +
                                 " vs param " + params[t].shape_str());
        }
        for (int k = 0; k < params[t].size(); ++k) {
            const double orig = params[t][k];
            params[t][k] = orig + h;
            const double fp = f(params, nullptr);
            params[t][k] = orig - h;
            const double fm = f(params, nullptr);
            params[t][k] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw EvalError("grad_check: perturbed function value is not finite");
            }
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[t][k];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

} // namespace ihan
