#include "ihan/adamw.hpp"

#include <cmath>

#include "ihan/errors.hpp"

namespace ihan {

void AdamW::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("adamw: " + std::to_string(params.size()) + " params vs " +
                             std::to_string(grads.size()) + " grads");
    }
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Tensor* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    } else if (m_.size() != params.size()) {
        throw DimensionError("adamw: parameter count changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(m_[i])) {
            throw DimensionError("adamw: param " + std::to_string(i) + " shape " + p.shape_str() +
                                 " vs grad " + g.shape_str());
        }
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int k = 0; k < p.size(); ++k) {
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= cfg_.learning_rate * (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * p[k]);
        }
    }
}

} // namespace ihan
