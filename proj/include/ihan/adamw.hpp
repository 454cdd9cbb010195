#pragma once

#include <vector>

#include "ihan/tensor.hpp"

namespace ihan {

struct AdamWConfig {
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay Adam with bias correction:
//   m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
//   p <- p - lr * (mhat / (sqrt(vhat) + eps) + wd * p)
// With weight_decay = 0 this is exactly Adam.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    // Moment tensors are sized on the first call; later calls must pass the
    // same shapes in the same order.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    long step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }
    AdamWConfig& config() { return cfg_; }

private:
    AdamWConfig cfg_;
    long t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

} // namespace ihan
