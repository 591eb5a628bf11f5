#pragma once

#include <cstdint>
#include <vector>

#include "ffkit/tensor.hpp"

namespace ffkit {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. State is keyed by parameter position, so the
// caller must pass the same parameter list (same order, same shapes) on every
// step. Updates are deterministic given identical state and gradients.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

    const AdamConfig& config() const { return cfg_; }
    int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace ffkit
