#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adkd/tensor.hpp"

namespace adkd {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// First/second moment state for one parameter list. t increments by exactly
// one per step.
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return t_; }

    // Applies one Adam update using each parameter's accumulated grad.
    // Names are used in error messages only; pass empty for anonymous params.
    void step(std::vector<Tensor>& params, const std::vector<std::string>& names = {});

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace adkd
