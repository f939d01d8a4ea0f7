#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "imml/tensor.hpp"

namespace imml {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

// Bias-corrected Adam with decoupled weight decay: each step first shrinks
// the parameter by lr*weight_decay*param, then applies the Adam delta.
// Moment slots are keyed by parameter id, so the same optimizer instance can
// serve any subset of its parameters per step without cross-talk.
class Adam {
public:
    explicit Adam(AdamConfig cfg);

    // One update over the given leaf parameters, in place. Parameters whose
    // gradient is absent from the map receive a zero gradient (decay still
    // applies). step_count increases by exactly 1.
    void step(const std::vector<Tensor>& params, const GradientMap& grads);

    std::size_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }
    void set_learning_rate(double lr);

private:
    struct Slot {
        std::vector<double> m;
        std::vector<double> v;
    };

    AdamConfig cfg_;
    std::size_t step_count_ = 0;
    std::unordered_map<std::uint64_t, Slot> slots_;
};

}  // namespace imml
