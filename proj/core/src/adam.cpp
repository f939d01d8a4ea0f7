#include "imml/adam.hpp"

#include <cmath>
#include <string>

#include "imml/errors.hpp"

namespace imml {

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
    if (cfg_.learning_rate < 0) throw ValueError("adam: learning_rate must be >= 0");
    if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1)
        throw ValueError("adam: betas must lie in [0,1)");
    if (cfg_.epsilon <= 0) throw ValueError("adam: epsilon must be positive");
    if (cfg_.weight_decay < 0) throw ValueError("adam: weight_decay must be >= 0");
}

void Adam::set_learning_rate(double lr) {
    if (lr < 0) throw ValueError("adam: learning_rate must be >= 0");
    cfg_.learning_rate = lr;
}

void Adam::step(const std::vector<Tensor>& params, const GradientMap& grads) {
    ++step_count_;
    double t = static_cast<double>(step_count_);
    double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (const Tensor& p : params) {
        if (!p.is_leaf() || !p.requires_grad())
            throw ValueError("adam: parameters must be requires_grad leaves");
        Tensor g = grads.grad_for(p);
        if (g.shape() != p.shape())
            throw ShapeError("adam: gradient shape " + shape_str(g.shape()) +
                             " does not match parameter " + shape_str(p.shape()));
        const std::vector<double>& gv = g.values();
        for (double x : gv)
            if (!std::isfinite(x)) throw NumericError("adam: non-finite gradient");

        Slot& slot = slots_[p.id()];
        std::vector<double>& pv = const_cast<Tensor&>(p).values_mut();
        if (slot.m.empty()) {
            slot.m.assign(pv.size(), 0.0);
            slot.v.assign(pv.size(), 0.0);
        } else if (slot.m.size() != pv.size()) {
            throw ShapeError("adam: moment slot size disagrees with parameter");
        }

        double lr = cfg_.learning_rate;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            pv[i] -= lr * cfg_.weight_decay * pv[i];
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * gv[i];
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * gv[i] * gv[i];
            double mh = slot.m[i] / bc1;
            double vh = slot.v[i] / bc2;
            pv[i] -= lr * mh / (std::sqrt(vh) + cfg_.epsilon);
            if (!std::isfinite(pv[i])) throw NumericError("adam: non-finite parameter update");
        }
    }
}

}  // namespace imml
