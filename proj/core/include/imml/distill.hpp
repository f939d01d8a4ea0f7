#pragma once

#include <vector>

#include "imml/tensor.hpp"

namespace imml {

struct DistillConfig {
    double temperature = 2.0;  // T
    double alpha = 0.1;        // adversarial weight on the generator head
    double beta = 1.0;         // imitation weight
    double gamma = 0.999;      // EMA retention rate for the teacher

    void validate() const;  // throws ValueError on out-of-range fields
};

// Temperature-softened KL(student || teacher) scaled by T^2 so the gradient
// magnitude stays comparable across temperatures. The teacher is a constant:
// no gradient flows toward it. Logits may be [C] or [B, C] (row-averaged).
Tensor kl_imitation(const Tensor& student_logits, const Tensor& teacher_logits,
                    double temperature);

// Squared difference of the predictions, averaged when given a batch. The
// teacher prediction is treated as a constant.
Tensor regression_imitation(const Tensor& student_pred, const Tensor& teacher_pred);

struct ULosses {
    Tensor backbone_loss;   // task + beta * imitation; drives backbone and head
    Tensor generator_loss;  // task + beta * imitation + alpha * adversarial
};

// Composite objectives; the adversarial term is deliberately absent from the
// backbone loss (it only shapes the generator head).
ULosses total_u_loss(const Tensor& l_task, const Tensor& l_gan_g, const Tensor& l_im,
                     const DistillConfig& cfg);

// theta_m <- gamma * theta_m + (1 - gamma) * theta_u, elementwise, in place.
// Parameter lists must pair up by position with identical shapes.
void ema_update(const std::vector<Tensor>& theta_m, const std::vector<Tensor>& theta_u,
                double gamma);

}  // namespace imml
