#include "imml/distill.hpp"

#include "imml/errors.hpp"

#include <cmath>
#include <string>

namespace imml {

void DistillConfig::validate() const {
    if (!std::isfinite(temperature) || temperature <= 0.0) {
        throw ValueError("distill: temperature must be finite and > 0");
    }
    if (!std::isfinite(alpha) || alpha < 0.0) {
        throw ValueError("distill: alpha must be finite and >= 0");
    }
    if (!std::isfinite(beta) || beta < 0.0) {
        throw ValueError("distill: beta must be finite and >= 0");
    }
    if (!std::isfinite(gamma) || gamma < 0.0 || gamma > 1.0) {
        throw ValueError("distill: gamma must lie in [0, 1]");
    }
}

Tensor kl_imitation(const Tensor& student_logits, const Tensor& teacher_logits,
                    double temperature) {
    return kl_divergence(student_logits, teacher_logits, temperature);
}

Tensor regression_imitation(const Tensor& student_pred, const Tensor& teacher_pred) {
    if (student_pred.size() != teacher_pred.size()) {
        throw ShapeError("regression_imitation: prediction sizes differ");
    }
    Tensor diff = sub(student_pred, teacher_pred.detach());
    return mean(square(diff));
}

namespace {

double scalar_loss_value(const Tensor& t, const char* name) {
    if (t.size() != 1) {
        throw ShapeError(std::string("total_u_loss: ") + name + " must be scalar");
    }
    double v = t.item();
    if (!std::isfinite(v) || v < 0.0) {
        throw ValueError(std::string("total_u_loss: ") + name +
                         " must be finite and >= 0");
    }
    return v;
}

}  // namespace

ULosses total_u_loss(const Tensor& l_task, const Tensor& l_gan_g, const Tensor& l_im,
                     const DistillConfig& cfg) {
    cfg.validate();
    scalar_loss_value(l_task, "task loss");
    scalar_loss_value(l_gan_g, "adversarial loss");
    scalar_loss_value(l_im, "imitation loss");

    Tensor backbone = add(l_task, mul_scalar(l_im, cfg.beta));
    Tensor generator = add(backbone, mul_scalar(l_gan_g, cfg.alpha));
    return ULosses{backbone, generator};
}

void ema_update(const std::vector<Tensor>& theta_m, const std::vector<Tensor>& theta_u,
                double gamma) {
    if (!std::isfinite(gamma) || gamma < 0.0 || gamma > 1.0) {
        throw ValueError("ema_update: gamma must lie in [0, 1]");
    }
    if (theta_m.size() != theta_u.size()) {
        throw ShapeError("ema_update: parameter lists differ in length");
    }
    for (std::size_t p = 0; p < theta_m.size(); ++p) {
        Tensor m = theta_m[p];
        const Tensor& u = theta_u[p];
        if (m.shape() != u.shape()) {
            throw ShapeError("ema_update: parameter " + std::to_string(p) +
                             " shapes differ");
        }
        std::vector<double>& mv = m.values_mut();
        const std::vector<double>& uv = u.values();
        for (std::size_t i = 0; i < mv.size(); ++i) {
            mv[i] = gamma * mv[i] + (1.0 - gamma) * uv[i];
        }
    }
}

}  // namespace imml
