#pragma once

#include <cmath>
#include <vector>

#include "encflow/cnn.hpp"
#include "encflow/rnn.hpp"
#include "encflow/tree.hpp"

namespace encflow {

// Central-difference check of an analytic gradient. fn(theta, grad_or_null)
// returns the loss and, when given a vector, accumulates into it.
template <typename F>
double gradient_check_fn(F&& fn, const std::vector<double>& theta,
                         double eps = 1e-5) {
    std::vector<double> grad(theta.size(), 0.0);
    fn(theta, &grad);
    std::vector<double> probe = theta;
    double worst = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + eps;
        double up = fn(probe, nullptr);
        probe[i] = theta[i] - eps;
        double down = fn(probe, nullptr);
        probe[i] = theta[i];
        double numeric = (up - down) / (2.0 * eps);
        double denom = std::max(std::fabs(grad[i]) + std::fabs(numeric), 1e-8);
        worst = std::max(worst, std::fabs(grad[i] - numeric) / denom);
    }
    return worst;
}

inline double gradient_check(const RnnModel& model, const Matrix& sample,
                             double y, double eps = 1e-5) {
    detail::RnnNet net{model.params, model.input_dim};
    auto fn = [&net, &sample, y](const std::vector<double>& theta,
                                 std::vector<double>* grad) {
        if (grad) return net.loss_grad(theta, sample, y, *grad);
        return bce_from_logit(net.forward(theta, sample, nullptr), y);
    };
    return gradient_check_fn(fn, model.theta, eps);
}

inline double gradient_check(const CnnModel& model, const Matrix& sample,
                             double y, double eps = 1e-5) {
    detail::CnnNet net{model.params, model.in_h, model.in_w};
    auto fn = [&net, &sample, y](const std::vector<double>& theta,
                                 std::vector<double>* grad) {
        if (grad) return net.loss_grad(theta, sample, y, *grad);
        return bce_from_logit(net.forward(theta, sample, nullptr), y);
    };
    return gradient_check_fn(fn, model.theta, eps);
}

inline double gradient_check(const RandomForestModel&, const Matrix&, double,
                             double = 1e-5) {
    throw NotDifferentiable("tree ensembles have no gradient");
}

inline double gradient_check(const GbtModel&, const Matrix&, double,
                             double = 1e-5) {
    throw NotDifferentiable("tree ensembles have no gradient");
}

}  // namespace encflow
