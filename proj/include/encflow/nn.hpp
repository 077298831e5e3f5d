#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "encflow/matrix.hpp"

namespace encflow {

// Adam with bias correction. One instance per training run; step() applies
// one update for the already-averaged gradient.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    uint64_t t = 0;

    explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad,
              double lr) {
        ++t;
        double c1 = 1.0 - std::pow(beta1, double(t));
        double c2 = 1.0 - std::pow(beta2, double(t));
        for (size_t i = 0; i < theta.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

inline void xavier_fill(double* w, size_t count, size_t fan_in, size_t fan_out,
                        Rng& rng) {
    double s = std::sqrt(6.0 / double(fan_in + fan_out));
    for (size_t i = 0; i < count; ++i) w[i] = rng.uniform_real(-s, s);
}

inline void require_binary(const std::vector<int>& y) {
    bool pos = false, neg = false;
    for (int v : y) {
        if (v != 0 && v != 1) throw SpecInvalid("labels must be 0 or 1");
        (v != 0 ? pos : neg) = true;
    }
    if (!pos || !neg) throw DegenerateLabels("training labels are single-class");
}

// Minibatch Adam over a Net exposing loss_grad(theta, sample, y, grad).
// Gradients average within a batch; sample order reshuffles per epoch.
template <typename Net, typename Sample>
std::vector<double> train_epochs(const Net& net, std::vector<double>& theta,
                                 const std::vector<Sample>& xs,
                                 const std::vector<int>& y, size_t epochs,
                                 size_t batch, double lr, Rng& rng) {
    if (batch == 0) batch = xs.size();
    AdamState adam(theta.size());
    std::vector<double> grad(theta.size());
    std::vector<size_t> order(xs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<double> epoch_losses;
    for (size_t e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        double total = 0;
        for (size_t at = 0; at < order.size(); at += batch) {
            size_t n = std::min(batch, order.size() - at);
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss = 0;
            for (size_t k = 0; k < n; ++k) {
                size_t i = order[at + k];
                loss += net.loss_grad(theta, xs[i], double(y[i]), grad);
            }
            for (auto& g : grad) g /= double(n);
            adam.step(theta, grad, lr);
            total += loss;
        }
        epoch_losses.push_back(total / double(order.size()));
    }
    return epoch_losses;
}

}  // namespace encflow
