#pragma once

#include <cmath>

#include "tadiff/schedule.hpp"
#include "tadiff/tensor.hpp"

namespace tadiff {

// Forward corruption: x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
template <typename T>
TensorT<T> forward_sample(const TensorT<T>& x0, int t, const TensorT<T>& eps,
                          const ScheduleTable& table) {
    check_same_shape(x0, eps, "forward_sample");
    const double ab = table.alpha_bar(t);
    const T cs = static_cast<T>(std::sqrt(ab));
    const T cn = static_cast<T>(std::sqrt(1.0 - ab));
    TensorT<T> out(x0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = cs * x0[i] + cn * eps[i];
    return out;
}

// Exact inverse of forward_sample for the same noise draw:
// x0 = (x_t - sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_bar_t).
template <typename T>
TensorT<T> recover_x0(const TensorT<T>& x_t, const TensorT<T>& eps, int t,
                      const ScheduleTable& table) {
    check_same_shape(x_t, eps, "recover_x0");
    const double ab = table.alpha_bar(t);
    const T inv = static_cast<T>(1.0 / std::sqrt(ab));
    const T cn = static_cast<T>(std::sqrt(1.0 - ab));
    TensorT<T> out(x_t.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (x_t[i] - cn * eps[i]) * inv;
    return out;
}

// Posterior mean of q(x_{t-1} | x_t, x0):
//   sqrt(alpha_bar_{t-1}) * beta_t / (1 - alpha_bar_t) * x0
// + sqrt(alpha_t) * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * x_t.
template <typename T>
TensorT<T> posterior_mean_from_x0(const TensorT<T>& x_t, const TensorT<T>& x0, int t,
                                  const ScheduleTable& table) {
    check_same_shape(x_t, x0, "posterior_mean_from_x0");
    const double ab = table.alpha_bar(t);
    const double ab_prev = table.alpha_bar(t - 1);
    const T c0 = static_cast<T>(std::sqrt(ab_prev) * table.beta(t) / (1.0 - ab));
    const T ct = static_cast<T>(std::sqrt(table.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab));
    TensorT<T> out(x_t.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c0 * x0[i] + ct * x_t[i];
    return out;
}

// Same posterior mean written in terms of the noise estimate:
//   (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t).
template <typename T>
TensorT<T> posterior_mean_from_eps(const TensorT<T>& x_t, const TensorT<T>& eps_hat, int t,
                                   const ScheduleTable& table) {
    check_same_shape(x_t, eps_hat, "posterior_mean_from_eps");
    const double a = table.alpha(t);
    const T ce = static_cast<T>((1.0 - a) / std::sqrt(1.0 - table.alpha_bar(t)));
    const T inv = static_cast<T>(1.0 / std::sqrt(a));
    TensorT<T> out(x_t.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (x_t[i] - ce * eps_hat[i]) * inv;
    return out;
}

// Plain noise-matching objective: sum of squared residuals (no weighting).
template <typename T>
double simple_mse_objective(const TensorT<T>& eps, const TensorT<T>& eps_hat) {
    check_same_shape(eps, eps_hat, "simple_mse_objective");
    double sum = 0.0;
    for (std::size_t i = 0; i < eps.numel(); ++i) {
        const double d = static_cast<double>(eps[i]) - static_cast<double>(eps_hat[i]);
        sum += d * d;
    }
    return sum;
}

}  // namespace tadiff
