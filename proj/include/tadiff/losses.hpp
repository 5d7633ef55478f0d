#pragma once

#include <cmath>
#include <stdexcept>

#include "tadiff/errors.hpp"
#include "tadiff/schedule.hpp"
#include "tadiff/tensor.hpp"

namespace tadiff {

struct LossConfig {
    double lambda = 0.01;     // segmentation weight
    int kernel_size = 11;     // k_l, odd
    double filter_init = 0.1; // per-tap filter value

    void validate() const {
        if (lambda < 0) throw ConfigError("loss.lambda: must be >= 0");
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw ConfigError("loss.k_l: kernel size must be odd and positive");
    }
};

// Soft dice: 1 - 2 |p*g| / (|p| + |g|). Empty-vs-empty counts as perfect (0).
// Predictions are probabilities in [0,1], ground truth binary.
template <typename T>
double dice_loss(const TensorT<T>& pred, const TensorT<T>& gt) {
    check_same_shape(pred, gt, "dice_loss");
    double inter = 0.0, psum = 0.0, gsum = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double p = std::abs(static_cast<double>(pred[i]));
        const double g = std::abs(static_cast<double>(gt[i]));
        inter += p * g;
        psum += p;
        gsum += g;
    }
    const double denom = psum + gsum;
    if (denom == 0.0) return 0.0;
    return 1.0 - 2.0 * inter / denom;
}

// Accumulates scale * d dice_loss / d pred into grad (same shape as pred).
// Assumes pred >= 0 (probabilities), matching the forward definition.
template <typename T>
void dice_loss_grad(const TensorT<T>& pred, const TensorT<T>& gt, double scale,
                    TensorT<T>& grad) {
    check_same_shape(pred, gt, "dice_loss_grad");
    check_same_shape(pred, grad, "dice_loss_grad");
    double inter = 0.0, denom = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        inter += static_cast<double>(pred[i]) * static_cast<double>(gt[i]);
        denom += static_cast<double>(pred[i]) + static_cast<double>(gt[i]);
    }
    if (denom == 0.0) return;
    const double inv2 = 1.0 / (denom * denom);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double g = static_cast<double>(gt[i]);
        // d/dp_i [1 - 2 I / S] with I = sum p g, S = sum p + sum g.
        grad[i] += static_cast<T>(scale * (-2.0 * g * denom + 2.0 * inter) * inv2);
    }
}

namespace detail {

template <typename T>
TensorT<T> mask_session(const TensorT<T>& masks, int s) {
    TensorT<T> out({masks.dim(1), masks.dim(2)});
    const std::size_t per = out.numel();
    const T* src = masks.data() + static_cast<std::size_t>(s) * per;
    std::copy(src, src + per, out.data());
    return out;
}

template <typename T>
void check_masks(const TensorT<T>& pred, const TensorT<T>& gt) {
    if (pred.rank() != 3 || pred.dim(0) != 4)
        throw std::invalid_argument("mask tensor must be 4 x H x W");
    check_same_shape(pred, gt, "seg_loss");
}

}  // namespace detail

// Session-partitioned segmentation loss: mean dice over the three source
// sessions plus sqrt(alpha_bar_t)-weighted dice on the future session.
template <typename T>
double seg_loss(const TensorT<T>& pred_masks, const TensorT<T>& gt_masks, int t,
                const ScheduleTable& table) {
    detail::check_masks(pred_masks, gt_masks);
    double source = 0.0;
    for (int s = 0; s < 3; ++s)
        source += dice_loss(detail::mask_session(pred_masks, s), detail::mask_session(gt_masks, s));
    const double future =
        dice_loss(detail::mask_session(pred_masks, 3), detail::mask_session(gt_masks, 3));
    return source / 3.0 + std::sqrt(table.alpha_bar(t)) * future;
}

// Spatial emphasis around regions that change across sessions:
// omega = (m_hat * exp(-m_hat)) conv box(k_l, filter_init) + 1, zero padding,
// where m_hat is the per-pixel sum of the four ground-truth masks.
template <typename T>
TensorT<T> weight_map(const TensorT<T>& gt_masks, const LossConfig& cfg) {
    cfg.validate();
    if (gt_masks.rank() != 3 || gt_masks.dim(0) != 4)
        throw std::invalid_argument("weight_map: ground-truth masks must be 4 x H x W");
    const int h = gt_masks.dim(1), w = gt_masks.dim(2);
    const std::size_t per = static_cast<std::size_t>(h) * w;

    std::vector<double> u(per);
    for (std::size_t i = 0; i < per; ++i) {
        double m = 0.0;
        for (int s = 0; s < 4; ++s) m += gt_masks[s * per + i];
        u[i] = m * std::exp(-m);
    }

    const int r = cfg.kernel_size / 2;
    TensorT<T> omega({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
            const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
            for (int yy = y0; yy <= y1; ++yy)
                for (int xx = x0; xx <= x1; ++xx) acc += u[static_cast<std::size_t>(yy) * w + xx];
            omega[static_cast<std::size_t>(y) * w + x] = static_cast<T>(acc * cfg.filter_init + 1.0);
        }
    }
    return omega;
}

struct JointLossParts {
    double total = 0.0;
    double weighted_mse = 0.0;
    double seg = 0.0;
};

// Joint objective: mean((omega .* (eps - eps_hat))^2) + lambda * seg_loss,
// with omega broadcast across the noise channels. The weighted noise term is
// a mean over elements, matching the plain-objective convention; a summed
// norm would shrink the published lambda by the element count and starve the
// segmentation task.
template <typename T>
JointLossParts joint_loss(const TensorT<T>& eps, const TensorT<T>& eps_hat,
                          const TensorT<T>& pred_masks, const TensorT<T>& gt_masks, int t,
                          const ScheduleTable& table, const LossConfig& cfg) {
    check_same_shape(eps, eps_hat, "joint_loss");
    if (eps.rank() != 3) throw std::invalid_argument("joint_loss: eps must be C x H x W");
    if (eps.dim(1) != gt_masks.dim(1) || eps.dim(2) != gt_masks.dim(2))
        throw std::invalid_argument("joint_loss: image/mask spatial shapes differ");

    const TensorT<T> omega = weight_map(gt_masks, cfg);
    const std::size_t per = omega.numel();
    double wmse = 0.0;
    for (int c = 0; c < eps.dim(0); ++c) {
        const T* e = eps.data() + c * per;
        const T* eh = eps_hat.data() + c * per;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = static_cast<double>(omega[i]) *
                             (static_cast<double>(e[i]) - static_cast<double>(eh[i]));
            wmse += d * d;
        }
    }
    wmse /= static_cast<double>(eps.numel());
    JointLossParts parts;
    parts.weighted_mse = wmse;
    parts.seg = seg_loss(pred_masks, gt_masks, t, table);
    parts.total = wmse + cfg.lambda * parts.seg;
    return parts;
}

// Gradients of the joint loss with respect to the noise estimate and the
// predicted mask probabilities. d_eps_hat = -2 omega^2 (eps - eps_hat) / N.
template <typename T>
void joint_loss_backward(const TensorT<T>& eps, const TensorT<T>& eps_hat,
                         const TensorT<T>& pred_masks, const TensorT<T>& gt_masks, int t,
                         const ScheduleTable& table, const LossConfig& cfg,
                         TensorT<T>& d_eps_hat, TensorT<T>& d_pred_masks) {
    check_same_shape(eps, eps_hat, "joint_loss_backward");
    const TensorT<T> omega = weight_map(gt_masks, cfg);
    const std::size_t per = omega.numel();
    const double inv_n = 1.0 / static_cast<double>(eps.numel());

    d_eps_hat = TensorT<T>(eps.shape());
    for (int c = 0; c < eps.dim(0); ++c) {
        const T* e = eps.data() + c * per;
        const T* eh = eps_hat.data() + c * per;
        T* out = d_eps_hat.data() + c * per;
        for (std::size_t i = 0; i < per; ++i) {
            const double w2 = static_cast<double>(omega[i]) * static_cast<double>(omega[i]);
            out[i] = static_cast<T>(-2.0 * inv_n * w2 *
                                    (static_cast<double>(e[i]) - static_cast<double>(eh[i])));
        }
    }

    d_pred_masks = TensorT<T>(pred_masks.shape());
    const double fw = std::sqrt(table.alpha_bar(t));
    for (int s = 0; s < 4; ++s) {
        TensorT<T> ps = detail::mask_session(pred_masks, s);
        TensorT<T> gs = detail::mask_session(gt_masks, s);
        TensorT<T> grad({pred_masks.dim(1), pred_masks.dim(2)});
        const double scale = cfg.lambda * (s < 3 ? 1.0 / 3.0 : fw);
        dice_loss_grad(ps, gs, scale, grad);
        std::copy(grad.data(), grad.data() + grad.numel(),
                  d_pred_masks.data() + static_cast<std::size_t>(s) * per);
    }
}

}  // namespace tadiff
