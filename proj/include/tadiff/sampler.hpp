#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tadiff/denoiser.hpp"
#include "tadiff/diffusion.hpp"
#include "tadiff/errors.hpp"
#include "tadiff/rng.hpp"
#include "tadiff/schedule.hpp"
#include "tadiff/tensor.hpp"

namespace tadiff {

struct SamplerConfig {
    int mask_fusion_steps = 10;  // T_m
    int ensembles = 5;           // K
    uint64_t seed = 0;

    void validate(const ScheduleTable& table) const {
        if (mask_fusion_steps < 1 || mask_fusion_steps > table.steps())
            throw ConfigError("sampler.T_m: must lie in [1, schedule.T]");
        if (ensembles < 1) throw ConfigError("sampler.ensembles: must be >= 1");
    }
};

// Denoiser callback used during inference. Input is the 3C source channels
// concatenated with the C noised-target channels; the returned mask values are
// probabilities in [0, 1] (the network adapter squashes raw logits).
template <typename T>
using DenoiseFn =
    std::function<DenoiserOutputT<T>(const TensorT<T>& x_in, const PairSet& pairs, int t)>;

template <typename T>
struct SampleResultT {
    TensorT<T> generated;  // C x H x W future image
    TensorT<T> masks;      // 4 x H x W fused probabilities (s1, s2, s3, f)
    int steps = 0;
    uint64_t seed = 0;
};

template <typename T>
struct UncertaintyMapsT {
    TensorT<T> image_mean, image_std;  // C x H x W
    TensorT<T> mask_mean, mask_std;    // 4 x H x W
    int ensembles = 0;
};

// One ancestral update: posterior mean from the noise estimate plus
// sqrt(beta_tilde_t) * z. z must be absent (or all zero) at t = 1.
template <typename T>
TensorT<T> reverse_step(const TensorT<T>& x_t, const TensorT<T>& eps_hat, int t,
                        const ScheduleTable& table, const TensorT<T>* z = nullptr) {
    if (z != nullptr) {
        check_same_shape(x_t, *z, "reverse_step");
        if (t == 1)
            for (std::size_t i = 0; i < z->numel(); ++i)
                if ((*z)[i] != T(0))
                    throw std::invalid_argument("reverse_step: noise must be zero at t = 1");
    }
    TensorT<T> out = posterior_mean_from_eps(x_t, eps_hat, t, table);
    if (z != nullptr && t > 1) {
        const T s = static_cast<T>(std::sqrt(table.beta_tilde(t)));
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += s * (*z)[i];
    }
    return out;
}

// Full reverse run from x_T ~ N(0, I): generates the future image and fuses
// the mask head over the last mask_fusion_steps steps with weights
// alpha_bar_t / gamma (a convex combination).
template <typename T>
SampleResultT<T> sample(const std::array<TensorT<T>, 3>& sources, const PairSet& pairs,
                        const DenoiseFn<T>& denoise, const SamplerConfig& cfg,
                        const ScheduleTable& table) {
    cfg.validate(table);
    const int c = sources[0].dim(0), h = sources[0].dim(1), w = sources[0].dim(2);
    for (const auto& s : sources)
        if (!(s.rank() == 3 && s.dim(0) == c && s.dim(1) == h && s.dim(2) == w))
            throw std::invalid_argument("sample: source image shapes differ");

    Rng rng(derive_seed(cfg.seed, 0x5A3FULL));
    TensorT<T> x = normal_tensor<T>({c, h, w}, rng);
    TensorT<T> fused({4, h, w});
    const double gamma = mask_fusion_gamma(table, cfg.mask_fusion_steps);

    TensorT<T> x_in({4 * c, h, w});
    const std::size_t plane = static_cast<std::size_t>(c) * h * w;
    for (int s = 0; s < 3; ++s)
        std::copy(sources[s].data(), sources[s].data() + plane, x_in.data() + s * plane);

    for (int t = table.steps(); t >= 1; --t) {
        std::copy(x.data(), x.data() + plane, x_in.data() + 3 * plane);
        DenoiserOutputT<T> out = denoise(x_in, pairs, t);
        if (!out.eps_hat.same_shape(x) || out.mask_logits.dim(0) != 4)
            throw std::invalid_argument("sample: denoiser output shape mismatch");
        if (t > 1) {
            TensorT<T> z = normal_tensor<T>({c, h, w}, rng);
            x = reverse_step(x, out.eps_hat, t, table, &z);
        } else {
            x = reverse_step(x, out.eps_hat, t, table);
        }
        if (t <= cfg.mask_fusion_steps) {
            const T wgt = static_cast<T>(table.alpha_bar(t) / gamma);
            for (std::size_t i = 0; i < fused.numel(); ++i) fused[i] += wgt * out.mask_logits[i];
        }
    }
    return SampleResultT<T>{std::move(x), std::move(fused), table.steps(), cfg.seed};
}

// Per-pixel mean and population standard deviation over member tensors,
// accumulated in member order (parallel/serial equivalent).
template <typename T>
void population_mean_std(const std::vector<TensorT<T>>& members, TensorT<T>& mean,
                         TensorT<T>& stdev) {
    const std::size_t n = members.at(0).numel();
    const double k = static_cast<double>(members.size());
    std::vector<double> acc(n, 0.0);
    for (const auto& m : members)
        for (std::size_t i = 0; i < n; ++i) acc[i] += m[i];
    mean = TensorT<T>(members[0].shape());
    for (std::size_t i = 0; i < n; ++i) mean[i] = static_cast<T>(acc[i] / k);
    // Two-pass variance: exact zero for a single member.
    std::vector<double> var(n, 0.0);
    for (const auto& m : members)
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(m[i]) - acc[i] / k;
            var[i] += d * d;
        }
    stdev = TensorT<T>(members[0].shape());
    for (std::size_t i = 0; i < n; ++i) stdev[i] = static_cast<T>(std::sqrt(var[i] / k));
}

// K independent runs with child seeds derived from cfg.seed; members may be
// computed concurrently, the reduction order is fixed.
template <typename T>
UncertaintyMapsT<T> ensemble(const std::array<TensorT<T>, 3>& sources, const PairSet& pairs,
                             const DenoiseFn<T>& denoise, const SamplerConfig& cfg,
                             const ScheduleTable& table,
                             std::vector<SampleResultT<T>>* members_out = nullptr) {
    cfg.validate(table);
    const int k = cfg.ensembles;
    std::vector<SampleResultT<T>> members(k);
    std::vector<std::string> errors(k);
#pragma omp parallel for schedule(dynamic, 1)
    for (int m = 0; m < k; ++m) {
        try {
            SamplerConfig child = cfg;
            child.seed = derive_seed(cfg.seed, 0xE73BULL, static_cast<uint64_t>(m));
            members[m] = sample(sources, pairs, denoise, child, table);
        } catch (const std::exception& e) {
            errors[m] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error("ensemble member failed: " + e);

    std::vector<TensorT<T>> images, masks;
    for (auto& m : members) {
        images.push_back(m.generated);
        masks.push_back(m.masks);
    }
    UncertaintyMapsT<T> maps;
    maps.ensembles = k;
    population_mean_std(images, maps.image_mean, maps.image_std);
    population_mean_std(masks, maps.mask_mean, maps.mask_std);
    if (members_out) *members_out = std::move(members);
    return maps;
}

// Wraps a trained network as a DenoiseFn; raw mask logits pass through the
// logistic map so fused masks are interpretable as probabilities.
template <typename T>
DenoiseFn<T> make_denoise_fn(const DenoiserT<T>& net, const std::vector<T>& params) {
    return [&net, &params](const TensorT<T>& x_in, const PairSet& pairs, int t) {
        DenoiserOutputT<T> out = net.apply(x_in, pairs, t, params);
        for (std::size_t i = 0; i < out.mask_logits.numel(); ++i)
            out.mask_logits[i] = logistic(out.mask_logits[i]);
        return out;
    };
}

}  // namespace tadiff
