#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tadiff/errors.hpp"
#include "tadiff/rng.hpp"
#include "tadiff/tensor.hpp"

namespace tadiff {

struct TreatmentDayPair {
    int treatment = 1;  // 1 = CRT, 2 = TMZ
    int day = 0;
};

// Conditioning pairs in source order s1, s2, s3 followed by the target/future pair.
using PairSet = std::array<TreatmentDayPair, 4>;

struct DenoiserConfig {
    int channels = 3;                    // C per session image
    int levels = 3;                      // resolution levels (levels-1 poolings)
    std::vector<int> widths = {16, 32, 64};
    int blocks_per_level = 2;
    int embed_dim = 64;                  // E
    int groups = 8;                      // group-norm groups
    int treatments = 2;                  // vocabulary size, codes 1..treatments
    int mask_sessions = 4;

    int in_channels() const { return 4 * channels; }
    int out_channels() const { return channels + mask_sessions; }
    int cond_dim() const { return 4 * embed_dim; }
    int pool_factor() const { return 1 << (levels - 1); }

    void validate() const {
        if (channels < 1) throw ConfigError("model.channels: must be >= 1");
        if (levels < 1) throw ConfigError("model.levels: must be >= 1");
        if (static_cast<int>(widths.size()) != levels)
            throw ConfigError("model.widths: must list one width per level");
        if (blocks_per_level < 1) throw ConfigError("model.blocks: must be >= 1");
        if (embed_dim < 2 || embed_dim % 2 != 0)
            throw ConfigError("model.embed_dim: must be even and >= 2");
        if (groups < 1) throw ConfigError("model.groups: must be >= 1");
        for (int w : widths)
            if (w < 1 || w % groups != 0)
                throw ConfigError("model.widths: every width must be a positive multiple of model.groups");
        if (treatments < 1) throw ConfigError("model.treatments: must be >= 1");
    }
};

struct ParamEntry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    enum class Init { conv, linear, gamma, zero, table } init = Init::zero;
};

// Flat parameter vector layout; the descriptor is serialized into checkpoints.
class ParamLayout {
public:
    ParamLayout() = default;
    explicit ParamLayout(const DenoiserConfig& cfg) { build(cfg); }

    std::size_t total() const { return total_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    const ParamEntry& find(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw std::invalid_argument("no parameter entry named " + name);
    }

private:
    void add(const std::string& name, std::vector<int> shape, ParamEntry::Init init) {
        ParamEntry e;
        e.name = name;
        e.shape = std::move(shape);
        e.size = 1;
        for (int d : e.shape) e.size *= static_cast<std::size_t>(d);
        e.offset = total_;
        e.init = init;
        total_ += e.size;
        entries_.push_back(std::move(e));
    }

    void add_block(const std::string& prefix, int cin, int cout, int cond_dim) {
        using I = ParamEntry::Init;
        add(prefix + ".gn1.g", {cin}, I::gamma);
        add(prefix + ".gn1.b", {cin}, I::zero);
        add(prefix + ".conv1.w", {cout, cin, 3, 3}, I::conv);
        add(prefix + ".conv1.b", {cout}, I::zero);
        add(prefix + ".cond.w", {cout, cond_dim}, I::linear);
        add(prefix + ".cond.b", {cout}, I::zero);
        add(prefix + ".gn2.g", {cout}, I::gamma);
        add(prefix + ".gn2.b", {cout}, I::zero);
        add(prefix + ".conv2.w", {cout, cout, 3, 3}, I::conv);
        add(prefix + ".conv2.b", {cout}, I::zero);
        if (cin != cout) add(prefix + ".skip.w", {cout, cin, 1, 1}, I::conv);
    }

    void build(const DenoiserConfig& cfg) {
        using I = ParamEntry::Init;
        const int e = cfg.embed_dim;
        add("embed.treat.table", {cfg.treatments, e}, I::table);
        add("embed.treat.mlp.w", {e, e}, I::linear);
        add("embed.treat.mlp.b", {e}, I::zero);
        add("embed.day.mlp.w", {e, e}, I::linear);
        add("embed.day.mlp.b", {e}, I::zero);
        add("embed.time.mlp.w", {e, e}, I::linear);
        add("embed.time.mlp.b", {e}, I::zero);
        add("stem.w", {cfg.widths[0], cfg.in_channels(), 3, 3}, I::conv);
        add("stem.b", {cfg.widths[0]}, I::zero);
        const int full = cfg.cond_dim();
        for (int l = 0; l < cfg.levels; ++l) {
            for (int b = 0; b < cfg.blocks_per_level; ++b) {
                const int cin = b == 0 ? (l == 0 ? cfg.widths[0] : cfg.widths[l - 1]) : cfg.widths[l];
                add_block("enc" + std::to_string(l) + ".b" + std::to_string(b), cin, cfg.widths[l], full);
            }
        }
        for (int b = 0; b < 2; ++b)
            add_block("mid.b" + std::to_string(b), cfg.widths.back(), cfg.widths.back(), e);
        for (int l = cfg.levels - 2; l >= 0; --l) {
            for (int b = 0; b < cfg.blocks_per_level; ++b) {
                const int cin = b == 0 ? cfg.widths[l + 1] + cfg.widths[l] : cfg.widths[l];
                add_block("dec" + std::to_string(l) + ".b" + std::to_string(b), cin, cfg.widths[l], full);
            }
        }
        add("head.gn.g", {cfg.widths[0]}, I::gamma);
        add("head.gn.b", {cfg.widths[0]}, I::zero);
        add("head.conv.w", {cfg.out_channels(), cfg.widths[0], 3, 3}, I::zero);
        add("head.conv.b", {cfg.out_channels()}, I::zero);
    }

    std::vector<ParamEntry> entries_;
    std::size_t total_ = 0;
};

template <typename T>
struct DenoiserOutputT {
    TensorT<T> eps_hat;      // C x H x W
    TensorT<T> mask_logits;  // 4 x H x W
};

template <typename T>
struct ConditioningT {
    std::vector<T> full;  // 3 diff-vectors + summation vector, length 4E
    std::vector<T> mid;   // target embedding + timestep embedding, length E
};

// Standard sinusoidal position encoding: interleaved (sin(v/w_i), cos(v/w_i))
// pairs with geometric frequencies spanning [1, 1e4].
template <typename T>
std::vector<T> sinusoidal_embed(long long value, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("embedding width must be even and >= 2");
    if (value < 0) throw std::invalid_argument("sinusoidal_embed: value must be non-negative");
    const int half = dim / 2;
    const double denom = std::max(half - 1, 1);
    std::vector<T> out(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double omega = std::pow(1e4, static_cast<double>(i) / denom);
        const double arg = static_cast<double>(value) / omega;
        out[2 * i] = static_cast<T>(std::sin(arg));
        out[2 * i + 1] = static_cast<T>(std::cos(arg));
    }
    return out;
}

namespace nn {

constexpr double kGnEps = 1e-5;

// Fixed-association lane reduction; deterministic and vectorizable.
template <typename T>
T dot(const T* a, const T* b, int n) {
    T lane[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
    T rest = T(0);
    for (; i < n; ++i) rest += a[i] * b[i];
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
           ((lane[4] + lane[5]) + (lane[6] + lane[7])) + rest;
}

template <typename T>
T sum(const T* a, int n) {
    T lane[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) lane[j] += a[i + j];
    T rest = T(0);
    for (; i < n; ++i) rest += a[i];
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
           ((lane[4] + lane[5]) + (lane[6] + lane[7])) + rest;
}

// 3x3 convolution, stride 1, zero padding.
template <typename T>
void conv3x3(const T* in, int cin, int h, int w, const T* wgt, const T* bias, T* out, int cout) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc) {
        T* o = out + static_cast<std::size_t>(oc) * h * w;
        std::fill(o, o + static_cast<std::size_t>(h) * w, bias ? bias[oc] : T(0));
        for (int ic = 0; ic < cin; ++ic) {
            const T* x = in + static_cast<std::size_t>(ic) * h * w;
            const T* k = wgt + (static_cast<std::size_t>(oc) * cin + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = ky - 1;
                const int y0 = std::max(0, -sy), y1 = std::min(h, h - sy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = kx - 1;
                    const T wv = k[ky * 3 + kx];
                    const int x0 = std::max(0, -sx), x1 = std::min(w, w - sx);
                    for (int y = y0; y < y1; ++y) {
                        const T* xr = x + static_cast<std::size_t>(y + sy) * w + sx;
                        T* orow = o + static_cast<std::size_t>(y) * w;
                        for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * xr[xx];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3x3_grad_input(const T* wgt, int cin, int cout, int h, int w, const T* dout, T* din) {
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < cin; ++ic) {
        T* dx = din + static_cast<std::size_t>(ic) * h * w;
        std::fill(dx, dx + static_cast<std::size_t>(h) * w, T(0));
        for (int oc = 0; oc < cout; ++oc) {
            const T* dy = dout + static_cast<std::size_t>(oc) * h * w;
            const T* k = wgt + (static_cast<std::size_t>(oc) * cin + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = ky - 1;
                const int y0 = std::max(0, sy), y1 = std::min(h, h + sy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = kx - 1;
                    const T wv = k[ky * 3 + kx];
                    const int x0 = std::max(0, sx), x1 = std::min(w, w + sx);
                    for (int y = y0; y < y1; ++y) {
                        const T* dyr = dy + static_cast<std::size_t>(y - sy) * w - sx;
                        T* dxr = dx + static_cast<std::size_t>(y) * w;
                        for (int xx = x0; xx < x1; ++xx) dxr[xx] += wv * dyr[xx];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3x3_grad_params(const T* in, int cin, int h, int w, const T* dout, int cout, T* dwgt,
                         T* dbias) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc) {
        const T* dy = dout + static_cast<std::size_t>(oc) * h * w;
        dbias[oc] += sum(dy, h * w);
        for (int ic = 0; ic < cin; ++ic) {
            const T* x = in + static_cast<std::size_t>(ic) * h * w;
            T* k = dwgt + (static_cast<std::size_t>(oc) * cin + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = ky - 1;
                const int y0 = std::max(0, -sy), y1 = std::min(h, h - sy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = kx - 1;
                    const int x0 = std::max(0, -sx), x1 = std::min(w, w - sx);
                    T acc = T(0);
                    for (int y = y0; y < y1; ++y)
                        acc += dot(dy + static_cast<std::size_t>(y) * w + x0,
                                   x + static_cast<std::size_t>(y + sy) * w + sx + x0, x1 - x0);
                    k[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

// 1x1 convolution without bias (channel-mix skip path).
template <typename T>
void conv1x1(const T* in, int cin, int hw, const T* wgt, T* out, int cout) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc) {
        T* o = out + static_cast<std::size_t>(oc) * hw;
        std::fill(o, o + hw, T(0));
        for (int ic = 0; ic < cin; ++ic) {
            const T wv = wgt[static_cast<std::size_t>(oc) * cin + ic];
            const T* x = in + static_cast<std::size_t>(ic) * hw;
            for (int i = 0; i < hw; ++i) o[i] += wv * x[i];
        }
    }
}

template <typename T>
void conv1x1_grad_input(const T* wgt, int cin, int cout, int hw, const T* dout, T* din) {
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < cin; ++ic) {
        T* dx = din + static_cast<std::size_t>(ic) * hw;
        for (int oc = 0; oc < cout; ++oc) {
            const T wv = wgt[static_cast<std::size_t>(oc) * cin + ic];
            const T* dy = dout + static_cast<std::size_t>(oc) * hw;
            for (int i = 0; i < hw; ++i) dx[i] += wv * dy[i];
        }
    }
}

template <typename T>
void conv1x1_grad_params(const T* in, int cin, int hw, const T* dout, int cout, T* dwgt) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc) {
        const T* dy = dout + static_cast<std::size_t>(oc) * hw;
        for (int ic = 0; ic < cin; ++ic)
            dwgt[static_cast<std::size_t>(oc) * cin + ic] +=
                dot(dy, in + static_cast<std::size_t>(ic) * hw, hw);
    }
}

template <typename T>
void group_norm(const T* x, int c, int hw, int groups, const T* gamma, const T* beta, T* y,
                T* mean, T* invstd) {
    const int cpg = c / groups;
    const std::size_t n = static_cast<std::size_t>(cpg) * hw;
    for (int g = 0; g < groups; ++g) {
        double s1 = 0.0, s2 = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
            const T* xr = x + static_cast<std::size_t>(g * cpg + cc) * hw;
            s1 += sum(xr, hw);
            s2 += dot(xr, xr, hw);
        }
        const double m = s1 / static_cast<double>(n);
        const double var = std::max(s2 / static_cast<double>(n) - m * m, 0.0);
        const double is = 1.0 / std::sqrt(var + kGnEps);
        mean[g] = static_cast<T>(m);
        invstd[g] = static_cast<T>(is);
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const T* xr = x + static_cast<std::size_t>(ch) * hw;
            T* yr = y + static_cast<std::size_t>(ch) * hw;
            const T a = static_cast<T>(gamma[ch] * is);
            const T b = static_cast<T>(beta[ch] - gamma[ch] * is * m);
            for (int i = 0; i < hw; ++i) yr[i] = a * xr[i] + b;
        }
    }
}

template <typename T>
void group_norm_grad(const T* x, const T* dy, int c, int hw, int groups, const T* gamma,
                     const T* mean, const T* invstd, T* dx, T* dgamma, T* dbeta) {
    const int cpg = c / groups;
    const std::size_t n = static_cast<std::size_t>(cpg) * hw;
    for (int g = 0; g < groups; ++g) {
        const double m = mean[g];
        const double is = invstd[g];
        // Per-channel reductions: sum(dy) and dot(dy, x) determine everything.
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const T* xr = x + static_cast<std::size_t>(ch) * hw;
            const T* dyr = dy + static_cast<std::size_t>(ch) * hw;
            const double s_dy = sum(dyr, hw);
            const double s_dyx = dot(dyr, xr, hw);
            const double dg = is * (s_dyx - m * s_dy);
            dgamma[ch] += static_cast<T>(dg);
            dbeta[ch] += static_cast<T>(s_dy);
            sum_dxhat += gamma[ch] * s_dy;
            sum_dxhat_xhat += gamma[ch] * dg;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const T* xr = x + static_cast<std::size_t>(ch) * hw;
            const T* dyr = dy + static_cast<std::size_t>(ch) * hw;
            T* dxr = dx + static_cast<std::size_t>(ch) * hw;
            // dx = A dy + B + C (x - m) with per-channel constants.
            const T a = static_cast<T>(is * gamma[ch]);
            const T b = static_cast<T>(-is * inv_n * sum_dxhat);
            const T cq = static_cast<T>(-is * is * inv_n * sum_dxhat_xhat);
            for (int i = 0; i < hw; ++i)
                dxr[i] = a * dyr[i] + b + cq * (xr[i] - static_cast<T>(m));
        }
    }
}

template <typename T>
void silu(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}

template <typename T>
void silu_grad(const T* x, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        dx[i] = dy[i] * (s + x[i] * s * (T(1) - s));
    }
}

// 2x2 average pooling; h, w refer to the input resolution.
template <typename T>
void avgpool2(const T* in, int c, int h, int w, T* out) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const T* x = in + static_cast<std::size_t>(ch) * h * w;
        T* o = out + static_cast<std::size_t>(ch) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                const T* p = x + static_cast<std::size_t>(2 * y) * w + 2 * xx;
                o[static_cast<std::size_t>(y) * ow + xx] =
                    (p[0] + p[1] + p[w] + p[w + 1]) * T(0.25);
            }
    }
}

template <typename T>
void avgpool2_grad(const T* dout, int c, int h, int w, T* din) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const T* dy = dout + static_cast<std::size_t>(ch) * oh * ow;
        T* dx = din + static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                const T v = dy[static_cast<std::size_t>(y) * ow + xx] * T(0.25);
                T* p = dx + static_cast<std::size_t>(2 * y) * w + 2 * xx;
                p[0] = v;
                p[1] = v;
                p[w] = v;
                p[w + 1] = v;
            }
    }
}

// Nearest-neighbour x2 upsampling; h, w refer to the input resolution.
template <typename T>
void upsample2(const T* in, int c, int h, int w, T* out) {
    const int oh = h * 2, ow = w * 2;
    for (int ch = 0; ch < c; ++ch) {
        const T* x = in + static_cast<std::size_t>(ch) * h * w;
        T* o = out + static_cast<std::size_t>(ch) * oh * ow;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const T v = x[static_cast<std::size_t>(y) * w + xx];
                T* p = o + static_cast<std::size_t>(2 * y) * ow + 2 * xx;
                p[0] = v;
                p[1] = v;
                p[ow] = v;
                p[ow + 1] = v;
            }
    }
}

template <typename T>
void upsample2_grad(const T* dout, int c, int h, int w, T* din) {
    const int oh = h * 2, ow = w * 2;
    for (int ch = 0; ch < c; ++ch) {
        const T* dy = dout + static_cast<std::size_t>(ch) * oh * ow;
        T* dx = din + static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const T* p = dy + static_cast<std::size_t>(2 * y) * ow + 2 * xx;
                dx[static_cast<std::size_t>(y) * w + xx] = p[0] + p[1] + p[ow] + p[ow + 1];
            }
    }
}

// y[m] = W x + b with W stored row-major [m, n].
template <typename T>
void linear(const T* x, int n, const T* wgt, const T* bias, T* y, int m) {
    for (int r = 0; r < m; ++r)
        y[r] = dot(wgt + static_cast<std::size_t>(r) * n, x, n) + (bias ? bias[r] : T(0));
}

// Accumulating backward: dx += W^T dy, dW += dy x^T, db += dy.
template <typename T>
void linear_grad(const T* x, int n, const T* wgt, const T* dy, int m, T* dx, T* dwgt, T* dbias) {
    for (int r = 0; r < m; ++r) {
        const T g = dy[r];
        const T* wr = wgt + static_cast<std::size_t>(r) * n;
        T* dwr = dwgt + static_cast<std::size_t>(r) * n;
        for (int i = 0; i < n; ++i) {
            if (dx) dx[i] += wr[i] * g;
            dwr[i] += g * x[i];
        }
        if (dbias) dbias[r] += g;
    }
}

}  // namespace nn

template <typename T>
struct BlockCacheT {
    TensorT<T> x;   // block input
    TensorT<T> y1;  // gn1 output
    TensorT<T> a1;  // silu(y1), conv1 input
    TensorT<T> h2;  // conv1 output + conditioning bias, gn2 input
    TensorT<T> y2;  // gn2 output
    TensorT<T> a2;  // silu(y2), conv2 input
    std::vector<T> gn1_mean, gn1_invstd, gn2_mean, gn2_invstd;
    int h = 0, w = 0;
};

template <typename T>
struct DenoiserCacheT {
    bool valid = false;
    TensorT<T> x_in;
    PairSet pairs;
    int t = 0;
    std::array<std::vector<T>, 4> treat_row;  // embedding-table rows
    std::array<std::vector<T>, 4> day_sin;
    std::vector<T> time_sin;
    std::array<std::vector<T>, 4> pair_vec;   // embed_pair outputs
    ConditioningT<T> cond;
    std::vector<BlockCacheT<T>> blocks;       // traversal order
    TensorT<T> head_in;                       // decoder output
    TensorT<T> head_y, head_a;
    std::vector<T> head_gn_mean, head_gn_invstd;
};

// Conditional U-shaped denoiser: consumes the three source images concatenated
// with the noised target, injects treatment-day conditioning per block, and
// emits a noise estimate together with four session mask logits.
template <typename T>
class DenoiserT {
public:
    explicit DenoiserT(DenoiserConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        layout_ = ParamLayout(cfg_);
        build_plan();
    }

    const DenoiserConfig& config() const { return cfg_; }
    const ParamLayout& layout() const { return layout_; }
    std::size_t num_params() const { return layout_.total(); }

    std::vector<T> init_params(uint64_t seed) const {
        Rng rng(derive_seed(seed, 0x1217ULL));
        std::vector<T> p(layout_.total());
        for (const auto& e : layout_.entries()) {
            T* dst = p.data() + e.offset;
            switch (e.init) {
                case ParamEntry::Init::conv: {
                    std::size_t fan_in = 1;
                    for (std::size_t i = 1; i < e.shape.size(); ++i) fan_in *= e.shape[i];
                    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
                    for (std::size_t i = 0; i < e.size; ++i)
                        dst[i] = static_cast<T>(rng.uniform(-s, s));
                    break;
                }
                case ParamEntry::Init::linear: {
                    const double s = 1.0 / std::sqrt(static_cast<double>(e.shape[1]));
                    for (std::size_t i = 0; i < e.size; ++i)
                        dst[i] = static_cast<T>(rng.uniform(-s, s));
                    break;
                }
                case ParamEntry::Init::gamma:
                    for (std::size_t i = 0; i < e.size; ++i) dst[i] = T(1);
                    break;
                case ParamEntry::Init::zero:
                    break;
                case ParamEntry::Init::table:
                    for (std::size_t i = 0; i < e.size; ++i)
                        dst[i] = static_cast<T>(0.02 * rng.normal());
                    break;
            }
        }
        return p;
    }

    // Treatment-table lookup through its MLP plus sinusoidal day embedding
    // through its MLP; the two results are summed into one pair vector.
    std::vector<T> embed_pair(const TreatmentDayPair& pair, const std::vector<T>& params) const {
        check_params(params);
        std::vector<T> row(embed_), dsin, out(embed_), tmp(embed_);
        lookup_treatment(pair, params, row);
        dsin = sinusoidal_embed<T>(pair.day, embed_);
        nn::linear(row.data(), embed_, params.data() + off_.treat_w, params.data() + off_.treat_b,
                   out.data(), embed_);
        nn::linear(dsin.data(), embed_, params.data() + off_.day_w, params.data() + off_.day_b,
                   tmp.data(), embed_);
        for (int i = 0; i < embed_; ++i) out[i] += tmp[i];
        return out;
    }

    // Relative (target minus source) diff-vectors concatenated with the
    // target-plus-timestep summation vector; the summation vector alone is
    // what the bottleneck receives.
    ConditioningT<T> build_conditioning(const PairSet& pairs, int t,
                                        const std::vector<T>& params,
                                        DenoiserCacheT<T>* cache = nullptr) const {
        check_params(params);
        if (t < 1) throw std::invalid_argument("diffusion step t must be >= 1");
        std::array<std::vector<T>, 4> v;
        for (int p = 0; p < 4; ++p) v[p] = embed_pair(pairs[p], params);
        std::vector<T> tsin = sinusoidal_embed<T>(t, embed_);
        std::vector<T> vt(embed_);
        nn::linear(tsin.data(), embed_, params.data() + off_.time_w, params.data() + off_.time_b,
                   vt.data(), embed_);

        ConditioningT<T> cond;
        cond.mid.resize(embed_);
        for (int i = 0; i < embed_; ++i) cond.mid[i] = v[3][i] + vt[i];
        cond.full.resize(4 * static_cast<std::size_t>(embed_));
        for (int s = 0; s < 3; ++s)
            for (int i = 0; i < embed_; ++i)
                cond.full[s * embed_ + i] = v[3][i] - v[s][i];
        std::copy(cond.mid.begin(), cond.mid.end(), cond.full.begin() + 3 * embed_);

        if (cache) {
            cache->pairs = pairs;
            cache->t = t;
            for (int p = 0; p < 4; ++p) {
                cache->treat_row[p].resize(embed_);
                lookup_treatment(pairs[p], params, cache->treat_row[p]);
                cache->day_sin[p] = sinusoidal_embed<T>(pairs[p].day, embed_);
                cache->pair_vec[p] = v[p];
            }
            cache->time_sin = std::move(tsin);
            cache->cond = cond;
        }
        return cond;
    }

    // U-Net pass over prebuilt conditioning.
    DenoiserOutputT<T> forward(const TensorT<T>& x_in, const ConditioningT<T>& cond,
                               const std::vector<T>& params,
                               DenoiserCacheT<T>* cache = nullptr) const {
        check_params(params);
        if (x_in.rank() != 3 || x_in.dim(0) != cfg_.in_channels())
            throw std::invalid_argument("denoiser input must have " +
                                        std::to_string(cfg_.in_channels()) + " channels");
        const int h = x_in.dim(1), w = x_in.dim(2);
        const int f = cfg_.pool_factor();
        if (h % f != 0 || w % f != 0)
            throw std::invalid_argument("input height/width must be multiples of " + std::to_string(f));
        if (static_cast<int>(cond.full.size()) != cfg_.cond_dim() ||
            static_cast<int>(cond.mid.size()) != cfg_.embed_dim)
            throw std::invalid_argument("conditioning vector length mismatch");

        if (cache) {
            cache->valid = false;
            cache->x_in = x_in;
            cache->cond = cond;
            cache->blocks.assign(plan_.size(), {});
        }

        // Stem.
        TensorT<T> cur({cfg_.widths[0], h, w});
        nn::conv3x3(x_in.data(), cfg_.in_channels(), h, w, params.data() + off_.stem_w,
                    params.data() + off_.stem_b, cur.data(), cfg_.widths[0]);

        std::vector<TensorT<T>> skips(cfg_.levels);
        int ch = h, cw = w;
        std::size_t bi = 0;
        for (int l = 0; l < cfg_.levels; ++l) {
            for (int b = 0; b < cfg_.blocks_per_level; ++b, ++bi)
                cur = block_forward(plan_[bi], cur, cond, ch, cw, params,
                                    cache ? &cache->blocks[bi] : nullptr);
            skips[l] = cur;
            if (l < cfg_.levels - 1) {
                TensorT<T> pooled({cfg_.widths[l], ch / 2, cw / 2});
                nn::avgpool2(cur.data(), cfg_.widths[l], ch, cw, pooled.data());
                cur = std::move(pooled);
                ch /= 2;
                cw /= 2;
            }
        }
        for (int b = 0; b < 2; ++b, ++bi)
            cur = block_forward(plan_[bi], cur, cond, ch, cw, params,
                                cache ? &cache->blocks[bi] : nullptr);
        for (int l = cfg_.levels - 2; l >= 0; --l) {
            TensorT<T> up({cfg_.widths[l + 1], ch * 2, cw * 2});
            nn::upsample2(cur.data(), cfg_.widths[l + 1], ch, cw, up.data());
            ch *= 2;
            cw *= 2;
            TensorT<T> cat({cfg_.widths[l + 1] + cfg_.widths[l], ch, cw});
            std::copy(up.data(), up.data() + up.numel(), cat.data());
            std::copy(skips[l].data(), skips[l].data() + skips[l].numel(),
                      cat.data() + up.numel());
            cur = std::move(cat);
            for (int b = 0; b < cfg_.blocks_per_level; ++b, ++bi)
                cur = block_forward(plan_[bi], cur, cond, ch, cw, params,
                                    cache ? &cache->blocks[bi] : nullptr);
        }

        // Output head.
        const int w0 = cfg_.widths[0];
        TensorT<T> y({w0, h, w}), a({w0, h, w});
        std::vector<T> hm(cfg_.groups), hs(cfg_.groups);
        nn::group_norm(cur.data(), w0, h * w, cfg_.groups, params.data() + off_.head_gn_g,
                       params.data() + off_.head_gn_b, y.data(), hm.data(), hs.data());
        nn::silu(y.data(), a.data(), a.numel());
        TensorT<T> out({cfg_.out_channels(), h, w});
        nn::conv3x3(a.data(), w0, h, w, params.data() + off_.head_conv_w,
                    params.data() + off_.head_conv_b, out.data(), cfg_.out_channels());

        if (cache) {
            cache->head_in = std::move(cur);
            cache->head_y = std::move(y);
            cache->head_a = std::move(a);
            cache->head_gn_mean = std::move(hm);
            cache->head_gn_invstd = std::move(hs);
            cache->valid = true;
        }

        DenoiserOutputT<T> result;
        result.eps_hat = TensorT<T>({cfg_.channels, h, w});
        result.mask_logits = TensorT<T>({cfg_.mask_sessions, h, w});
        const std::size_t per = static_cast<std::size_t>(h) * w;
        std::copy(out.data(), out.data() + cfg_.channels * per, result.eps_hat.data());
        std::copy(out.data() + cfg_.channels * per, out.data() + out.numel(),
                  result.mask_logits.data());
        return result;
    }

    // Conditioning construction plus U-Net pass in one call.
    DenoiserOutputT<T> apply(const TensorT<T>& x_in, const PairSet& pairs, int t,
                             const std::vector<T>& params,
                             DenoiserCacheT<T>* cache = nullptr) const {
        const ConditioningT<T> cond = build_conditioning(pairs, t, params, cache);
        return forward(x_in, cond, params, cache);
    }

    // Reverse-mode gradient of apply() with respect to every parameter.
    std::vector<T> backward(const TensorT<T>& d_eps_hat, const TensorT<T>& d_mask_logits,
                            const DenoiserCacheT<T>& cache, const std::vector<T>& params) const {
        check_params(params);
        if (!cache.valid) throw StateError("denoiser backward requires a cached forward pass");
        if (cache.time_sin.empty())
            throw StateError("denoiser backward requires a cache produced by apply()");
        const int h = cache.x_in.dim(1), w = cache.x_in.dim(2);
        const std::size_t per = static_cast<std::size_t>(h) * w;
        if (d_eps_hat.rank() != 3 || d_eps_hat.dim(0) != cfg_.channels ||
            d_mask_logits.dim(0) != cfg_.mask_sessions)
            throw std::invalid_argument("output gradient shape mismatch");

        std::vector<T> grads(layout_.total(), T(0));
        std::vector<T> d_full(cfg_.cond_dim(), T(0));
        std::vector<T> d_mid(embed_, T(0));

        // Head backward.
        TensorT<T> d_out({cfg_.out_channels(), h, w});
        std::copy(d_eps_hat.data(), d_eps_hat.data() + cfg_.channels * per, d_out.data());
        std::copy(d_mask_logits.data(), d_mask_logits.data() + cfg_.mask_sessions * per,
                  d_out.data() + cfg_.channels * per);

        const int w0 = cfg_.widths[0];
        TensorT<T> d_a({w0, h, w});
        nn::conv3x3_grad_input(params.data() + off_.head_conv_w, w0, cfg_.out_channels(), h, w,
                               d_out.data(), d_a.data());
        nn::conv3x3_grad_params(cache.head_a.data(), w0, h, w, d_out.data(), cfg_.out_channels(),
                                grads.data() + off_.head_conv_w, grads.data() + off_.head_conv_b);
        TensorT<T> d_y({w0, h, w});
        nn::silu_grad(cache.head_y.data(), d_a.data(), d_y.data(), d_y.numel());
        TensorT<T> cur({w0, h, w});
        nn::group_norm_grad(cache.head_in.data(), d_y.data(), w0, h * w, cfg_.groups,
                            params.data() + off_.head_gn_g, cache.head_gn_mean.data(),
                            cache.head_gn_invstd.data(), cur.data(),
                            grads.data() + off_.head_gn_g, grads.data() + off_.head_gn_b);

        // Decoder backward (decoder levels were built from levels-2 down to 0,
        // so reverse traversal walks them from 0 upwards).
        std::size_t bi = plan_.size();
        int ch = h, cw = w;
        std::vector<TensorT<T>> d_skip(cfg_.levels);
        for (int l = 0; l <= cfg_.levels - 2; ++l) {
            for (int b = cfg_.blocks_per_level - 1; b >= 0; --b) {
                --bi;
                cur = block_backward(plan_[bi], cur, cache.blocks[bi], cache.cond, ch, cw,
                                     params, grads, d_full, d_mid);
            }
            // Split the concatenation and undo the upsampling.
            const int up_c = cfg_.widths[l + 1];
            d_skip[l] = TensorT<T>({cfg_.widths[l], ch, cw});
            std::copy(cur.data() + static_cast<std::size_t>(up_c) * ch * cw,
                      cur.data() + cur.numel(), d_skip[l].data());
            TensorT<T> d_deep({up_c, ch / 2, cw / 2});
            nn::upsample2_grad(cur.data(), up_c, ch / 2, cw / 2, d_deep.data());
            cur = std::move(d_deep);
            ch /= 2;
            cw /= 2;
        }
        for (int b = 1; b >= 0; --b) {
            --bi;
            cur = block_backward(plan_[bi], cur, cache.blocks[bi], cache.cond, ch, cw, params,
                                 grads, d_full, d_mid);
        }
        for (int l = cfg_.levels - 1; l >= 0; --l) {
            if (l < cfg_.levels - 1) {
                TensorT<T> d_up({cfg_.widths[l], ch * 2, cw * 2});
                nn::avgpool2_grad(cur.data(), cfg_.widths[l], ch * 2, cw * 2, d_up.data());
                ch *= 2;
                cw *= 2;
                for (std::size_t i = 0; i < d_up.numel(); ++i) d_up[i] += d_skip[l][i];
                cur = std::move(d_up);
            }
            for (int b = cfg_.blocks_per_level - 1; b >= 0; --b) {
                --bi;
                cur = block_backward(plan_[bi], cur, cache.blocks[bi], cache.cond, ch, cw,
                                     params, grads, d_full, d_mid);
            }
        }
        nn::conv3x3_grad_params(cache.x_in.data(), cfg_.in_channels(), h, w, cur.data(),
                                cfg_.widths[0], grads.data() + off_.stem_w,
                                grads.data() + off_.stem_b);

        embedding_backward(cache, params, d_full, d_mid, grads);
        return grads;
    }

private:
    struct BlockPlan {
        int cin = 0, cout = 0;
        bool use_mid = false;
        std::size_t gn1_g = 0, gn1_b = 0, conv1_w = 0, conv1_b = 0, cond_w = 0, cond_b = 0;
        std::size_t gn2_g = 0, gn2_b = 0, conv2_w = 0, conv2_b = 0;
        std::size_t skip_w = SIZE_MAX;  // identity skip when unset
    };

    struct Offsets {
        std::size_t table = 0, treat_w = 0, treat_b = 0, day_w = 0, day_b = 0, time_w = 0,
                    time_b = 0;
        std::size_t stem_w = 0, stem_b = 0;
        std::size_t head_gn_g = 0, head_gn_b = 0, head_conv_w = 0, head_conv_b = 0;
    };

    void check_params(const std::vector<T>& params) const {
        if (params.size() != layout_.total())
            throw std::invalid_argument("parameter vector length " + std::to_string(params.size()) +
                                        " does not match layout total " +
                                        std::to_string(layout_.total()));
    }

    void lookup_treatment(const TreatmentDayPair& pair, const std::vector<T>& params,
                          std::vector<T>& row) const {
        if (pair.treatment < 1 || pair.treatment > cfg_.treatments)
            throw std::invalid_argument("treatment code " + std::to_string(pair.treatment) +
                                        " outside vocabulary [1, " +
                                        std::to_string(cfg_.treatments) + "]");
        if (pair.day < 0) throw std::invalid_argument("treatment day must be non-negative");
        const T* src = params.data() + off_.table + static_cast<std::size_t>(pair.treatment - 1) * embed_;
        std::copy(src, src + embed_, row.begin());
    }

    void build_plan() {
        embed_ = cfg_.embed_dim;
        const auto& L = layout_;
        off_.table = L.find("embed.treat.table").offset;
        off_.treat_w = L.find("embed.treat.mlp.w").offset;
        off_.treat_b = L.find("embed.treat.mlp.b").offset;
        off_.day_w = L.find("embed.day.mlp.w").offset;
        off_.day_b = L.find("embed.day.mlp.b").offset;
        off_.time_w = L.find("embed.time.mlp.w").offset;
        off_.time_b = L.find("embed.time.mlp.b").offset;
        off_.stem_w = L.find("stem.w").offset;
        off_.stem_b = L.find("stem.b").offset;
        off_.head_gn_g = L.find("head.gn.g").offset;
        off_.head_gn_b = L.find("head.gn.b").offset;
        off_.head_conv_w = L.find("head.conv.w").offset;
        off_.head_conv_b = L.find("head.conv.b").offset;

        auto add_block = [&](const std::string& prefix, bool use_mid) {
            BlockPlan p;
            p.use_mid = use_mid;
            p.gn1_g = L.find(prefix + ".gn1.g").offset;
            p.gn1_b = L.find(prefix + ".gn1.b").offset;
            p.conv1_w = L.find(prefix + ".conv1.w").offset;
            p.conv1_b = L.find(prefix + ".conv1.b").offset;
            p.cond_w = L.find(prefix + ".cond.w").offset;
            p.cond_b = L.find(prefix + ".cond.b").offset;
            p.gn2_g = L.find(prefix + ".gn2.g").offset;
            p.gn2_b = L.find(prefix + ".gn2.b").offset;
            p.conv2_w = L.find(prefix + ".conv2.w").offset;
            p.conv2_b = L.find(prefix + ".conv2.b").offset;
            const auto& c1 = L.find(prefix + ".conv1.w").shape;
            p.cout = c1[0];
            p.cin = c1[1];
            if (p.cin != p.cout) p.skip_w = L.find(prefix + ".skip.w").offset;
            plan_.push_back(p);
        };
        for (int l = 0; l < cfg_.levels; ++l)
            for (int b = 0; b < cfg_.blocks_per_level; ++b)
                add_block("enc" + std::to_string(l) + ".b" + std::to_string(b), false);
        for (int b = 0; b < 2; ++b) add_block("mid.b" + std::to_string(b), true);
        for (int l = cfg_.levels - 2; l >= 0; --l)
            for (int b = 0; b < cfg_.blocks_per_level; ++b)
                add_block("dec" + std::to_string(l) + ".b" + std::to_string(b), false);
    }

    TensorT<T> block_forward(const BlockPlan& p, const TensorT<T>& x, const ConditioningT<T>& cond,
                             int h, int w, const std::vector<T>& params,
                             BlockCacheT<T>* cache) const {
        const int hw = h * w;
        const std::vector<T>& cvec = p.use_mid ? cond.mid : cond.full;
        const int cdim = static_cast<int>(cvec.size());

        TensorT<T> y1({p.cin, h, w}), a1({p.cin, h, w});
        std::vector<T> m1(cfg_.groups), s1(cfg_.groups);
        nn::group_norm(x.data(), p.cin, hw, cfg_.groups, params.data() + p.gn1_g,
                       params.data() + p.gn1_b, y1.data(), m1.data(), s1.data());
        nn::silu(y1.data(), a1.data(), a1.numel());

        TensorT<T> h2({p.cout, h, w});
        nn::conv3x3(a1.data(), p.cin, h, w, params.data() + p.conv1_w, params.data() + p.conv1_b,
                    h2.data(), p.cout);
        std::vector<T> cbias(p.cout);
        nn::linear(cvec.data(), cdim, params.data() + p.cond_w, params.data() + p.cond_b,
                   cbias.data(), p.cout);
        for (int c = 0; c < p.cout; ++c) {
            T* row = h2.data() + static_cast<std::size_t>(c) * hw;
            const T b = cbias[c];
            for (int i = 0; i < hw; ++i) row[i] += b;
        }

        TensorT<T> y2({p.cout, h, w}), a2({p.cout, h, w});
        std::vector<T> m2(cfg_.groups), s2(cfg_.groups);
        nn::group_norm(h2.data(), p.cout, hw, cfg_.groups, params.data() + p.gn2_g,
                       params.data() + p.gn2_b, y2.data(), m2.data(), s2.data());
        nn::silu(y2.data(), a2.data(), a2.numel());

        TensorT<T> out({p.cout, h, w});
        nn::conv3x3(a2.data(), p.cout, h, w, params.data() + p.conv2_w, params.data() + p.conv2_b,
                    out.data(), p.cout);
        if (p.skip_w == SIZE_MAX) {
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] += x[i];
        } else {
            TensorT<T> sk({p.cout, h, w});
            nn::conv1x1(x.data(), p.cin, hw, params.data() + p.skip_w, sk.data(), p.cout);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sk[i];
        }

        if (cache) {
            cache->x = x;
            cache->y1 = std::move(y1);
            cache->a1 = std::move(a1);
            cache->h2 = std::move(h2);
            cache->y2 = std::move(y2);
            cache->a2 = std::move(a2);
            cache->gn1_mean = std::move(m1);
            cache->gn1_invstd = std::move(s1);
            cache->gn2_mean = std::move(m2);
            cache->gn2_invstd = std::move(s2);
            cache->h = h;
            cache->w = w;
        }
        return out;
    }

    TensorT<T> block_backward(const BlockPlan& p, const TensorT<T>& dout,
                              const BlockCacheT<T>& cache, const ConditioningT<T>& cond,
                              int h, int w, const std::vector<T>& params, std::vector<T>& grads,
                              std::vector<T>& d_full, std::vector<T>& d_mid) const {
        const int hw = h * w;
        std::vector<T>& d_cvec = p.use_mid ? d_mid : d_full;
        const std::vector<T>& cvec = p.use_mid ? cond.mid : cond.full;

        // conv2 branch.
        TensorT<T> d_a2({p.cout, h, w});
        nn::conv3x3_grad_input(params.data() + p.conv2_w, p.cout, p.cout, h, w, dout.data(),
                               d_a2.data());
        nn::conv3x3_grad_params(cache.a2.data(), p.cout, h, w, dout.data(), p.cout,
                                grads.data() + p.conv2_w, grads.data() + p.conv2_b);
        TensorT<T> d_y2({p.cout, h, w});
        nn::silu_grad(cache.y2.data(), d_a2.data(), d_y2.data(), d_y2.numel());
        TensorT<T> d_h2({p.cout, h, w});
        nn::group_norm_grad(cache.h2.data(), d_y2.data(), p.cout, hw, cfg_.groups,
                            params.data() + p.gn2_g, cache.gn2_mean.data(),
                            cache.gn2_invstd.data(), d_h2.data(), grads.data() + p.gn2_g,
                            grads.data() + p.gn2_b);

        // Conditioning projection: the bias gradient is the spatial sum per channel.
        std::vector<T> d_cbias(p.cout);
        for (int c = 0; c < p.cout; ++c)
            d_cbias[c] = nn::sum(d_h2.data() + static_cast<std::size_t>(c) * hw, hw);
        nn::linear_grad(cvec.data(), static_cast<int>(cvec.size()), params.data() + p.cond_w,
                        d_cbias.data(), p.cout, d_cvec.data(), grads.data() + p.cond_w,
                        grads.data() + p.cond_b);

        // conv1 branch.
        TensorT<T> d_a1({p.cin, h, w});
        nn::conv3x3_grad_input(params.data() + p.conv1_w, p.cin, p.cout, h, w, d_h2.data(),
                               d_a1.data());
        nn::conv3x3_grad_params(cache.a1.data(), p.cin, h, w, d_h2.data(), p.cout,
                                grads.data() + p.conv1_w, grads.data() + p.conv1_b);
        TensorT<T> d_y1({p.cin, h, w});
        nn::silu_grad(cache.y1.data(), d_a1.data(), d_y1.data(), d_y1.numel());
        TensorT<T> d_x({p.cin, h, w});
        nn::group_norm_grad(cache.x.data(), d_y1.data(), p.cin, hw, cfg_.groups,
                            params.data() + p.gn1_g, cache.gn1_mean.data(),
                            cache.gn1_invstd.data(), d_x.data(), grads.data() + p.gn1_g,
                            grads.data() + p.gn1_b);

        // Skip path.
        if (p.skip_w == SIZE_MAX) {
            for (std::size_t i = 0; i < d_x.numel(); ++i) d_x[i] += dout[i];
        } else {
            nn::conv1x1_grad_input(params.data() + p.skip_w, p.cin, p.cout, hw, dout.data(),
                                   d_x.data());
            nn::conv1x1_grad_params(cache.x.data(), p.cin, hw, dout.data(), p.cout,
                                    grads.data() + p.skip_w);
        }
        return d_x;
    }

    void embedding_backward(const DenoiserCacheT<T>& cache, const std::vector<T>& params,
                            const std::vector<T>& d_full, const std::vector<T>& d_mid,
                            std::vector<T>& grads) const {
        // full = [vf - vs1, vf - vs2, vf - vs3, vf + vt]; mid = vf + vt.
        std::array<std::vector<T>, 4> d_v;
        for (auto& v : d_v) v.assign(embed_, T(0));
        std::vector<T> d_vt(embed_, T(0));
        for (int s = 0; s < 3; ++s)
            for (int i = 0; i < embed_; ++i) {
                const T g = d_full[s * embed_ + i];
                d_v[3][i] += g;
                d_v[s][i] -= g;
            }
        for (int i = 0; i < embed_; ++i) {
            const T g = d_full[3 * embed_ + i] + d_mid[i];
            d_v[3][i] += g;
            d_vt[i] += g;
        }

        nn::linear_grad(cache.time_sin.data(), embed_, params.data() + off_.time_w, d_vt.data(),
                        embed_, static_cast<T*>(nullptr), grads.data() + off_.time_w,
                        grads.data() + off_.time_b);
        for (int pidx = 0; pidx < 4; ++pidx) {
            std::vector<T> d_row(embed_, T(0));
            nn::linear_grad(cache.treat_row[pidx].data(), embed_, params.data() + off_.treat_w,
                            d_v[pidx].data(), embed_, d_row.data(), grads.data() + off_.treat_w,
                            grads.data() + off_.treat_b);
            T* trow = grads.data() + off_.table +
                      static_cast<std::size_t>(cache.pairs[pidx].treatment - 1) * embed_;
            for (int i = 0; i < embed_; ++i) trow[i] += d_row[i];
            nn::linear_grad(cache.day_sin[pidx].data(), embed_, params.data() + off_.day_w,
                            d_v[pidx].data(), embed_, static_cast<T*>(nullptr),
                            grads.data() + off_.day_w, grads.data() + off_.day_b);
        }
    }

    DenoiserConfig cfg_;
    ParamLayout layout_;
    std::vector<BlockPlan> plan_;
    Offsets off_;
    int embed_ = 0;
};

using Denoiser = DenoiserT<float>;

}  // namespace tadiff
