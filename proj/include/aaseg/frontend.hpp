#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "aaseg/tensor.hpp"

namespace aaseg {

/// One 3x3 convolution (stride 1, zero padding) with bias and ReLU.
template <typename T>
struct StreamParams {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    Tensor<T> weight; // (3, 3, C_in, C_out)
    Tensor<T> bias;   // (C_out)

    static StreamParams with_shape(std::size_t in_channels, std::size_t out_channels) {
        StreamParams p;
        p.in_channels = in_channels;
        p.out_channels = out_channels;
        p.weight = Tensor<T>({3, 3, in_channels, out_channels});
        p.bias = Tensor<T>({out_channels});
        return p;
    }
};

template <typename T>
struct StreamCache {
    Tensor<T> input; // (H, W, C_in)
    Tensor<T> pre;   // (H, W, C_out) pre-activation
};

template <typename T>
struct StreamGrads {
    Tensor<T> weight;
    Tensor<T> bias;
    Tensor<T> input;
};

template <typename T>
std::pair<Tensor<T>, StreamCache<T>> stream_forward(const Tensor<T>& input,
                                                    const StreamParams<T>& params) {
    if (input.rank() != 3 || input.dim(2) != params.in_channels)
        throw std::invalid_argument("stream_forward: input channels do not match params");
    const std::size_t height = input.dim(0), width = input.dim(1);
    const std::size_t cin = params.in_channels, cout = params.out_channels;
    Tensor<T> pre({height, width, cout});
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t o = 0; o < cout; ++o) {
                T acc = params.bias[o];
                for (int dy = -1; dy <= 1; ++dy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) + dx;
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci)
                            acc += input(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix),
                                         ci) *
                                   params.weight(static_cast<std::size_t>(dy + 1),
                                                 static_cast<std::size_t>(dx + 1), ci, o);
                    }
                }
                pre(y, x, o) = acc;
            }
    Tensor<T> out = pre;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] < T(0)) out[i] = T(0);
    StreamCache<T> cache{input, std::move(pre)};
    return {std::move(out), std::move(cache)};
}

template <typename T>
StreamGrads<T> stream_backward(const StreamCache<T>& cache, const StreamParams<T>& params,
                               const Tensor<T>& upstream) {
    require_shape(upstream, cache.pre.shape(), "stream_backward: upstream");
    const std::size_t height = cache.input.dim(0), width = cache.input.dim(1);
    const std::size_t cin = params.in_channels, cout = params.out_channels;
    Tensor<T> d_pre = upstream;
    for (std::size_t i = 0; i < d_pre.size(); ++i)
        if (cache.pre[i] <= T(0)) d_pre[i] = T(0);

    StreamGrads<T> grads;
    grads.weight = Tensor<T>(params.weight.shape());
    grads.bias = Tensor<T>(params.bias.shape());
    grads.input = Tensor<T>(cache.input.shape());
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t o = 0; o < cout; ++o) {
                const T u = d_pre(y, x, o);
                if (u == T(0)) continue;
                grads.bias[o] += u;
                for (int dy = -1; dy <= 1; ++dy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x) + dx;
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const std::size_t wy = static_cast<std::size_t>(dy + 1);
                            const std::size_t wx = static_cast<std::size_t>(dx + 1);
                            grads.weight(wy, wx, ci, o) +=
                                cache.input(static_cast<std::size_t>(iy),
                                            static_cast<std::size_t>(ix), ci) *
                                u;
                            grads.input(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix),
                                        ci) += params.weight(wy, wx, ci, o) * u;
                        }
                    }
                }
            }
    return grads;
}

/// Two-stream front-end: appearance and motion streams whose outputs are
/// concatenated along channels (early fusion). In rgb-only mode the motion
/// stream is absent and the fused map is the appearance features alone.
template <typename T>
struct FrontendParams {
    bool use_motion = true;
    StreamParams<T> appearance;
    StreamParams<T> motion;

    std::size_t fused_channels() const {
        return appearance.out_channels + (use_motion ? motion.out_channels : 0);
    }
};

template <typename T>
struct FrontendCache {
    StreamCache<T> appearance;
    StreamCache<T> motion;
};

template <typename T>
struct FrontendGrads {
    StreamGrads<T> appearance;
    StreamGrads<T> motion;
};

template <typename T>
std::pair<Tensor<T>, FrontendCache<T>> two_stream_forward(const Tensor<T>& appearance,
                                                          const Tensor<T>& motion,
                                                          const FrontendParams<T>& params) {
    if (params.use_motion &&
        (appearance.dim(0) != motion.dim(0) || appearance.dim(1) != motion.dim(1)))
        throw std::invalid_argument("two_stream_forward: stream spatial dims disagree");
    auto [feat_a, cache_a] = stream_forward(appearance, params.appearance);
    FrontendCache<T> cache;
    cache.appearance = std::move(cache_a);
    if (!params.use_motion) return {std::move(feat_a), std::move(cache)};

    auto [feat_m, cache_m] = stream_forward(motion, params.motion);
    cache.motion = std::move(cache_m);
    const std::size_t height = feat_a.dim(0), width = feat_a.dim(1);
    const std::size_t ca = feat_a.dim(2), cm = feat_m.dim(2);
    Tensor<T> fused({height, width, ca + cm});
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < ca; ++c) fused(y, x, c) = feat_a(y, x, c);
            for (std::size_t c = 0; c < cm; ++c) fused(y, x, ca + c) = feat_m(y, x, c);
        }
    return {std::move(fused), std::move(cache)};
}

template <typename T>
FrontendGrads<T> two_stream_backward(const FrontendCache<T>& cache, const FrontendParams<T>& params,
                                     const Tensor<T>& upstream_fused) {
    FrontendGrads<T> grads;
    if (!params.use_motion) {
        grads.appearance = stream_backward(cache.appearance, params.appearance, upstream_fused);
        return grads;
    }
    const std::size_t height = upstream_fused.dim(0), width = upstream_fused.dim(1);
    const std::size_t ca = params.appearance.out_channels, cm = params.motion.out_channels;
    if (upstream_fused.dim(2) != ca + cm)
        throw std::invalid_argument("two_stream_backward: fused channel mismatch");
    Tensor<T> up_a({height, width, ca});
    Tensor<T> up_m({height, width, cm});
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < ca; ++c) up_a(y, x, c) = upstream_fused(y, x, c);
            for (std::size_t c = 0; c < cm; ++c) up_m(y, x, c) = upstream_fused(y, x, ca + c);
        }
    grads.appearance = stream_backward(cache.appearance, params.appearance, up_a);
    grads.motion = stream_backward(cache.motion, params.motion, up_m);
    return grads;
}

/// Per-pixel linear classifier on the fused features, one head per task.
/// No cross-pixel interaction by construction.
template <typename T>
struct BaselineParams {
    std::size_t in_channels = 0;
    Tensor<T> actor_w; // (C_fused, K_actor)
    Tensor<T> actor_b;
    Tensor<T> action_w; // (C_fused, K_action)
    Tensor<T> action_b;

    static BaselineParams with_shape(std::size_t in_channels, std::size_t num_actor,
                                     std::size_t num_action) {
        BaselineParams p;
        p.in_channels = in_channels;
        p.actor_w = Tensor<T>({in_channels, num_actor});
        p.actor_b = Tensor<T>({num_actor});
        p.action_w = Tensor<T>({in_channels, num_action});
        p.action_b = Tensor<T>({num_action});
        return p;
    }
};

template <typename T>
struct BaselineGrads {
    Tensor<T> actor_w, actor_b, action_w, action_b;
    Tensor<T> fused;
};

template <typename T>
std::pair<Tensor<T>, Tensor<T>> baseline_forward(const Tensor<T>& fused,
                                                 const BaselineParams<T>& params) {
    if (fused.rank() != 3 || fused.dim(2) != params.in_channels)
        throw std::invalid_argument("baseline_forward: fused channels do not match params");
    const std::size_t pixels = fused.dim(0) * fused.dim(1);
    const std::size_t cf = params.in_channels;
    const std::size_t ka = params.actor_w.dim(1), kc = params.action_w.dim(1);
    Tensor<T> actor({fused.dim(0), fused.dim(1), ka});
    Tensor<T> action({fused.dim(0), fused.dim(1), kc});
    for (std::size_t j = 0; j < pixels; ++j) {
        const T* f = fused.data() + j * cf;
        T* sa = actor.data() + j * ka;
        T* sc = action.data() + j * kc;
        for (std::size_t k = 0; k < ka; ++k) {
            T acc = params.actor_b[k];
            for (std::size_t c = 0; c < cf; ++c) acc += f[c] * params.actor_w(c, k);
            sa[k] = acc;
        }
        for (std::size_t k = 0; k < kc; ++k) {
            T acc = params.action_b[k];
            for (std::size_t c = 0; c < cf; ++c) acc += f[c] * params.action_w(c, k);
            sc[k] = acc;
        }
    }
    return {std::move(actor), std::move(action)};
}

template <typename T>
BaselineGrads<T> baseline_backward(const Tensor<T>& fused, const BaselineParams<T>& params,
                                   const Tensor<T>& upstream_actor,
                                   const Tensor<T>& upstream_action) {
    const std::size_t pixels = fused.dim(0) * fused.dim(1);
    const std::size_t cf = params.in_channels;
    const std::size_t ka = params.actor_w.dim(1), kc = params.action_w.dim(1);
    require_shape(upstream_actor, {fused.dim(0), fused.dim(1), ka},
                  "baseline_backward: actor upstream");
    require_shape(upstream_action, {fused.dim(0), fused.dim(1), kc},
                  "baseline_backward: action upstream");

    BaselineGrads<T> grads;
    grads.actor_w = Tensor<T>(params.actor_w.shape());
    grads.actor_b = Tensor<T>(params.actor_b.shape());
    grads.action_w = Tensor<T>(params.action_w.shape());
    grads.action_b = Tensor<T>(params.action_b.shape());
    grads.fused = Tensor<T>(fused.shape());
    for (std::size_t j = 0; j < pixels; ++j) {
        const T* f = fused.data() + j * cf;
        const T* ua = upstream_actor.data() + j * ka;
        const T* uc = upstream_action.data() + j * kc;
        T* gf = grads.fused.data() + j * cf;
        for (std::size_t k = 0; k < ka; ++k) {
            grads.actor_b[k] += ua[k];
            for (std::size_t c = 0; c < cf; ++c) {
                grads.actor_w(c, k) += f[c] * ua[k];
                gf[c] += params.actor_w(c, k) * ua[k];
            }
        }
        for (std::size_t k = 0; k < kc; ++k) {
            grads.action_b[k] += uc[k];
            for (std::size_t c = 0; c < cf; ++c) {
                grads.action_w(c, k) += f[c] * uc[k];
                gf[c] += params.action_w(c, k) * uc[k];
            }
        }
    }
    return grads;
}

} // namespace aaseg
