#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aaseg/fusion.hpp"
#include "aaseg/tensor.hpp"

namespace aaseg {

struct RoiPoolWitness {
    int height = 0;
    int width = 0;
    std::size_t num_boxes = 0;
    int grid = 0;
    std::size_t channels = 0;
    std::vector<std::int32_t> arg_y; // per (n, gy, gx, c)
    std::vector<std::int32_t> arg_x;
};

namespace detail {
/// Clamp a box to the frame and quantize: floor for start, ceil for end,
/// at least one pixel. Returns {x_start, x_end, y_start, y_end}.
inline std::array<int, 4> quantize_box(const std::array<double, 4>& box, int width, int height,
                                       std::size_t index) {
    const double x0 = std::clamp(box[0], 0.0, static_cast<double>(width));
    const double x1 = std::clamp(box[2], 0.0, static_cast<double>(width));
    const double y0 = std::clamp(box[1], 0.0, static_cast<double>(height));
    const double y1 = std::clamp(box[3], 0.0, static_cast<double>(height));
    if (x1 <= 0.0 || x0 >= width || y1 <= 0.0 || y0 >= height || x0 > x1 || y0 > y1)
        throw std::invalid_argument("roi_pool: box " + std::to_string(index) +
                                    " is empty after clamping to the frame");
    int xs = static_cast<int>(std::floor(x0));
    int xe = static_cast<int>(std::ceil(x1));
    int ys = static_cast<int>(std::floor(y0));
    int ye = static_cast<int>(std::ceil(y1));
    if (xe <= xs) {
        xs = std::clamp(xs, 0, width - 1);
        xe = xs + 1;
    }
    if (ye <= ys) {
        ys = std::clamp(ys, 0, height - 1);
        ye = ys + 1;
    }
    return {xs, xe, ys, ye};
}
} // namespace detail

/// Max-pool each box into a G x G grid (floor/ceil cell bounds, so cells of a
/// box narrower than the grid overlap instead of being empty). The witness
/// records argmax positions; ties go to the first position in row-major scan.
template <typename T>
std::pair<Tensor<T>, RoiPoolWitness> roi_pool_forward(const Tensor<T>& features,
                                                      const std::vector<std::array<double, 4>>& boxes,
                                                      int grid) {
    if (features.rank() != 3) throw std::invalid_argument("roi_pool: features must be (H, W, C)");
    if (grid < 1) throw std::invalid_argument("roi_pool: grid must be positive");
    const int height = static_cast<int>(features.dim(0));
    const int width = static_cast<int>(features.dim(1));
    const std::size_t channels = features.dim(2);
    const std::size_t n = boxes.size();
    const std::size_t g = static_cast<std::size_t>(grid);

    Tensor<T> pooled({n, g, g, channels});
    RoiPoolWitness w;
    w.height = height;
    w.width = width;
    w.num_boxes = n;
    w.grid = grid;
    w.channels = channels;
    w.arg_y.assign(pooled.size(), -1);
    w.arg_x.assign(pooled.size(), -1);

    for (std::size_t i = 0; i < n; ++i) {
        const auto [xs, xe, ys, ye] = detail::quantize_box(boxes[i], width, height, i);
        const int bw = xe - xs, bh = ye - ys;
        for (int gy = 0; gy < grid; ++gy) {
            const int cy0 = ys + static_cast<int>(std::floor(static_cast<double>(gy) * bh / grid));
            const int cy1 = ys + static_cast<int>(std::ceil(static_cast<double>(gy + 1) * bh / grid));
            for (int gx = 0; gx < grid; ++gx) {
                const int cx0 = xs + static_cast<int>(std::floor(static_cast<double>(gx) * bw / grid));
                const int cx1 = xs + static_cast<int>(std::ceil(static_cast<double>(gx + 1) * bw / grid));
                const std::size_t base =
                    ((i * g + static_cast<std::size_t>(gy)) * g + static_cast<std::size_t>(gx)) *
                    channels;
                for (std::size_t c = 0; c < channels; ++c) {
                    T best = features(static_cast<std::size_t>(cy0), static_cast<std::size_t>(cx0), c);
                    int by = cy0, bx = cx0;
                    for (int y = cy0; y < cy1; ++y)
                        for (int x = cx0; x < cx1; ++x) {
                            const T v = features(static_cast<std::size_t>(y),
                                                 static_cast<std::size_t>(x), c);
                            if (v > best) {
                                best = v;
                                by = y;
                                bx = x;
                            }
                        }
                    pooled[base + c] = best;
                    w.arg_y[base + c] = by;
                    w.arg_x[base + c] = bx;
                }
            }
        }
    }
    return {std::move(pooled), std::move(w)};
}

/// Routes each upstream value to its argmax source pixel; overlapping boxes
/// and overlapping cells accumulate in fixed scan order.
template <typename T>
Tensor<T> roi_pool_backward(const RoiPoolWitness& witness, const Tensor<T>& upstream) {
    const std::size_t g = static_cast<std::size_t>(witness.grid);
    require_shape(upstream, {witness.num_boxes, g, g, witness.channels}, "roi_pool_backward");
    Tensor<T> grad({static_cast<std::size_t>(witness.height),
                    static_cast<std::size_t>(witness.width), witness.channels});
    for (std::size_t idx = 0; idx < upstream.size(); ++idx) {
        const std::size_t c = idx % witness.channels;
        grad(static_cast<std::size_t>(witness.arg_y[idx]),
             static_cast<std::size_t>(witness.arg_x[idx]), c) += upstream[idx];
    }
    return grad;
}

/// FC stack over flattened pooled features: L hidden ReLU layers feeding two
/// linear output heads.
template <typename T>
struct HeadParams {
    int grid = 7;
    std::size_t in_channels = 0;
    std::size_t hidden_width = 256;
    std::size_t num_actor = 0;
    std::size_t num_action = 0;
    std::vector<Tensor<T>> fc_w; // fc_w[l]: (D_in, D_h)
    std::vector<Tensor<T>> fc_b; // fc_b[l]: (D_h)
    Tensor<T> actor_w;           // (D_last, K_actor)
    Tensor<T> actor_b;
    Tensor<T> action_w; // (D_last, K_action)
    Tensor<T> action_b;

    std::size_t input_dim() const {
        return static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid) * in_channels;
    }
    std::size_t last_dim() const { return fc_w.empty() ? input_dim() : hidden_width; }

    static HeadParams with_shape(int grid, std::size_t in_channels, std::size_t hidden_layers,
                                 std::size_t hidden_width, std::size_t num_actor,
                                 std::size_t num_action) {
        HeadParams p;
        p.grid = grid;
        p.in_channels = in_channels;
        p.hidden_width = hidden_width;
        p.num_actor = num_actor;
        p.num_action = num_action;
        std::size_t d = p.input_dim();
        for (std::size_t l = 0; l < hidden_layers; ++l) {
            p.fc_w.emplace_back(std::vector<std::size_t>{d, hidden_width});
            p.fc_b.emplace_back(std::vector<std::size_t>{hidden_width});
            d = hidden_width;
        }
        p.actor_w = Tensor<T>({d, num_actor});
        p.actor_b = Tensor<T>({num_actor});
        p.action_w = Tensor<T>({d, num_action});
        p.action_b = Tensor<T>({num_action});
        return p;
    }
};

template <typename T>
struct HeadCache {
    Tensor<T> input;                 // (N, D_in) flattened pooled features
    std::vector<Tensor<T>> pre;      // pre-activations per hidden layer (N, D_h)
    std::vector<Tensor<T>> activ;    // post-ReLU activations per hidden layer
};

template <typename T>
struct HeadGrads {
    std::vector<Tensor<T>> fc_w;
    std::vector<Tensor<T>> fc_b;
    Tensor<T> actor_w, actor_b, action_w, action_b;
    Tensor<T> input; // (N, G, G, C), gradient w.r.t. pooled features
};

namespace detail {
template <typename T>
void linear_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& out) {
    const std::size_t n = in.dim(0), din = in.dim(1), dout = w.dim(1);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < dout; ++o) {
            T acc = b[o];
            for (std::size_t k = 0; k < din; ++k) acc += in(r, k) * w(k, o);
            out(r, o) = acc;
        }
}

template <typename T>
void linear_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& up,
                     Tensor<T>& grad_w, Tensor<T>& grad_b, Tensor<T>& grad_in, bool accumulate_in) {
    const std::size_t n = in.dim(0), din = in.dim(1), dout = w.dim(1);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < dout; ++o) {
            const T u = up(r, o);
            grad_b[o] += u;
            for (std::size_t k = 0; k < din; ++k) grad_w(k, o) += in(r, k) * u;
        }
    if (!accumulate_in) grad_in.fill(T(0));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < din; ++k) {
            T acc = T(0);
            for (std::size_t o = 0; o < dout; ++o) acc += up(r, o) * w(k, o);
            grad_in(r, k) += acc;
        }
}
} // namespace detail

template <typename T>
std::pair<RegionScores<T>, HeadCache<T>> head_forward(const Tensor<T>& pooled,
                                                      const HeadParams<T>& params) {
    if (pooled.rank() != 4) throw std::invalid_argument("head_forward: pooled must be (N, G, G, C)");
    const std::size_t n = pooled.dim(0);
    const std::size_t din = pooled.dim(1) * pooled.dim(2) * pooled.dim(3);
    if (din != params.input_dim())
        throw std::invalid_argument("head_forward: pooled dims do not chain into the FC stack");

    HeadCache<T> cache;
    cache.input = Tensor<T>::from_data({n, din}, pooled.storage());
    const Tensor<T>* cur = &cache.input;
    for (std::size_t l = 0; l < params.fc_w.size(); ++l) {
        Tensor<T> pre({n, params.fc_w[l].dim(1)});
        detail::linear_forward(*cur, params.fc_w[l], params.fc_b[l], pre);
        Tensor<T> act = pre;
        for (std::size_t i = 0; i < act.size(); ++i)
            if (act[i] < T(0)) act[i] = T(0);
        cache.pre.push_back(std::move(pre));
        cache.activ.push_back(std::move(act));
        cur = &cache.activ.back();
    }
    RegionScores<T> scores;
    scores.actor = Tensor<T>({n, params.num_actor});
    scores.action = Tensor<T>({n, params.num_action});
    detail::linear_forward(*cur, params.actor_w, params.actor_b, scores.actor);
    detail::linear_forward(*cur, params.action_w, params.action_b, scores.action);
    return {std::move(scores), std::move(cache)};
}

template <typename T>
HeadGrads<T> head_backward(const HeadCache<T>& cache, const HeadParams<T>& params,
                           const Tensor<T>& upstream_actor, const Tensor<T>& upstream_action) {
    const std::size_t n = cache.input.dim(0);
    require_shape(upstream_actor, {n, params.num_actor}, "head_backward: actor upstream");
    require_shape(upstream_action, {n, params.num_action}, "head_backward: action upstream");

    HeadGrads<T> grads;
    grads.actor_w = Tensor<T>(params.actor_w.shape());
    grads.actor_b = Tensor<T>(params.actor_b.shape());
    grads.action_w = Tensor<T>(params.action_w.shape());
    grads.action_b = Tensor<T>(params.action_b.shape());
    for (const auto& w : params.fc_w) grads.fc_w.emplace_back(w.shape());
    for (const auto& b : params.fc_b) grads.fc_b.emplace_back(b.shape());

    const Tensor<T>& last = cache.activ.empty() ? cache.input : cache.activ.back();
    Tensor<T> grad_last({n, params.last_dim()});
    detail::linear_backward(last, params.actor_w, upstream_actor, grads.actor_w, grads.actor_b,
                            grad_last, false);
    detail::linear_backward(last, params.action_w, upstream_action, grads.action_w,
                            grads.action_b, grad_last, true);

    Tensor<T> grad_cur = std::move(grad_last);
    for (std::size_t li = params.fc_w.size(); li-- > 0;) {
        const Tensor<T>& pre = cache.pre[li];
        for (std::size_t i = 0; i < grad_cur.size(); ++i)
            if (pre[i] <= T(0)) grad_cur[i] = T(0);
        const Tensor<T>& below = (li == 0) ? cache.input : cache.activ[li - 1];
        Tensor<T> grad_below(below.shape());
        detail::linear_backward(below, params.fc_w[li], grad_cur, grads.fc_w[li], grads.fc_b[li],
                                grad_below, false);
        grad_cur = std::move(grad_below);
    }
    grads.input = Tensor<T>::from_data({n, static_cast<std::size_t>(params.grid),
                                        static_cast<std::size_t>(params.grid), params.in_channels},
                                       grad_cur.storage());
    return grads;
}

} // namespace aaseg
