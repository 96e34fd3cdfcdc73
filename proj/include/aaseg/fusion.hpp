#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aaseg/taxonomy.hpp"
#include "aaseg/tensor.hpp"
#include "aaseg/types.hpp"

namespace aaseg {

/// Region classification scores for both tasks, one row per region.
template <typename T>
struct RegionScores {
    Tensor<T> actor;  // (N, K_actor)
    Tensor<T> action; // (N, K_action)
};

constexpr std::int32_t kBackgroundWinner = -1;

/// Winning source per pixel and class, recorded by the forward pass so the
/// backward pass routes gradients exactly where the max came from.
template <typename T>
struct FusionWitness {
    int height = 0;
    int width = 0;
    int num_classes = 0;
    std::size_t num_regions = 0;
    std::vector<std::int32_t> winner; // H*W*K, region index or kBackgroundWinner
    std::vector<T> winner_m;          // H*W*K, mask value of the winner (1 for background)
};

/// Max-fusion of region scores into pixel scores. Every pixel additionally
/// sees an implicit full-frame background region with m == 1 and the given
/// background scores; ties resolve toward background first, then the lowest
/// region index.
template <typename T>
std::pair<Tensor<T>, FusionWitness<T>> region_to_pixel_forward(const RegionSet& regions,
                                                               const Tensor<T>& scores,
                                                               const Tensor<T>& background_scores) {
    if (scores.rank() != 2)
        throw std::invalid_argument("region_to_pixel_forward: scores must be (N, K)");
    if (scores.dim(0) != regions.size())
        throw std::invalid_argument("region_to_pixel_forward: scores rows " +
                                    std::to_string(scores.dim(0)) + " != region count " +
                                    std::to_string(regions.size()));
    const std::size_t num_classes = background_scores.size();
    if (background_scores.rank() != 1 || (scores.dim(0) > 0 && scores.dim(1) != num_classes))
        throw std::invalid_argument("region_to_pixel_forward: class count mismatch");

    const int height = regions.frame_height;
    const int width = regions.frame_width;
    Tensor<T> out({static_cast<std::size_t>(height), static_cast<std::size_t>(width), num_classes});
    FusionWitness<T> witness;
    witness.height = height;
    witness.width = width;
    witness.num_classes = static_cast<int>(num_classes);
    witness.num_regions = regions.size();
    witness.winner.assign(out.size(), kBackgroundWinner);
    witness.winner_m.assign(out.size(), T(1));

    std::vector<float> mval(regions.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (std::size_t i = 0; i < regions.size(); ++i)
                mval[i] = mask_at_pixel(regions.regions[i], x, y, width, height);
            const std::size_t base = (static_cast<std::size_t>(y) * width + x) * num_classes;
            for (std::size_t k = 0; k < num_classes; ++k) {
                T best = background_scores[k];
                std::int32_t best_src = kBackgroundWinner;
                T best_m = T(1);
                for (std::size_t i = 0; i < regions.size(); ++i) {
                    if (mval[i] <= 0.0f) continue; // covers means m > 0
                    const T cand = static_cast<T>(mval[i]) * scores(i, k);
                    if (cand > best) {
                        best = cand;
                        best_src = static_cast<std::int32_t>(i);
                        best_m = static_cast<T>(mval[i]);
                    }
                }
                out[base + k] = best;
                witness.winner[base + k] = best_src;
                witness.winner_m[base + k] = best_m;
            }
        }
    }
    return {std::move(out), std::move(witness)};
}

/// Subgradient of the fusion max: each upstream value flows to its recorded
/// winner, scaled by the winner's mask value. Masks receive no gradient.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> region_to_pixel_backward(const FusionWitness<T>& witness,
                                                         const RegionSet& regions,
                                                         const Tensor<T>& upstream) {
    const std::size_t num_classes = static_cast<std::size_t>(witness.num_classes);
    if (witness.num_regions != regions.size())
        throw std::invalid_argument("region_to_pixel_backward: stale witness (region count)");
    require_shape(upstream,
                  {static_cast<std::size_t>(witness.height),
                   static_cast<std::size_t>(witness.width), num_classes},
                  "region_to_pixel_backward: upstream");

    Tensor<T> grad_scores({regions.size(), num_classes});
    Tensor<T> grad_background({num_classes});
    const std::size_t total = upstream.size();
    for (std::size_t idx = 0; idx < total; ++idx) {
        const std::int32_t src = witness.winner[idx];
        const std::size_t k = idx % num_classes;
        if (src == kBackgroundWinner)
            grad_background[k] += upstream[idx];
        else
            grad_scores(static_cast<std::size_t>(src), k) += witness.winner_m[idx] * upstream[idx];
    }
    return {std::move(grad_scores), std::move(grad_background)};
}

/// Numerically stable per-pixel softmax over the last axis of (H, W, K).
template <typename T>
Tensor<T> softmax_pixelwise(const Tensor<T>& scores) {
    if (scores.rank() != 3)
        throw std::invalid_argument("softmax_pixelwise: expected (H, W, K)");
    const std::size_t num_classes = scores.dim(2);
    Tensor<T> probs(scores.shape());
    const std::size_t pixels = scores.dim(0) * scores.dim(1);
    for (std::size_t j = 0; j < pixels; ++j) {
        const T* row = scores.data() + j * num_classes;
        T* out = probs.data() + j * num_classes;
        T peak = row[0];
        for (std::size_t k = 1; k < num_classes; ++k) peak = std::max(peak, row[k]);
        T sum = T(0);
        for (std::size_t k = 0; k < num_classes; ++k) {
            out[k] = std::exp(row[k] - peak);
            sum += out[k];
        }
        for (std::size_t k = 0; k < num_classes; ++k) out[k] /= sum;
    }
    return probs;
}

/// dL/dscores given probs = softmax(scores) and upstream = dL/dprobs.
template <typename T>
Tensor<T> softmax_pixelwise_backward(const Tensor<T>& probs, const Tensor<T>& upstream) {
    if (!probs.same_shape(upstream))
        throw std::invalid_argument("softmax_pixelwise_backward: shape mismatch");
    const std::size_t num_classes = probs.dim(2);
    Tensor<T> grad(probs.shape());
    const std::size_t pixels = probs.dim(0) * probs.dim(1);
    for (std::size_t j = 0; j < pixels; ++j) {
        const T* p = probs.data() + j * num_classes;
        const T* u = upstream.data() + j * num_classes;
        T* g = grad.data() + j * num_classes;
        T dot = T(0);
        for (std::size_t k = 0; k < num_classes; ++k) dot += u[k] * p[k];
        for (std::size_t k = 0; k < num_classes; ++k) g[k] = p[k] * (u[k] - dot);
    }
    return grad;
}

/// Per-pixel joint actor-action probability: the plain element-wise product
/// over all (actor, action) pairs, laid out actor-major. With mask_invalid,
/// pairs outside the taxonomy's valid set are zeroed and each pixel's vector
/// renormalized.
template <typename T>
Tensor<T> joint_probability(const Tensor<T>& p_actor, const Tensor<T>& p_action,
                            const Taxonomy& taxonomy, bool mask_invalid = false) {
    if (p_actor.rank() != 3 || p_action.rank() != 3 || p_actor.dim(0) != p_action.dim(0) ||
        p_actor.dim(1) != p_action.dim(1))
        throw std::invalid_argument("joint_probability: spatial dims disagree");
    const std::size_t ka = p_actor.dim(2), kc = p_action.dim(2);
    if (ka != static_cast<std::size_t>(taxonomy.num_actors()) ||
        kc != static_cast<std::size_t>(taxonomy.num_actions()))
        throw std::invalid_argument("joint_probability: class counts do not match taxonomy");

    Tensor<T> joint({p_actor.dim(0), p_actor.dim(1), ka * kc});
    const std::size_t pixels = p_actor.dim(0) * p_actor.dim(1);
    for (std::size_t j = 0; j < pixels; ++j) {
        const T* pa = p_actor.data() + j * ka;
        const T* pc = p_action.data() + j * kc;
        T* out = joint.data() + j * ka * kc;
        for (std::size_t a = 0; a < ka; ++a)
            for (std::size_t c = 0; c < kc; ++c) out[a * kc + c] = pa[a] * pc[c];
        if (mask_invalid) {
            T sum = T(0);
            for (std::size_t a = 0; a < ka; ++a)
                for (std::size_t c = 0; c < kc; ++c) {
                    if (!taxonomy.is_valid_pair(static_cast<int>(a), static_cast<int>(c)))
                        out[a * kc + c] = T(0);
                    else
                        sum += out[a * kc + c];
                }
            if (sum > T(0))
                for (std::size_t i = 0; i < ka * kc; ++i) out[i] /= sum;
        }
    }
    return joint;
}

/// Per-pixel argmax; ties go to the lowest class index.
template <typename T>
LabelMap argmax_labeling(const Tensor<T>& probs) {
    if (probs.rank() != 3) throw std::invalid_argument("argmax_labeling: expected (H, W, K)");
    const std::size_t num_classes = probs.dim(2);
    LabelMap map;
    map.height = static_cast<int>(probs.dim(0));
    map.width = static_cast<int>(probs.dim(1));
    map.labels.resize(probs.dim(0) * probs.dim(1));
    for (std::size_t j = 0; j < map.labels.size(); ++j) {
        const T* row = probs.data() + j * num_classes;
        std::size_t best = 0;
        for (std::size_t k = 1; k < num_classes; ++k)
            if (row[k] > row[best]) best = k;
        map.labels[j] = static_cast<std::uint16_t>(best);
    }
    return map;
}

/// Joint prediction restricted to the taxonomy's valid pairs: per pixel, the
/// dense index of the valid pair maximizing p_actor * p_action (ties to the
/// lowest dense index).
template <typename T>
LabelMap joint_argmax_valid(const Tensor<T>& p_actor, const Tensor<T>& p_action,
                            const Taxonomy& taxonomy) {
    if (p_actor.dim(0) != p_action.dim(0) || p_actor.dim(1) != p_action.dim(1))
        throw std::invalid_argument("joint_argmax_valid: spatial dims disagree");
    const std::size_t ka = p_actor.dim(2), kc = p_action.dim(2);
    LabelMap map;
    map.height = static_cast<int>(p_actor.dim(0));
    map.width = static_cast<int>(p_actor.dim(1));
    map.labels.resize(p_actor.dim(0) * p_actor.dim(1));
    const auto& pairs = taxonomy.valid_pairs();
    for (std::size_t j = 0; j < map.labels.size(); ++j) {
        const T* pa = p_actor.data() + j * ka;
        const T* pc = p_action.data() + j * kc;
        std::size_t best = 0;
        T best_val = pa[pairs[0].first] * pc[pairs[0].second];
        for (std::size_t q = 1; q < pairs.size(); ++q) {
            const T v = pa[pairs[q].first] * pc[pairs[q].second];
            if (v > best_val) {
                best_val = v;
                best = q;
            }
        }
        map.labels[j] = static_cast<std::uint16_t>(best);
    }
    return map;
}

} // namespace aaseg
