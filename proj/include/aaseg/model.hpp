#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aaseg/frontend.hpp"
#include "aaseg/fusion.hpp"
#include "aaseg/regionhead.hpp"
#include "aaseg/rng.hpp"
#include "aaseg/taxonomy.hpp"
#include "aaseg/tensor.hpp"
#include "aaseg/types.hpp"

namespace aaseg {

struct ModelConfig {
    int appearance_channels = 3;
    int motion_channels = 2;
    int feature_channels = 8; // per-stream feature width C
    int roi_grid = 7;
    int fc_layers = 2;
    int fc_width = 256;
    bool use_motion = true; // false = rgb-only ablation (motion stream dropped)
};

enum class ParamGroup { Frontend, Baseline, Head, Background };

inline const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::Frontend: return "frontend";
        case ParamGroup::Baseline: return "baseline";
        case ParamGroup::Head: return "head";
        case ParamGroup::Background: return "background";
    }
    return "?";
}

/// All learnable weights. Parameter tensors enumerate in a fixed order so
/// gradient checking, SGD, and the on-disk flat format all agree.
template <typename T>
struct ModelParams {
    ModelConfig config;
    FrontendParams<T> frontend;
    BaselineParams<T> baseline;
    HeadParams<T> head;
    Tensor<T> background_actor;  // (K_actor)
    Tensor<T> background_action; // (K_action)

    template <typename Fn> // Fn(name, group, Tensor<T>&)
    void for_each_param(Fn&& fn) {
        fn("frontend.appearance.weight", ParamGroup::Frontend, frontend.appearance.weight);
        fn("frontend.appearance.bias", ParamGroup::Frontend, frontend.appearance.bias);
        if (config.use_motion) {
            fn("frontend.motion.weight", ParamGroup::Frontend, frontend.motion.weight);
            fn("frontend.motion.bias", ParamGroup::Frontend, frontend.motion.bias);
        }
        fn("baseline.actor_w", ParamGroup::Baseline, baseline.actor_w);
        fn("baseline.actor_b", ParamGroup::Baseline, baseline.actor_b);
        fn("baseline.action_w", ParamGroup::Baseline, baseline.action_w);
        fn("baseline.action_b", ParamGroup::Baseline, baseline.action_b);
        for (std::size_t l = 0; l < head.fc_w.size(); ++l) {
            const std::string tag = "head.fc" + std::to_string(l);
            fn(tag + ".w", ParamGroup::Head, head.fc_w[l]);
            fn(tag + ".b", ParamGroup::Head, head.fc_b[l]);
        }
        fn("head.actor_w", ParamGroup::Head, head.actor_w);
        fn("head.actor_b", ParamGroup::Head, head.actor_b);
        fn("head.action_w", ParamGroup::Head, head.action_w);
        fn("head.action_b", ParamGroup::Head, head.action_b);
        fn("background.actor", ParamGroup::Background, background_actor);
        fn("background.action", ParamGroup::Background, background_action);
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) const {
        const_cast<ModelParams*>(this)->for_each_param(
            [&](const std::string& name, ParamGroup group, Tensor<T>& t) {
                fn(name, group, static_cast<const Tensor<T>&>(t));
            });
    }

    std::size_t num_scalars() const {
        std::size_t n = 0;
        for_each_param([&](const std::string&, ParamGroup, const Tensor<T>& t) { n += t.size(); });
        return n;
    }

    std::vector<T> flatten() const {
        std::vector<T> out;
        out.reserve(num_scalars());
        for_each_param([&](const std::string&, ParamGroup, const Tensor<T>& t) {
            out.insert(out.end(), t.storage().begin(), t.storage().end());
        });
        return out;
    }

    void unflatten(const std::vector<T>& flat) {
        if (flat.size() != num_scalars())
            throw std::invalid_argument("ModelParams: flat vector has " +
                                        std::to_string(flat.size()) + " values, expected " +
                                        std::to_string(num_scalars()));
        std::size_t pos = 0;
        for_each_param([&](const std::string&, ParamGroup, Tensor<T>& t) {
            std::copy(flat.begin() + pos, flat.begin() + pos + t.size(), t.storage().begin());
            pos += t.size();
        });
    }
};

/// Builds the parameter set for a taxonomy and initializes weights uniformly
/// in +-sqrt(6 / (fan_in + fan_out)); biases and background scores start at 0.
template <typename T>
ModelParams<T> init_model(const ModelConfig& config, const Taxonomy& taxonomy,
                          std::uint64_t seed) {
    const auto ka = static_cast<std::size_t>(taxonomy.num_actors());
    const auto kc = static_cast<std::size_t>(taxonomy.num_actions());
    const auto c = static_cast<std::size_t>(config.feature_channels);

    ModelParams<T> p;
    p.config = config;
    p.frontend.use_motion = config.use_motion;
    p.frontend.appearance = StreamParams<T>::with_shape(
        static_cast<std::size_t>(config.appearance_channels), c);
    p.frontend.motion =
        StreamParams<T>::with_shape(static_cast<std::size_t>(config.motion_channels), c);
    const std::size_t fused = p.frontend.fused_channels();
    p.baseline = BaselineParams<T>::with_shape(fused, ka, kc);
    p.head = HeadParams<T>::with_shape(config.roi_grid, fused,
                                       static_cast<std::size_t>(config.fc_layers),
                                       static_cast<std::size_t>(config.fc_width), ka, kc);
    // Background vectors start dominated: region scores must win their own
    // classes at covered pixels from step one, otherwise the max routes all
    // gradient to the background and the region scores never train. The
    // background still learns at uncovered pixels, where it is the only
    // candidate.
    p.background_actor = Tensor<T>({ka}, T(-2));
    p.background_action = Tensor<T>({kc}, T(-2));

    Rng rng(derive_seed(seed, 0));
    p.for_each_param([&](const std::string& name, ParamGroup, Tensor<T>& t) {
        const bool is_weight = name.ends_with("weight") || name.ends_with("_w") ||
                               name.ends_with(".w");
        if (!is_weight) return; // biases and background scores stay zero
        double fan_in = 0, fan_out = 0;
        if (t.rank() == 4) { // conv (3,3,Cin,Cout)
            fan_in = 9.0 * static_cast<double>(t.dim(2));
            fan_out = 9.0 * static_cast<double>(t.dim(3));
        } else { // linear (Din,Dout)
            fan_in = static_cast<double>(t.dim(0));
            fan_out = static_cast<double>(t.dim(1));
        }
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(rng.uniform(-bound, bound));
    });
    return p;
}

/// Intermediate products of a full forward pass over one frame.
template <typename T>
struct FrameForward {
    Tensor<T> fused;
    FrontendCache<T> frontend_cache;
};

template <typename T>
FrameForward<T> frontend_forward(const FrameSample& sample, const ModelParams<T>& params) {
    Tensor<T> app = sample.appearance.template cast<T>();
    Tensor<T> mot = sample.motion.template cast<T>();
    auto [fused, cache] = two_stream_forward(app, mot, params.frontend);
    return {std::move(fused), std::move(cache)};
}

/// Per-pixel baseline path: fused features -> linear heads -> score maps.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> baseline_scores(const Tensor<T>& fused,
                                                const ModelParams<T>& params) {
    return baseline_forward(fused, params.baseline);
}

template <typename T>
std::vector<std::array<double, 4>> region_boxes(const RegionSet& regions) {
    std::vector<std::array<double, 4>> boxes;
    boxes.reserve(regions.size());
    for (const auto& r : regions.regions) boxes.push_back(r.bbox);
    return boxes;
}

/// Region path: ROI pool -> FC head -> region-to-pixel fusion -> score maps.
template <typename T>
struct RegionForward {
    Tensor<T> pooled;
    RoiPoolWitness pool_witness;
    HeadCache<T> head_cache;
    RegionScores<T> scores;
    Tensor<T> actor_map;
    Tensor<T> action_map;
    FusionWitness<T> actor_witness;
    FusionWitness<T> action_witness;
};

template <typename T>
RegionForward<T> region_scores(const Tensor<T>& fused, const RegionSet& regions,
                               const ModelParams<T>& params) {
    RegionForward<T> fwd;
    auto [pooled, pool_witness] =
        roi_pool_forward(fused, region_boxes<T>(regions), params.config.roi_grid);
    fwd.pooled = std::move(pooled);
    fwd.pool_witness = std::move(pool_witness);
    auto [scores, head_cache] = head_forward(fwd.pooled, params.head);
    fwd.scores = std::move(scores);
    fwd.head_cache = std::move(head_cache);
    auto [actor_map, actor_witness] =
        region_to_pixel_forward(regions, fwd.scores.actor, params.background_actor);
    fwd.actor_map = std::move(actor_map);
    fwd.actor_witness = std::move(actor_witness);
    auto [action_map, action_witness] =
        region_to_pixel_forward(regions, fwd.scores.action, params.background_action);
    fwd.action_map = std::move(action_map);
    fwd.action_witness = std::move(action_witness);
    return fwd;
}

enum class HeadMode { Baseline, Region };

/// Full inference for one frame: probabilities for both tasks plus the three
/// label maps (actor, action, joint over valid pairs).
template <typename T>
FramePrediction predict_frame(const FrameSample& sample, const ModelParams<T>& params,
                              const Taxonomy& taxonomy, HeadMode mode) {
    FrameForward<T> front = frontend_forward(sample, params);
    Tensor<T> actor_scores, action_scores;
    if (mode == HeadMode::Baseline) {
        auto [sa, sc] = baseline_scores(front.fused, params);
        actor_scores = std::move(sa);
        action_scores = std::move(sc);
    } else {
        RegionForward<T> fwd = region_scores(front.fused, sample.regions, params);
        actor_scores = std::move(fwd.actor_map);
        action_scores = std::move(fwd.action_map);
    }
    const Tensor<T> p_actor = softmax_pixelwise(actor_scores);
    const Tensor<T> p_action = softmax_pixelwise(action_scores);
    FramePrediction pred;
    pred.actor = argmax_labeling(p_actor);
    pred.action = argmax_labeling(p_action);
    pred.joint = joint_argmax_valid(p_actor, p_action, taxonomy);
    return pred;
}

} // namespace aaseg
