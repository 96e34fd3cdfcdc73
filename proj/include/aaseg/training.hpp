#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aaseg/model.hpp"
#include "aaseg/rng.hpp"

namespace aaseg {

struct TrainConfig {
    double stage1_lr_frontend = 2.5e-4;
    double stage1_lr_backend = 5e-3;
    int stage1_batch = 10;
    int stage1_iters = 20000;
    double stage2_lr = 2.5e-4;
    int stage2_batch = 1;
    int stage2_iters = 80000;
    std::uint64_t seed = 1;
    std::string preset_name = "paper";
    double momentum = 0.0; // plain SGD by default
    double weight_decay = 0.0;

    void validate() const {
        if (stage1_lr_frontend <= 0 || stage1_lr_backend <= 0 || stage2_lr <= 0)
            throw std::invalid_argument("TrainConfig: learning rates must be positive");
        if (stage1_batch < 1 || stage2_batch < 1 || stage1_iters < 1 || stage2_iters < 1)
            throw std::invalid_argument(
                "TrainConfig: batch sizes and iteration counts must be positive");
    }

    /// The published two-stage schedule.
    static TrainConfig paper_preset() {
        TrainConfig c;
        c.stage1_lr_frontend = 2.5e-4;
        c.stage1_lr_backend = 5e-3;
        c.stage1_batch = 10;
        c.stage1_iters = 20000;
        c.stage2_lr = 2.5e-4;
        c.stage2_batch = 1;
        c.stage2_iters = 80000;
        c.preset_name = "paper";
        return c;
    }

    /// Desk-scale schedule sized for the synthetic datasets.
    static TrainConfig toy_preset() {
        TrainConfig c;
        c.stage1_lr_frontend = 0.05;
        c.stage1_lr_backend = 0.05;
        c.stage1_batch = 4;
        c.stage1_iters = 2000;
        c.stage2_lr = 0.05;
        c.stage2_batch = 1;
        c.stage2_iters = 6000;
        c.preset_name = "toy";
        return c;
    }

    static TrainConfig preset(const std::string& name) {
        if (name == "paper") return paper_preset();
        if (name == "toy") return toy_preset();
        throw std::invalid_argument("unknown training preset: " + name);
    }
};

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad_actor_scores;  // dL/d(pre-softmax actor scores)
    Tensor<T> grad_action_scores; // dL/d(pre-softmax action scores)
};

/// Summed actor and action cross-entropy, averaged over non-ignored pixels.
/// The returned gradients are w.r.t. the pre-softmax score maps (the usual
/// (p - onehot) / M form composed through the softmax).
template <typename T>
LossResult<T> actor_action_loss(const Tensor<T>& p_actor, const Tensor<T>& p_action,
                                const LabelMap& gt_actor, const LabelMap& gt_action) {
    const std::size_t height = p_actor.dim(0), width = p_actor.dim(1);
    if (p_action.dim(0) != height || p_action.dim(1) != width ||
        gt_actor.height != static_cast<int>(height) || gt_actor.width != static_cast<int>(width) ||
        gt_action.height != static_cast<int>(height) || gt_action.width != static_cast<int>(width))
        throw std::invalid_argument("actor_action_loss: shapes disagree");
    const std::size_t ka = p_actor.dim(2), kc = p_action.dim(2);

    std::size_t valid = 0;
    for (int y = 0; y < static_cast<int>(height); ++y)
        for (int x = 0; x < static_cast<int>(width); ++x)
            if (!gt_actor.ignored(y, x) && !gt_action.ignored(y, x)) ++valid;
    if (valid == 0) throw std::invalid_argument("actor_action_loss: all pixels ignored");

    LossResult<T> result;
    result.grad_actor_scores = Tensor<T>(p_actor.shape());
    result.grad_action_scores = Tensor<T>(p_action.shape());
    const T clamp = static_cast<T>(1e-12);
    const T inv = static_cast<T>(1.0 / static_cast<double>(valid));
    double loss = 0.0;
    for (int y = 0; y < static_cast<int>(height); ++y)
        for (int x = 0; x < static_cast<int>(width); ++x) {
            if (gt_actor.ignored(y, x) || gt_action.ignored(y, x)) continue;
            const std::size_t j = static_cast<std::size_t>(y) * width + x;
            const std::uint16_t oa = gt_actor.at(y, x);
            const std::uint16_t oc = gt_action.at(y, x);
            if (oa >= ka || oc >= kc)
                throw std::invalid_argument("actor_action_loss: ground-truth label out of range");
            const T* pa = p_actor.data() + j * ka;
            const T* pc = p_action.data() + j * kc;
            loss -= std::log(static_cast<double>(std::max(pa[oa], clamp)));
            loss -= std::log(static_cast<double>(std::max(pc[oc], clamp)));
            T* ga = result.grad_actor_scores.data() + j * ka;
            T* gc = result.grad_action_scores.data() + j * kc;
            for (std::size_t k = 0; k < ka; ++k) ga[k] = pa[k] * inv;
            ga[oa] -= inv;
            for (std::size_t k = 0; k < kc; ++k) gc[k] = pc[k] * inv;
            gc[oc] -= inv;
        }
    result.loss = loss / static_cast<double>(valid);
    return result;
}

/// Per-group learning rates; a group with rate 0 is frozen this step.
struct LrMap {
    double frontend = 0.0;
    double baseline = 0.0;
    double head = 0.0;
    double background = 0.0;

    double rate(ParamGroup g) const {
        switch (g) {
            case ParamGroup::Frontend: return frontend;
            case ParamGroup::Baseline: return baseline;
            case ParamGroup::Head: return head;
            case ParamGroup::Background: return background;
        }
        return 0.0;
    }
};

/// p <- p - lr(group) * g. Plain SGD; momentum and weight decay only kick in
/// when configured away from their 0 defaults.
template <typename T>
void sgd_step(ModelParams<T>& params, const ModelParams<T>& grads, const LrMap& lr,
              double momentum = 0.0, double weight_decay = 0.0,
              ModelParams<T>* velocity = nullptr) {
    std::vector<const Tensor<T>*> grad_tensors;
    grads.for_each_param(
        [&](const std::string&, ParamGroup, const Tensor<T>& t) { grad_tensors.push_back(&t); });
    std::vector<Tensor<T>*> vel_tensors;
    if (velocity)
        velocity->for_each_param(
            [&](const std::string&, ParamGroup, Tensor<T>& t) { vel_tensors.push_back(&t); });

    std::size_t ti = 0;
    params.for_each_param([&](const std::string& name, ParamGroup group, Tensor<T>& t) {
        const Tensor<T>& g = *grad_tensors[ti];
        const double rate = lr.rate(group);
        if (rate != 0.0) {
            if (!g.all_finite())
                throw std::runtime_error("sgd_step: non-finite gradient for parameter " + name);
            for (std::size_t i = 0; i < t.size(); ++i) {
                T step = g[i];
                if (weight_decay != 0.0) step += static_cast<T>(weight_decay) * t[i];
                if (momentum != 0.0 && velocity) {
                    Tensor<T>& v = *vel_tensors[ti];
                    v[i] = static_cast<T>(momentum) * v[i] + step;
                    step = v[i];
                }
                t[i] -= static_cast<T>(rate) * step;
            }
        }
        ++ti;
    });
}

struct LogRecord {
    int iteration = 0;
    int stage = 0;
    double loss = 0.0;
};

struct TrainLog {
    std::vector<LogRecord> records;

    /// Line-delimited: iteration, stage, loss at 9 significant digits.
    void write(std::ostream& os) const {
        os << "iteration,stage,loss\n";
        for (const auto& r : records) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%d,%.9g", r.iteration, r.stage, r.loss);
            os << buf << "\n";
        }
    }
};

namespace detail {

template <typename T>
void accumulate_tensor(Tensor<T>& into, const Tensor<T>& from) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

template <typename T>
ModelParams<T> zero_like(const ModelParams<T>& params) {
    ModelParams<T> z = params;
    z.for_each_param([](const std::string&, ParamGroup, Tensor<T>& t) { t.fill(T(0)); });
    return z;
}

template <typename T>
void scale_params(ModelParams<T>& params, T scale) {
    params.for_each_param([&](const std::string&, ParamGroup, Tensor<T>& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= scale;
    });
}

/// Stage-1 gradient for one frame: front-end + per-pixel baseline under the
/// joint cross-entropy, accumulated into grads. Returns the frame loss.
template <typename T>
double baseline_frame_gradient(const FrameSample& sample, const ModelParams<T>& params,
                               ModelParams<T>& grads) {
    FrameForward<T> front = frontend_forward(sample, params);
    auto [score_a, score_c] = baseline_forward(front.fused, params.baseline);
    const Tensor<T> p_actor = softmax_pixelwise(score_a);
    const Tensor<T> p_action = softmax_pixelwise(score_c);
    LossResult<T> loss = actor_action_loss(p_actor, p_action, sample.gt_actor, sample.gt_action);

    BaselineGrads<T> bg = baseline_backward(front.fused, params.baseline, loss.grad_actor_scores,
                                            loss.grad_action_scores);
    FrontendGrads<T> fg = two_stream_backward(front.frontend_cache, params.frontend, bg.fused);

    accumulate_tensor(grads.baseline.actor_w, bg.actor_w);
    accumulate_tensor(grads.baseline.actor_b, bg.actor_b);
    accumulate_tensor(grads.baseline.action_w, bg.action_w);
    accumulate_tensor(grads.baseline.action_b, bg.action_b);
    accumulate_tensor(grads.frontend.appearance.weight, fg.appearance.weight);
    accumulate_tensor(grads.frontend.appearance.bias, fg.appearance.bias);
    if (params.config.use_motion) {
        accumulate_tensor(grads.frontend.motion.weight, fg.motion.weight);
        accumulate_tensor(grads.frontend.motion.bias, fg.motion.bias);
    }
    return loss.loss;
}

/// Stage-2 gradient for one frame through the region path, with the frozen
/// fused features supplied by the caller.
template <typename T>
double region_frame_gradient(const FrameSample& sample, const Tensor<T>& fused,
                             const ModelParams<T>& params, ModelParams<T>& grads) {
    RegionForward<T> fwd = region_scores(fused, sample.regions, params);
    const Tensor<T> p_actor = softmax_pixelwise(fwd.actor_map);
    const Tensor<T> p_action = softmax_pixelwise(fwd.action_map);
    LossResult<T> loss = actor_action_loss(p_actor, p_action, sample.gt_actor, sample.gt_action);

    auto [grad_scores_a, grad_bg_a] =
        region_to_pixel_backward(fwd.actor_witness, sample.regions, loss.grad_actor_scores);
    auto [grad_scores_c, grad_bg_c] =
        region_to_pixel_backward(fwd.action_witness, sample.regions, loss.grad_action_scores);
    HeadGrads<T> hg = head_backward(fwd.head_cache, params.head, grad_scores_a, grad_scores_c);

    for (std::size_t l = 0; l < hg.fc_w.size(); ++l) {
        accumulate_tensor(grads.head.fc_w[l], hg.fc_w[l]);
        accumulate_tensor(grads.head.fc_b[l], hg.fc_b[l]);
    }
    accumulate_tensor(grads.head.actor_w, hg.actor_w);
    accumulate_tensor(grads.head.actor_b, hg.actor_b);
    accumulate_tensor(grads.head.action_w, hg.action_w);
    accumulate_tensor(grads.head.action_b, hg.action_b);
    accumulate_tensor(grads.background_actor, grad_bg_a);
    accumulate_tensor(grads.background_action, grad_bg_c);
    return loss.loss;
}

} // namespace detail

/// Two-stage schedule: stage 1 trains the front-end jointly with the
/// per-pixel baseline head (two learning-rate groups); stage 2 freezes both
/// and trains the FC region head plus the background score vectors through
/// the ROI-pool / fusion path. Each stage draws batches from its own derived
/// seed stream, so stage 2 can resume from a stored stage-1 result bit-exactly.
template <typename T>
TrainLog train_two_stage(ModelParams<T>& params, const std::vector<FrameSample>& dataset,
                         const TrainConfig& config, int run_stage = 0 /* 0 = both */) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("train_two_stage: dataset is empty");
    TrainLog log;

    if (run_stage == 0 || run_stage == 1) {
        Rng rng(derive_seed(config.seed, 1));
        LrMap lr;
        lr.frontend = config.stage1_lr_frontend;
        lr.baseline = config.stage1_lr_backend;
        ModelParams<T> velocity = detail::zero_like(params);
        for (int iter = 1; iter <= config.stage1_iters; ++iter) {
            ModelParams<T> grads = detail::zero_like(params);
            double batch_loss = 0.0;
            for (int b = 0; b < config.stage1_batch; ++b) {
                const std::size_t idx = rng.index(dataset.size());
                batch_loss += detail::baseline_frame_gradient(dataset[idx], params, grads);
            }
            if (config.stage1_batch > 1)
                detail::scale_params(grads, static_cast<T>(1.0 / config.stage1_batch));
            sgd_step(params, grads, lr, config.momentum, config.weight_decay, &velocity);
            log.records.push_back({iter, 1, batch_loss / config.stage1_batch});
        }
    }

    if (run_stage == 0 || run_stage == 2) {
        // Front-end is frozen in stage 2, so fused features are computed once.
        std::vector<Tensor<T>> cached;
        cached.reserve(dataset.size());
        for (const auto& sample : dataset)
            cached.push_back(frontend_forward(sample, params).fused);

        Rng rng(derive_seed(config.seed, 2));
        LrMap lr;
        lr.head = config.stage2_lr;
        lr.background = config.stage2_lr;
        ModelParams<T> velocity = detail::zero_like(params);
        for (int iter = 1; iter <= config.stage2_iters; ++iter) {
            ModelParams<T> grads = detail::zero_like(params);
            double batch_loss = 0.0;
            for (int b = 0; b < config.stage2_batch; ++b) {
                const std::size_t idx = rng.index(dataset.size());
                batch_loss +=
                    detail::region_frame_gradient(dataset[idx], cached[idx], params, grads);
            }
            if (config.stage2_batch > 1)
                detail::scale_params(grads, static_cast<T>(1.0 / config.stage2_batch));
            sgd_step(params, grads, lr, config.momentum, config.weight_decay, &velocity);
            log.records.push_back({iter, 2, batch_loss / config.stage2_batch});
        }
    }
    return log;
}

} // namespace aaseg
