#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aaseg/frontend.hpp"
#include "aaseg/fusion.hpp"
#include "aaseg/regionhead.hpp"
#include "aaseg/rng.hpp"
#include "aaseg/training.hpp"
#include "aaseg/types.hpp"

namespace aaseg {

/// Central finite differences at double precision against a caller-supplied
/// analytic gradient. Returns max over parameters of
/// |analytic - numeric| / max(1, |numeric|).
inline double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> params,
                                      const std::vector<double>& analytic, double eps = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double hi = f(params);
        params[i] = saved - eps;
        const double lo = f(params);
        params[i] = saved;
        const double numeric = (hi - lo) / (2.0 * eps);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

struct GradCheckEntry {
    std::string op;
    double max_rel_err = 0.0;
    bool pass = false;
};

namespace gradcheck_detail {

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Tensor<double> random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo,
                                    double hi) {
    Tensor<double> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Scalarize a tensor map through a fixed random projection so one scalar
/// drives the whole finite-difference sweep.
inline double project(const Tensor<double>& t, const Tensor<double>& weights) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * weights[i];
    return acc;
}

/// Margin guard: smallest gap between the max and the runner-up over
/// candidate sets must exceed the margin, else the instance is tie-prone.
inline bool max_margin_ok(const std::vector<double>& candidates, double margin) {
    if (candidates.size() < 2) return true;
    double best = candidates[0], second = -1e300;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (candidates[i] > best) {
            second = best;
            best = candidates[i];
        } else
            second = std::max(second, candidates[i]);
    }
    return best - second > margin;
}

struct FusionInstance {
    RegionSet regions;
    Tensor<double> scores;
    Tensor<double> background;
    Tensor<double> proj;
};

/// Random fusion instance whose max decisions all carry a comfortable margin,
/// so eps-sized probes cannot flip a winner.
inline FusionInstance make_fusion_instance(std::uint64_t seed, double margin = 0.02) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, 100 + attempt));
        FusionInstance inst;
        const int h = 5, w = 6;
        const std::size_t n = 3, k = 4;
        inst.regions.frame_height = h;
        inst.regions.frame_width = w;
        for (std::size_t i = 0; i < n; ++i) {
            RegionMask r;
            const double x0 = rng.uniform(0, w - 2.0), y0 = rng.uniform(0, h - 2.0);
            r.bbox = {x0, y0, x0 + rng.uniform(1.5, w - x0), y0 + rng.uniform(1.5, h - y0)};
            r.mask = Tensor<float>({2, 2});
            for (std::size_t m = 0; m < 4; ++m)
                r.mask[m] = static_cast<float>(rng.uniform(0.2, 1.0));
            inst.regions.regions.push_back(std::move(r));
        }
        inst.scores = random_tensor(rng, {n, k}, -1.0, 1.0);
        inst.background = random_tensor(rng, {k}, -1.0, 1.0);
        inst.proj = random_tensor(rng, {static_cast<std::size_t>(h), static_cast<std::size_t>(w), k},
                                  -1.0, 1.0);

        bool ok = true;
        for (int y = 0; y < h && ok; ++y)
            for (int x = 0; x < w && ok; ++x)
                for (std::size_t c = 0; c < k && ok; ++c) {
                    std::vector<double> cands = {inst.background[c]};
                    for (std::size_t i = 0; i < n; ++i) {
                        const float m = mask_at_pixel(inst.regions.regions[i], x, y, w, h);
                        if (m > 0.0f) cands.push_back(static_cast<double>(m) * inst.scores(i, c));
                    }
                    ok = max_margin_ok(cands, margin);
                }
        if (ok) return inst;
    }
}

inline GradCheckEntry check_region_to_pixel(std::uint64_t seed, double eps, double tol,
                                            double fault) {
    FusionInstance inst = make_fusion_instance(seed);
    const std::size_t n_scores = inst.scores.size();
    std::vector<double> params = inst.scores.storage();
    params.insert(params.end(), inst.background.storage().begin(),
                  inst.background.storage().end());

    auto loss = [&](const std::vector<double>& p) {
        Tensor<double> s = inst.scores, b = inst.background;
        std::copy(p.begin(), p.begin() + n_scores, s.storage().begin());
        std::copy(p.begin() + n_scores, p.end(), b.storage().begin());
        auto [out, witness] = region_to_pixel_forward(inst.regions, s, b);
        return project(out, inst.proj);
    };

    auto [out, witness] = region_to_pixel_forward(inst.regions, inst.scores, inst.background);
    auto [grad_scores, grad_bg] = region_to_pixel_backward(witness, inst.regions, inst.proj);
    std::vector<double> analytic = grad_scores.storage();
    analytic.insert(analytic.end(), grad_bg.storage().begin(), grad_bg.storage().end());
    analytic[0] += fault;

    const double err = finite_difference_check(loss, params, analytic, eps);
    return {"region_to_pixel", err, err < tol};
}

inline GradCheckEntry check_softmax(std::uint64_t seed, double eps, double tol, double fault) {
    Rng rng(derive_seed(seed, 200));
    const std::size_t h = 3, w = 4, k = 5;
    Tensor<double> scores = random_tensor(rng, {h, w, k}, -2.0, 2.0);
    Tensor<double> proj = random_tensor(rng, {h, w, k}, -1.0, 1.0);

    auto loss = [&](const std::vector<double>& p) {
        Tensor<double> s = Tensor<double>::from_data(scores.shape(), p);
        return project(softmax_pixelwise(s), proj);
    };
    Tensor<double> probs = softmax_pixelwise(scores);
    std::vector<double> analytic = softmax_pixelwise_backward(probs, proj).storage();
    analytic[0] += fault;

    const double err = finite_difference_check(loss, scores.storage(), analytic, eps);
    return {"softmax", err, err < tol};
}

inline GradCheckEntry check_roi_pool(std::uint64_t seed, double eps, double tol, double fault) {
    const double margin = 0.05;
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, 300 + attempt));
        const std::size_t h = 8, w = 8, c = 3;
        const int grid = 2;
        Tensor<double> features = random_tensor(rng, {h, w, c}, -1.0, 1.0);
        std::vector<std::array<double, 4>> boxes = {
            {rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(5, 8), rng.uniform(5, 8)},
            {rng.uniform(1, 3), rng.uniform(1, 3), rng.uniform(4, 7), rng.uniform(4, 7)},
        };
        auto [pooled, witness] = roi_pool_forward(features, boxes, grid);

        // Reject instances where any pooling cell has a near-tied max.
        bool ok = true;
        for (std::size_t i = 0; i < boxes.size() && ok; ++i) {
            const auto [xs, xe, ys, ye] = detail::quantize_box(boxes[i], static_cast<int>(w),
                                                               static_cast<int>(h), i);
            const int bw = xe - xs, bh = ye - ys;
            for (int gy = 0; gy < grid && ok; ++gy)
                for (int gx = 0; gx < grid && ok; ++gx) {
                    const int cy0 = ys + static_cast<int>(std::floor(double(gy) * bh / grid));
                    const int cy1 = ys + static_cast<int>(std::ceil(double(gy + 1) * bh / grid));
                    const int cx0 = xs + static_cast<int>(std::floor(double(gx) * bw / grid));
                    const int cx1 = xs + static_cast<int>(std::ceil(double(gx + 1) * bw / grid));
                    for (std::size_t ch = 0; ch < c && ok; ++ch) {
                        std::vector<double> cands;
                        for (int y = cy0; y < cy1; ++y)
                            for (int x = cx0; x < cx1; ++x)
                                cands.push_back(features(static_cast<std::size_t>(y),
                                                         static_cast<std::size_t>(x), ch));
                        ok = max_margin_ok(cands, margin);
                    }
                }
        }
        if (!ok) continue;

        Tensor<double> proj = random_tensor(rng, pooled.shape(), -1.0, 1.0);
        auto loss = [&](const std::vector<double>& p) {
            Tensor<double> f = Tensor<double>::from_data(features.shape(), p);
            auto [pool, wit] = roi_pool_forward(f, boxes, grid);
            return project(pool, proj);
        };
        std::vector<double> analytic = roi_pool_backward(witness, proj).storage();
        analytic[0] += fault;
        const double err = finite_difference_check(loss, features.storage(), analytic, eps);
        return {"roi_pool", err, err < tol};
    }
}

/// ReLU pre-activations must sit away from the kink for the FD sweep.
inline bool relu_margin_ok(const Tensor<double>& pre, double margin) {
    for (std::size_t i = 0; i < pre.size(); ++i)
        if (std::abs(pre[i]) < margin) return false;
    return true;
}

inline GradCheckEntry check_region_head(std::uint64_t seed, double eps, double tol, double fault) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, 400 + attempt));
        const int grid = 2;
        const std::size_t cin = 3, hidden = 6, ka = 3, kc = 4, n = 2;
        HeadParams<double> params = HeadParams<double>::with_shape(grid, cin, 2, hidden, ka, kc);
        std::vector<double> flat;
        auto collect = [&](HeadParams<double>& hp, auto&& fn) {
            for (auto& t : hp.fc_w) fn(t);
            for (auto& t : hp.fc_b) fn(t);
            fn(hp.actor_w);
            fn(hp.actor_b);
            fn(hp.action_w);
            fn(hp.action_b);
        };
        collect(params, [&](Tensor<double>& t) {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.8, 0.8);
        });
        Tensor<double> pooled = random_tensor(
            rng, {n, static_cast<std::size_t>(grid), static_cast<std::size_t>(grid), cin}, -1.0,
            1.0);

        auto [scores, cache] = head_forward(pooled, params);
        bool ok = true;
        for (const auto& pre : cache.pre) ok = ok && relu_margin_ok(pre, 0.05);
        if (!ok) continue;

        Tensor<double> proj_a = random_tensor(rng, scores.actor.shape(), -1.0, 1.0);
        Tensor<double> proj_c = random_tensor(rng, scores.action.shape(), -1.0, 1.0);

        // Parameter vector: all head weights then the pooled input.
        collect(params, [&](Tensor<double>& t) {
            flat.insert(flat.end(), t.storage().begin(), t.storage().end());
        });
        const std::size_t param_count = flat.size();
        flat.insert(flat.end(), pooled.storage().begin(), pooled.storage().end());

        auto loss = [&](const std::vector<double>& p) {
            HeadParams<double> hp = params;
            std::size_t pos = 0;
            collect(hp, [&](Tensor<double>& t) {
                std::copy(p.begin() + pos, p.begin() + pos + t.size(), t.storage().begin());
                pos += t.size();
            });
            Tensor<double> in = Tensor<double>::from_data(
                pooled.shape(), std::vector<double>(p.begin() + param_count, p.end()));
            auto [sc, ch] = head_forward(in, hp);
            return project(sc.actor, proj_a) + project(sc.action, proj_c);
        };

        HeadGrads<double> grads = head_backward(cache, params, proj_a, proj_c);
        std::vector<double> analytic;
        for (auto& t : grads.fc_w)
            analytic.insert(analytic.end(), t.storage().begin(), t.storage().end());
        for (auto& t : grads.fc_b)
            analytic.insert(analytic.end(), t.storage().begin(), t.storage().end());
        for (const Tensor<double>* t :
             {&grads.actor_w, &grads.actor_b, &grads.action_w, &grads.action_b, &grads.input})
            analytic.insert(analytic.end(), t->storage().begin(), t->storage().end());
        analytic[0] += fault;

        const double err = finite_difference_check(loss, flat, analytic, eps);
        return {"region_head", err, err < tol};
    }
}

inline GradCheckEntry check_two_stream(std::uint64_t seed, double eps, double tol, double fault) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, 500 + attempt));
        const std::size_t h = 5, w = 5, ca = 2, cm = 2, feat = 3;
        FrontendParams<double> params;
        params.use_motion = true;
        params.appearance = StreamParams<double>::with_shape(ca, feat);
        params.motion = StreamParams<double>::with_shape(cm, feat);
        auto fill = [&](Tensor<double>& t, double lo, double hi) {
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
        };
        fill(params.appearance.weight, -0.6, 0.6);
        fill(params.appearance.bias, -0.3, 0.3);
        fill(params.motion.weight, -0.6, 0.6);
        fill(params.motion.bias, -0.3, 0.3);
        Tensor<double> app = random_tensor(rng, {h, w, ca}, -1.0, 1.0);
        Tensor<double> mot = random_tensor(rng, {h, w, cm}, -1.0, 1.0);

        auto [fused, cache] = two_stream_forward(app, mot, params);
        if (!relu_margin_ok(cache.appearance.pre, 0.05) ||
            !relu_margin_ok(cache.motion.pre, 0.05))
            continue;

        Tensor<double> proj = random_tensor(rng, fused.shape(), -1.0, 1.0);
        std::vector<double> flat;
        auto collect = [&](FrontendParams<double>& fp, auto&& fn) {
            fn(fp.appearance.weight);
            fn(fp.appearance.bias);
            fn(fp.motion.weight);
            fn(fp.motion.bias);
        };
        collect(params, [&](Tensor<double>& t) {
            flat.insert(flat.end(), t.storage().begin(), t.storage().end());
        });
        const std::size_t param_count = flat.size();
        flat.insert(flat.end(), app.storage().begin(), app.storage().end());
        flat.insert(flat.end(), mot.storage().begin(), mot.storage().end());

        auto loss = [&](const std::vector<double>& p) {
            FrontendParams<double> fp = params;
            std::size_t pos = 0;
            collect(fp, [&](Tensor<double>& t) {
                std::copy(p.begin() + pos, p.begin() + pos + t.size(), t.storage().begin());
                pos += t.size();
            });
            Tensor<double> a = Tensor<double>::from_data(
                app.shape(), std::vector<double>(p.begin() + param_count,
                                                 p.begin() + param_count + app.size()));
            Tensor<double> m = Tensor<double>::from_data(
                mot.shape(),
                std::vector<double>(p.begin() + param_count + app.size(), p.end()));
            auto [f, ch] = two_stream_forward(a, m, fp);
            return project(f, proj);
        };

        FrontendGrads<double> grads = two_stream_backward(cache, params, proj);
        std::vector<double> analytic;
        for (const Tensor<double>* t :
             {&grads.appearance.weight, &grads.appearance.bias, &grads.motion.weight,
              &grads.motion.bias, &grads.appearance.input, &grads.motion.input})
            analytic.insert(analytic.end(), t->storage().begin(), t->storage().end());
        analytic[0] += fault;

        const double err = finite_difference_check(loss, flat, analytic, eps);
        return {"two_stream", err, err < tol};
    }
}

inline GradCheckEntry check_baseline_head(std::uint64_t seed, double eps, double tol,
                                          double fault) {
    Rng rng(derive_seed(seed, 600));
    const std::size_t h = 4, w = 5, cf = 4, ka = 3, kc = 4;
    BaselineParams<double> params = BaselineParams<double>::with_shape(cf, ka, kc);
    auto fill = [&](Tensor<double>& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.8, 0.8);
    };
    fill(params.actor_w);
    fill(params.actor_b);
    fill(params.action_w);
    fill(params.action_b);
    Tensor<double> fused = random_tensor(rng, {h, w, cf}, -1.0, 1.0);

    auto [sa, sc] = baseline_forward(fused, params);
    Tensor<double> proj_a = random_tensor(rng, sa.shape(), -1.0, 1.0);
    Tensor<double> proj_c = random_tensor(rng, sc.shape(), -1.0, 1.0);

    std::vector<double> flat;
    auto collect = [&](BaselineParams<double>& bp, auto&& fn) {
        fn(bp.actor_w);
        fn(bp.actor_b);
        fn(bp.action_w);
        fn(bp.action_b);
    };
    collect(params, [&](Tensor<double>& t) {
        flat.insert(flat.end(), t.storage().begin(), t.storage().end());
    });
    const std::size_t param_count = flat.size();
    flat.insert(flat.end(), fused.storage().begin(), fused.storage().end());

    auto loss = [&](const std::vector<double>& p) {
        BaselineParams<double> bp = params;
        std::size_t pos = 0;
        collect(bp, [&](Tensor<double>& t) {
            std::copy(p.begin() + pos, p.begin() + pos + t.size(), t.storage().begin());
            pos += t.size();
        });
        Tensor<double> f = Tensor<double>::from_data(
            fused.shape(), std::vector<double>(p.begin() + param_count, p.end()));
        auto [a, c] = baseline_forward(f, bp);
        return project(a, proj_a) + project(c, proj_c);
    };

    BaselineGrads<double> grads = baseline_backward(fused, params, proj_a, proj_c);
    std::vector<double> analytic;
    for (const Tensor<double>* t : {&grads.actor_w, &grads.actor_b, &grads.action_w,
                                    &grads.action_b, &grads.fused})
        analytic.insert(analytic.end(), t->storage().begin(), t->storage().end());
    analytic[0] += fault;

    const double err = finite_difference_check(loss, flat, analytic, eps);
    return {"baseline_head", err, err < tol};
}

inline GradCheckEntry check_loss(std::uint64_t seed, double eps, double tol, double fault) {
    Rng rng(derive_seed(seed, 700));
    const std::size_t h = 4, w = 4, ka = 3, kc = 4;
    Tensor<double> scores_a = random_tensor(rng, {h, w, ka}, -1.5, 1.5);
    Tensor<double> scores_c = random_tensor(rng, {h, w, kc}, -1.5, 1.5);
    LabelMap gt_a, gt_c;
    gt_a.height = gt_c.height = static_cast<int>(h);
    gt_a.width = gt_c.width = static_cast<int>(w);
    for (std::size_t j = 0; j < h * w; ++j) {
        gt_a.labels.push_back(static_cast<std::uint16_t>(rng.index(ka)));
        gt_c.labels.push_back(static_cast<std::uint16_t>(rng.index(kc)));
    }

    auto loss = [&](const std::vector<double>& p) {
        Tensor<double> sa = Tensor<double>::from_data(
            scores_a.shape(), std::vector<double>(p.begin(), p.begin() + scores_a.size()));
        Tensor<double> sc = Tensor<double>::from_data(
            scores_c.shape(), std::vector<double>(p.begin() + scores_a.size(), p.end()));
        return actor_action_loss(softmax_pixelwise(sa), softmax_pixelwise(sc), gt_a, gt_c).loss;
    };

    LossResult<double> res = actor_action_loss(softmax_pixelwise(scores_a),
                                               softmax_pixelwise(scores_c), gt_a, gt_c);
    std::vector<double> flat = scores_a.storage();
    flat.insert(flat.end(), scores_c.storage().begin(), scores_c.storage().end());
    std::vector<double> analytic = res.grad_actor_scores.storage();
    analytic.insert(analytic.end(), res.grad_action_scores.storage().begin(),
                    res.grad_action_scores.storage().end());
    analytic[0] += fault;

    const double err = finite_difference_check(loss, flat, analytic, eps);
    return {"actor_action_loss", err, err < tol};
}

} // namespace gradcheck_detail

/// Runs the finite-difference suite over every differentiable operation,
/// exactly once each. With inject_fault, one analytic gradient entry per op
/// is offset by +0.1 to prove the harness detects wrong gradients.
inline std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t seed, double eps = 1e-3,
                                                      double tol = 1e-4,
                                                      bool inject_fault = false) {
    const double fault = inject_fault ? 0.1 : 0.0;
    using namespace gradcheck_detail;
    return {
        check_two_stream(seed, eps, tol, fault),
        check_baseline_head(seed, eps, tol, fault),
        check_roi_pool(seed, eps, tol, fault),
        check_region_head(seed, eps, tol, fault),
        check_region_to_pixel(seed, eps, tol, fault),
        check_softmax(seed, eps, tol, fault),
        check_loss(seed, eps, tol, fault),
    };
}

} // namespace aaseg
