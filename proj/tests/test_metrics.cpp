#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "aaseg/metrics.hpp"
#include "aaseg/rng.hpp"
#include "aaseg/synthdata.hpp"
#include "oracles.hpp"

using namespace aaseg;

namespace {
LabelMap map_from(int h, int w, std::vector<std::uint16_t> labels) {
    LabelMap m;
    m.height = h;
    m.width = w;
    m.labels = std::move(labels);
    return m;
}
} // namespace

TEST_CASE("confusion counting") {
    SECTION("perfect prediction is diagonal") {
        const LabelMap gt = map_from(2, 2, {0, 1, 2, 1});
        const ConfusionCounts c = confusion_counts(gt, gt, 3);
        CHECK(c.at(0, 0) == 1);
        CHECK(c.at(1, 1) == 2);
        CHECK(c.at(2, 2) == 1);
        CHECK(c.total() == 4);
    }
    SECTION("all pixels ignored gives a zero matrix") {
        LabelMap gt = map_from(2, 2, {0, 1, 0, 1});
        gt.ignore = {1, 1, 1, 1};
        const ConfusionCounts c = confusion_counts(gt, gt, 2);
        CHECK(c.total() == 0);
    }
    SECTION("hand-counted 2x2 case") {
        const LabelMap gt = map_from(2, 2, {0, 0, 1, 1});
        const LabelMap pred = map_from(2, 2, {0, 1, 1, 1});
        const ConfusionCounts c = confusion_counts(pred, gt, 2);
        CHECK(c.at(0, 0) == 1);
        CHECK(c.at(0, 1) == 1);
        CHECK(c.at(1, 0) == 0);
        CHECK(c.at(1, 1) == 2);
    }
    SECTION("out-of-range labels are rejected") {
        const LabelMap gt = map_from(1, 1, {5});
        CHECK_THROWS_AS(confusion_counts(gt, gt, 2), std::invalid_argument);
    }
}

TEST_CASE("metric formulas on the hand-counted fixture") {
    // counts = [[1,1],[0,2]]
    ConfusionCounts c(2);
    c.at(0, 0) = 1;
    c.at(0, 1) = 1;
    c.at(1, 1) = 2;
    CHECK(*global_accuracy(c) == Catch::Approx(0.75).margin(1e-12));
    CHECK(*mean_class_accuracy(c) == Catch::Approx(0.75).margin(1e-12));
    CHECK(*mean_class_iou(c) == Catch::Approx(7.0 / 12.0).margin(1e-9));
}

TEST_CASE("metric edge cases") {
    SECTION("empty counts are undefined") {
        ConfusionCounts c(3);
        CHECK_FALSE(global_accuracy(c).has_value());
        CHECK_FALSE(mean_class_accuracy(c).has_value());
        CHECK_FALSE(mean_class_iou(c).has_value());
    }
    SECTION("a class absent from GT is excluded from the class mean") {
        ConfusionCounts c(3);
        c.at(0, 0) = 4;
        c.at(1, 2) = 4; // class 2 predicted but never in GT
        CHECK(*mean_class_accuracy(c) == Catch::Approx(0.5)); // classes 0 and 1 only
    }
    SECTION("prediction disjoint from GT gives zero IoU") {
        ConfusionCounts c(2);
        c.at(0, 1) = 5; // GT class 0, all predicted 1
        CHECK(*mean_class_iou(c) == 0.0);
    }
    SECTION("per-class IoU never exceeds per-class recall") {
        Rng rng(31);
        for (int trial = 0; trial < 25; ++trial) {
            const int k = static_cast<int>(rng.uniform_int(2, 5));
            ConfusionCounts c(k);
            for (int g = 0; g < k; ++g)
                for (int p = 0; p < k; ++p) c.at(g, p) = rng.uniform_int(0, 9);
            for (int cls = 0; cls < k; ++cls) {
                const auto recall = class_recall(c, cls);
                const auto iou = class_iou(c, cls);
                if (recall && iou) CHECK(*iou <= *recall + 1e-15);
            }
        }
    }
    SECTION("balanced random two-class prediction sits near one half") {
        Rng rng(8);
        ConfusionCounts c(2);
        for (int i = 0; i < 10000; ++i) {
            const int g = i % 2;
            const int p = static_cast<int>(rng.uniform_int(0, 1));
            ++c.at(g, p);
        }
        CHECK(*global_accuracy(c) == Catch::Approx(0.5).margin(0.02));
    }
}

TEST_CASE("boundary band construction") {
    SECTION("constant GT has an empty band") {
        const LabelMap gt = LabelMap::filled(6, 6, 3);
        const auto band = boundary_band(gt, 4);
        for (auto b : band) CHECK(b == 0);
    }
    SECTION("vertical edge with radius 2 bands columns 1..6") {
        LabelMap gt = LabelMap::filled(8, 8, 0);
        for (int y = 0; y < 8; ++y)
            for (int x = 4; x < 8; ++x) gt.at(y, x) = 1;
        const auto band = boundary_band(gt, 2);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                const bool expected = x >= 1 && x <= 6;
                CHECK(static_cast<bool>(band[static_cast<std::size_t>(y) * 8 + x]) == expected);
            }
    }
    SECTION("radius covering the frame leaves nothing to evaluate") {
        LabelMap gt = LabelMap::filled(4, 4, 0);
        gt.at(0, 0) = 1;
        const auto band = boundary_band(gt, 10);
        const LabelMap pred = LabelMap::filled(4, 4, 0);
        const ConfusionCounts c = confusion_counts(pred, gt, 2, &band);
        CHECK(c.total() == 0);
        CHECK_FALSE(global_accuracy(c).has_value());
    }
}

namespace {
std::vector<FrameSample> random_eval_dataset(Rng& rng, const Taxonomy& tax, int frames) {
    std::vector<FrameSample> out;
    for (int f = 0; f < frames; ++f) {
        const int h = static_cast<int>(rng.uniform_int(2, 6));
        const int w = static_cast<int>(rng.uniform_int(2, 6));
        FrameSample s;
        s.appearance = Tensor<float>({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1});
        s.motion = Tensor<float>({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1});
        s.gt_actor = LabelMap::filled(h, w, 0);
        s.gt_action = LabelMap::filled(h, w, 0);
        s.regions.frame_width = w;
        s.regions.frame_height = h;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const auto& pair = tax.valid_pairs()[rng.index(tax.valid_pairs().size())];
                s.gt_actor.at(y, x) = static_cast<std::uint16_t>(pair.first);
                s.gt_action.at(y, x) = static_cast<std::uint16_t>(pair.second);
            }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<FramePrediction> random_predictions(Rng& rng, const Taxonomy& tax,
                                                const std::vector<FrameSample>& gts) {
    std::vector<FramePrediction> preds;
    for (const auto& gt : gts) {
        FramePrediction p;
        p.actor = LabelMap::filled(gt.gt_actor.height, gt.gt_actor.width, 0);
        p.action = LabelMap::filled(gt.gt_actor.height, gt.gt_actor.width, 0);
        p.joint = LabelMap::filled(gt.gt_actor.height, gt.gt_actor.width, 0);
        for (std::size_t j = 0; j < p.actor.labels.size(); ++j) {
            p.actor.labels[j] = static_cast<std::uint16_t>(rng.index(tax.num_actors()));
            p.action.labels[j] = static_cast<std::uint16_t>(rng.index(tax.num_actions()));
            p.joint.labels[j] = static_cast<std::uint16_t>(rng.index(tax.num_pairs()));
        }
        preds.push_back(std::move(p));
    }
    return preds;
}
} // namespace

TEST_CASE("evaluate_all") {
    const Taxonomy tax = default_synth_taxonomy();
    Rng rng(404);

    SECTION("GT copied as prediction scores 1.0 on all nine metrics") {
        const auto gts = random_eval_dataset(rng, tax, 4);
        std::vector<FramePrediction> preds;
        for (const auto& gt : gts) {
            FramePrediction p;
            p.actor = gt.gt_actor;
            p.action = gt.gt_action;
            p.joint = joint_ground_truth(gt.gt_actor, gt.gt_action, tax);
            preds.push_back(std::move(p));
        }
        const MetricsReport r = evaluate_all(preds, gts, tax);
        for (const SettingMetrics* m : {&r.actor, &r.action, &r.joint}) {
            CHECK(*m->global_acc == 1.0);
            CHECK(*m->mean_class_acc == 1.0);
            CHECK(*m->mean_class_iou == 1.0);
        }
    }
    SECTION("matches the naive per-pixel oracle exactly") {
        for (int trial = 0; trial < 20; ++trial) {
            const auto gts = random_eval_dataset(rng, tax, 3);
            const auto preds = random_predictions(rng, tax, gts);
            const MetricsReport r = evaluate_all(preds, gts, tax);

            std::vector<LabelMap> pa, pc, pj, ga, gc, gj;
            for (std::size_t f = 0; f < gts.size(); ++f) {
                pa.push_back(preds[f].actor);
                pc.push_back(preds[f].action);
                pj.push_back(preds[f].joint);
                ga.push_back(gts[f].gt_actor);
                gc.push_back(gts[f].gt_action);
                gj.push_back(joint_ground_truth(gts[f].gt_actor, gts[f].gt_action, tax));
            }
            const auto oa = oracle::evaluate_setting(pa, ga, tax.num_actors());
            const auto oc = oracle::evaluate_setting(pc, gc, tax.num_actions());
            const auto oj = oracle::evaluate_setting(pj, gj, tax.num_pairs());
            CHECK(r.actor.global_acc == oa.global_acc);
            CHECK(r.actor.mean_class_acc == oa.mean_class_acc);
            CHECK(r.actor.mean_class_iou == oa.mean_class_iou);
            CHECK(r.action.global_acc == oc.global_acc);
            CHECK(r.action.mean_class_acc == oc.mean_class_acc);
            CHECK(r.action.mean_class_iou == oc.mean_class_iou);
            CHECK(r.joint.global_acc == oj.global_acc);
            CHECK(r.joint.mean_class_acc == oj.mean_class_acc);
            CHECK(r.joint.mean_class_iou == oj.mean_class_iou);
        }
    }
    SECTION("two frames equal their vertical concatenation") {
        const auto gts = random_eval_dataset(rng, tax, 1);
        // Build a second frame with the same width.
        auto gts2 = gts;
        gts2[0] = gts[0];
        const auto preds = random_predictions(rng, tax, gts);
        auto preds2 = random_predictions(rng, tax, gts2);

        std::vector<FrameSample> both = {gts[0], gts2[0]};
        std::vector<FramePrediction> both_preds = {preds[0], preds2[0]};

        auto concat_label = [](const LabelMap& a, const LabelMap& b) {
            LabelMap m;
            m.height = a.height + b.height;
            m.width = a.width;
            m.labels = a.labels;
            m.labels.insert(m.labels.end(), b.labels.begin(), b.labels.end());
            return m;
        };
        FrameSample merged;
        merged.appearance = Tensor<float>(
            {static_cast<std::size_t>(gts[0].gt_actor.height * 2),
             static_cast<std::size_t>(gts[0].gt_actor.width), 1});
        merged.motion = merged.appearance;
        merged.gt_actor = concat_label(gts[0].gt_actor, gts2[0].gt_actor);
        merged.gt_action = concat_label(gts[0].gt_action, gts2[0].gt_action);
        merged.regions.frame_width = gts[0].gt_actor.width;
        merged.regions.frame_height = merged.gt_actor.height;
        FramePrediction merged_pred;
        merged_pred.actor = concat_label(preds[0].actor, preds2[0].actor);
        merged_pred.action = concat_label(preds[0].action, preds2[0].action);
        merged_pred.joint = concat_label(preds[0].joint, preds2[0].joint);

        const MetricsReport split = evaluate_all(both_preds, both, tax);
        const MetricsReport joined = evaluate_all({merged_pred}, {merged}, tax);
        CHECK(split == joined);
    }
    SECTION("metrics are invariant under consistent class permutation") {
        // Swap two actor classes everywhere (GT, prediction, taxonomy names).
        const auto gts = random_eval_dataset(rng, tax, 3);
        const auto preds = random_predictions(rng, tax, gts);
        const MetricsReport before = evaluate_all(preds, gts, tax);

        auto swap_actor = [](std::uint16_t v) -> std::uint16_t {
            if (v == 1) return 2;
            if (v == 2) return 1;
            return v;
        };
        auto gts_p = gts;
        auto preds_p = preds;
        for (auto& s : gts_p)
            for (auto& v : s.gt_actor.labels) v = swap_actor(v);
        for (auto& p : preds_p)
            for (auto& v : p.actor.labels) v = swap_actor(v);
        // Joint labels permute through the pair index mapping.
        std::vector<std::uint16_t> joint_map(static_cast<std::size_t>(tax.num_pairs()));
        std::vector<std::pair<int, int>> perm_pairs;
        for (const auto& [a, c] : tax.valid_pairs())
            perm_pairs.emplace_back(swap_actor(static_cast<std::uint16_t>(a)), c);
        const Taxonomy tax_p({"background", "rounder", "blocky", "stripe"}, tax.action_names(),
                             perm_pairs, 0, 0);
        for (int q = 0; q < tax.num_pairs(); ++q)
            joint_map[static_cast<std::size_t>(q)] = static_cast<std::uint16_t>(q);
        for (auto& p : preds_p)
            for (auto& v : p.joint.labels) v = joint_map[v];

        const MetricsReport after = evaluate_all(preds_p, gts_p, tax_p);
        // Class means sum in permuted order, so equality holds to rounding.
        CHECK(after.actor.global_acc == before.actor.global_acc);
        CHECK(*after.actor.mean_class_acc ==
              Catch::Approx(*before.actor.mean_class_acc).margin(1e-12));
        CHECK(*after.actor.mean_class_iou ==
              Catch::Approx(*before.actor.mean_class_iou).margin(1e-12));
        CHECK(after.joint.global_acc == before.joint.global_acc);
    }
    SECTION("non-boundary metrics on a constant-GT frame equal the unrestricted ones") {
        FrameSample s;
        s.appearance = Tensor<float>({4, 4, 1});
        s.motion = s.appearance;
        s.gt_actor = LabelMap::filled(4, 4, 1);
        s.gt_action = LabelMap::filled(4, 4, 1);
        s.regions.frame_width = 4;
        s.regions.frame_height = 4;
        FramePrediction p;
        p.actor = LabelMap::filled(4, 4, 1);
        p.actor.at(0, 0) = 2;
        p.action = LabelMap::filled(4, 4, 1);
        p.joint = LabelMap::filled(4, 4, static_cast<std::uint16_t>(
                                             *tax.pair_index(1, 1)));
        EvalOptions opt;
        opt.non_boundary = true;
        opt.radius = 7;
        const MetricsReport r = evaluate_all({p}, {s}, tax, opt);
        CHECK(r.actor.nb_global_acc == r.actor.global_acc);
        CHECK(r.actor.nb_mean_class_acc == r.actor.mean_class_acc);
        CHECK(r.actor.nb_mean_class_iou == r.actor.mean_class_iou);
    }
    SECTION("frame count mismatch is an error") {
        const auto gts = random_eval_dataset(rng, tax, 2);
        CHECK_THROWS_AS(evaluate_all({}, gts, tax), std::invalid_argument);
    }
    SECTION("GT pairs outside valid_pairs are a data error") {
        auto gts = random_eval_dataset(rng, tax, 1);
        gts[0].gt_actor.at(0, 0) = 1; // real actor
        gts[0].gt_action.at(0, 0) = 0; // "none" -> invalid pair (1, 0)
        const auto preds = random_predictions(rng, tax, gts);
        CHECK_THROWS_AS(evaluate_all(preds, gts, tax), std::invalid_argument);
    }
}

TEST_CASE("metrics CSV round-trips losslessly") {
    const Taxonomy tax = default_synth_taxonomy();
    Rng rng(2024);
    const auto gts = random_eval_dataset(rng, tax, 3);
    const auto preds = random_predictions(rng, tax, gts);
    EvalOptions opt;
    opt.non_boundary = true;
    const MetricsReport report = evaluate_all(preds, gts, tax, opt);

    std::ostringstream main_csv, cat_csv;
    write_metrics_csv(report, main_csv);
    write_per_category_csv(report, cat_csv);
    std::istringstream main_in(main_csv.str()), cat_in(cat_csv.str());
    const MetricsReport parsed = read_metrics_csv(main_in, &cat_in);
    CHECK(parsed == report);
}
