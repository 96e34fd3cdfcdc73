#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aaseg/taxonomy.hpp"
#include "aaseg/types.hpp"

namespace aaseg {

/// counts[gt][pred] over evaluated (non-ignored) pixels.
struct ConfusionCounts {
    int num_classes = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionCounts(int k = 0)
        : num_classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}

    std::int64_t& at(int gt, int pred) {
        return counts[static_cast<std::size_t>(gt) * num_classes + pred];
    }
    std::int64_t at(int gt, int pred) const {
        return counts[static_cast<std::size_t>(gt) * num_classes + pred];
    }
    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto v : counts) t += v;
        return t;
    }
    std::int64_t row_total(int gt) const {
        std::int64_t t = 0;
        for (int p = 0; p < num_classes; ++p) t += at(gt, p);
        return t;
    }
    std::int64_t col_total(int pred) const {
        std::int64_t t = 0;
        for (int g = 0; g < num_classes; ++g) t += at(g, pred);
        return t;
    }

    void merge(const ConfusionCounts& other) {
        if (other.num_classes != num_classes)
            throw std::invalid_argument("ConfusionCounts::merge: class count mismatch");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    }
};

/// Exact counting; a pixel is skipped when the GT ignore mask or the extra
/// ignore mask (e.g. a boundary band) marks it.
inline ConfusionCounts confusion_counts(const LabelMap& pred, const LabelMap& gt, int num_classes,
                                        const std::vector<std::uint8_t>* extra_ignore = nullptr) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("confusion_counts: shapes disagree");
    if (extra_ignore && extra_ignore->size() != gt.labels.size())
        throw std::invalid_argument("confusion_counts: extra ignore mask length mismatch");
    ConfusionCounts c(num_classes);
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            const std::size_t j = static_cast<std::size_t>(y) * gt.width + x;
            if (gt.ignored(y, x)) continue;
            if (extra_ignore && (*extra_ignore)[j]) continue;
            const int g = gt.at(y, x), p = pred.at(y, x);
            if (g >= num_classes || p >= num_classes)
                throw std::invalid_argument("confusion_counts: label out of range (" +
                                            std::to_string(g) + "," + std::to_string(p) + ")");
            ++c.at(g, p);
        }
    return c;
}

inline std::optional<double> global_accuracy(const ConfusionCounts& c) {
    const std::int64_t total = c.total();
    if (total == 0) return std::nullopt;
    std::int64_t diag = 0;
    for (int k = 0; k < c.num_classes; ++k) diag += c.at(k, k);
    return static_cast<double>(diag) / static_cast<double>(total);
}

/// Per-class recall, defined only for classes present in the GT.
inline std::optional<double> class_recall(const ConfusionCounts& c, int k) {
    const std::int64_t row = c.row_total(k);
    if (row == 0) return std::nullopt;
    return static_cast<double>(c.at(k, k)) / static_cast<double>(row);
}

/// Per-class intersection over union, defined only when the union is nonzero.
inline std::optional<double> class_iou(const ConfusionCounts& c, int k) {
    const std::int64_t tp = c.at(k, k);
    const std::int64_t uni = c.row_total(k) + c.col_total(k) - tp;
    if (uni == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(uni);
}

inline std::optional<double> mean_class_accuracy(const ConfusionCounts& c) {
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < c.num_classes; ++k)
        if (auto r = class_recall(c, k)) {
            sum += *r;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

inline std::optional<double> mean_class_iou(const ConfusionCounts& c) {
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < c.num_classes; ++k)
        if (auto r = class_iou(c, k)) {
            sum += *r;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

/// Boundary band of a GT map: a pixel is a boundary pixel when any 4-neighbor
/// carries a different label; the band is everything within Chebyshev
/// distance <= radius of a boundary pixel.
inline std::vector<std::uint8_t> boundary_band(const LabelMap& gt, int radius) {
    if (radius < 0) throw std::invalid_argument("boundary_band: radius must be >= 0");
    const int h = gt.height, w = gt.width;
    std::vector<std::uint8_t> band(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::uint16_t v = gt.at(y, x);
            const bool edge = (x > 0 && gt.at(y, x - 1) != v) ||
                              (x + 1 < w && gt.at(y, x + 1) != v) ||
                              (y > 0 && gt.at(y - 1, x) != v) ||
                              (y + 1 < h && gt.at(y + 1, x) != v);
            if (edge) band[static_cast<std::size_t>(y) * w + x] = 1;
        }
    // Chebyshev dilation = radius rounds of 3x3 max.
    std::vector<std::uint8_t> next(band.size());
    for (int r = 0; r < radius; ++r) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                std::uint8_t v = 0;
                for (int dy = -1; dy <= 1 && !v; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                        if (band[static_cast<std::size_t>(ny) * w + nx]) {
                            v = 1;
                            break;
                        }
                    }
                next[static_cast<std::size_t>(y) * w + x] = v;
            }
        band.swap(next);
    }
    return band;
}

struct SettingMetrics {
    std::optional<double> global_acc;
    std::optional<double> mean_class_acc;
    std::optional<double> mean_class_iou;
    std::optional<double> nb_global_acc; // non-boundary variants, when requested
    std::optional<double> nb_mean_class_acc;
    std::optional<double> nb_mean_class_iou;

    bool operator==(const SettingMetrics&) const = default;
};

struct MetricsReport {
    SettingMetrics actor;
    SettingMetrics action;
    SettingMetrics joint;
    std::vector<std::string> category_names;         // joint classes, dense pair order
    std::vector<std::optional<double>> per_category; // per-category accuracy (recall)
    bool non_boundary = false;

    bool operator==(const MetricsReport&) const = default;
};

struct EvalOptions {
    bool non_boundary = false;
    int radius = 7; // Chebyshev radius; 7 gives the 15-pixel-wide band
};

/// GT joint label map via the taxonomy's dense pair index. A GT pair outside
/// valid_pairs is a data error and is reported as such.
inline LabelMap joint_ground_truth(const LabelMap& gt_actor, const LabelMap& gt_action,
                                   const Taxonomy& taxonomy) {
    LabelMap joint;
    joint.height = gt_actor.height;
    joint.width = gt_actor.width;
    joint.labels.resize(gt_actor.labels.size());
    joint.ignore = gt_actor.ignore;
    if (!gt_action.ignore.empty()) {
        if (joint.ignore.empty()) joint.ignore = gt_action.ignore;
        else
            for (std::size_t i = 0; i < joint.ignore.size(); ++i)
                joint.ignore[i] = joint.ignore[i] || gt_action.ignore[i];
    }
    for (int y = 0; y < joint.height; ++y)
        for (int x = 0; x < joint.width; ++x) {
            if (joint.ignore.empty() ? false : joint.ignore[static_cast<std::size_t>(y) * joint.width + x]) {
                joint.at(y, x) = 0;
                continue;
            }
            const auto idx = taxonomy.pair_index(gt_actor.at(y, x), gt_action.at(y, x));
            if (!idx)
                throw std::invalid_argument("joint_ground_truth: GT pair (" +
                                            std::to_string(gt_actor.at(y, x)) + "," +
                                            std::to_string(gt_action.at(y, x)) +
                                            ") is not a valid actor-action pair");
            joint.at(y, x) = static_cast<std::uint16_t>(*idx);
        }
    return joint;
}

/// Dataset-level evaluation: confusion counts accumulate over all frames and
/// each metric is computed once per setting.
inline MetricsReport evaluate_all(const std::vector<FramePrediction>& predictions,
                                  const std::vector<FrameSample>& ground_truths,
                                  const Taxonomy& taxonomy, const EvalOptions& options = {}) {
    if (predictions.size() != ground_truths.size())
        throw std::invalid_argument("evaluate_all: frame count mismatch (" +
                                    std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(ground_truths.size()) + " ground truths)");
    ConfusionCounts actor(taxonomy.num_actors());
    ConfusionCounts action(taxonomy.num_actions());
    ConfusionCounts joint(taxonomy.num_pairs());
    ConfusionCounts nb_actor(taxonomy.num_actors());
    ConfusionCounts nb_action(taxonomy.num_actions());
    ConfusionCounts nb_joint(taxonomy.num_pairs());

    for (std::size_t f = 0; f < predictions.size(); ++f) {
        const FrameSample& gt = ground_truths[f];
        const FramePrediction& pred = predictions[f];
        const LabelMap gt_joint = joint_ground_truth(gt.gt_actor, gt.gt_action, taxonomy);
        actor.merge(confusion_counts(pred.actor, gt.gt_actor, taxonomy.num_actors()));
        action.merge(confusion_counts(pred.action, gt.gt_action, taxonomy.num_actions()));
        joint.merge(confusion_counts(pred.joint, gt_joint, taxonomy.num_pairs()));
        if (options.non_boundary) {
            const auto band = boundary_band(gt_joint, options.radius);
            nb_actor.merge(confusion_counts(pred.actor, gt.gt_actor, taxonomy.num_actors(), &band));
            nb_action.merge(
                confusion_counts(pred.action, gt.gt_action, taxonomy.num_actions(), &band));
            nb_joint.merge(confusion_counts(pred.joint, gt_joint, taxonomy.num_pairs(), &band));
        }
    }

    auto fill = [&](const ConfusionCounts& c, const ConfusionCounts& nb, SettingMetrics& out) {
        out.global_acc = global_accuracy(c);
        out.mean_class_acc = mean_class_accuracy(c);
        out.mean_class_iou = mean_class_iou(c);
        if (options.non_boundary) {
            out.nb_global_acc = global_accuracy(nb);
            out.nb_mean_class_acc = mean_class_accuracy(nb);
            out.nb_mean_class_iou = mean_class_iou(nb);
        }
    };
    MetricsReport report;
    report.non_boundary = options.non_boundary;
    fill(actor, nb_actor, report.actor);
    fill(action, nb_action, report.action);
    fill(joint, nb_joint, report.joint);
    for (int k = 0; k < taxonomy.num_pairs(); ++k) {
        report.category_names.push_back(taxonomy.pair_name(k));
        report.per_category.push_back(class_recall(joint, k));
    }
    return report;
}

namespace detail {
inline std::string metric_value(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return buf;
}

inline std::optional<double> parse_metric(const std::string& s) {
    if (s == "undefined") return std::nullopt;
    return std::stod(s);
}
} // namespace detail

/// One row per (setting, metric, variant).
inline void write_metrics_csv(const MetricsReport& report, std::ostream& os) {
    os << "setting,metric,variant,value\n";
    auto emit = [&](const char* setting, const SettingMetrics& m) {
        os << setting << ",global_accuracy,all," << detail::metric_value(m.global_acc) << "\n";
        os << setting << ",mean_class_accuracy,all," << detail::metric_value(m.mean_class_acc)
           << "\n";
        os << setting << ",mean_class_iou,all," << detail::metric_value(m.mean_class_iou) << "\n";
        if (report.non_boundary) {
            os << setting << ",global_accuracy,non_boundary,"
               << detail::metric_value(m.nb_global_acc) << "\n";
            os << setting << ",mean_class_accuracy,non_boundary,"
               << detail::metric_value(m.nb_mean_class_acc) << "\n";
            os << setting << ",mean_class_iou,non_boundary,"
               << detail::metric_value(m.nb_mean_class_iou) << "\n";
        }
    };
    emit("actor", report.actor);
    emit("action", report.action);
    emit("actor-action", report.joint);
}

/// Category names then per-category accuracy, mirroring a per-category table
/// row for the joint setting.
inline void write_per_category_csv(const MetricsReport& report, std::ostream& os) {
    os << "category";
    for (const auto& name : report.category_names) os << "," << name;
    os << "\naccuracy";
    for (const auto& v : report.per_category) os << "," << detail::metric_value(v);
    os << "\n";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r')
            cur.push_back(ch);
    }
    out.push_back(cur);
    return out;
}

/// Inverse of write_metrics_csv + write_per_category_csv.
inline MetricsReport read_metrics_csv(std::istream& metrics, std::istream* per_category = nullptr) {
    MetricsReport report;
    std::string line;
    if (!std::getline(metrics, line) || split_csv_line(line) !=
        std::vector<std::string>{"setting", "metric", "variant", "value"})
        throw std::runtime_error("read_metrics_csv: bad header");
    while (std::getline(metrics, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw std::runtime_error("read_metrics_csv: bad row: " + line);
        SettingMetrics* m = nullptr;
        if (f[0] == "actor") m = &report.actor;
        else if (f[0] == "action") m = &report.action;
        else if (f[0] == "actor-action") m = &report.joint;
        else throw std::runtime_error("read_metrics_csv: unknown setting " + f[0]);
        const auto v = detail::parse_metric(f[3]);
        const bool nb = f[2] == "non_boundary";
        if (nb) report.non_boundary = true;
        if (f[1] == "global_accuracy") (nb ? m->nb_global_acc : m->global_acc) = v;
        else if (f[1] == "mean_class_accuracy") (nb ? m->nb_mean_class_acc : m->mean_class_acc) = v;
        else if (f[1] == "mean_class_iou") (nb ? m->nb_mean_class_iou : m->mean_class_iou) = v;
        else throw std::runtime_error("read_metrics_csv: unknown metric " + f[1]);
    }
    if (per_category) {
        std::string names, values;
        if (!std::getline(*per_category, names) || !std::getline(*per_category, values))
            throw std::runtime_error("read_metrics_csv: bad per-category CSV");
        const auto nf = split_csv_line(names);
        const auto vf = split_csv_line(values);
        if (nf.size() != vf.size() || nf.empty() || nf[0] != "category" || vf[0] != "accuracy")
            throw std::runtime_error("read_metrics_csv: bad per-category CSV layout");
        for (std::size_t i = 1; i < nf.size(); ++i) {
            report.category_names.push_back(nf[i]);
            report.per_category.push_back(detail::parse_metric(vf[i]));
        }
    }
    return report;
}

} // namespace aaseg
