#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aaseg/taxonomy.hpp"
#include "aaseg/tensor.hpp"

namespace aaseg {

/// One instance proposal: a bounding box in frame pixel coordinates plus a
/// probability mask on the box's own grid.
struct RegionMask {
    std::array<double, 4> bbox{}; // x0, y0, x1, y1
    Tensor<float> mask;           // (H_b, W_b), values in [0,1]
};

struct RegionSet {
    std::vector<RegionMask> regions;
    int frame_width = 0;
    int frame_height = 0;

    std::size_t size() const { return regions.size(); }
};

/// Per-pixel class indices with an optional ignore mask (empty = none).
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint16_t> labels;
    std::vector<std::uint8_t> ignore;

    static LabelMap filled(int height, int width, std::uint16_t value) {
        LabelMap m;
        m.height = height;
        m.width = width;
        m.labels.assign(static_cast<std::size_t>(height) * width, value);
        return m;
    }

    std::uint16_t at(int y, int x) const {
        return labels[static_cast<std::size_t>(y) * width + x];
    }
    std::uint16_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    bool ignored(int y, int x) const {
        return !ignore.empty() && ignore[static_cast<std::size_t>(y) * width + x] != 0;
    }

    bool operator==(const LabelMap& other) const {
        return height == other.height && width == other.width && labels == other.labels &&
               ignore == other.ignore;
    }
};

struct FrameSample {
    Tensor<float> appearance; // (H, W, C_a)
    Tensor<float> motion;     // (H, W, C_m)
    LabelMap gt_actor;
    LabelMap gt_action;
    RegionSet regions;

    int height() const { return static_cast<int>(appearance.dim(0)); }
    int width() const { return static_cast<int>(appearance.dim(1)); }
};

/// Predicted label maps for one frame; joint labels are dense valid-pair
/// indices.
struct FramePrediction {
    LabelMap actor;
    LabelMap action;
    LabelMap joint;
};

/// Probability that frame pixel (x, y) belongs to the region's mask.
/// The bbox is half-open; pixels outside it score 0. Inside, the pixel is
/// mapped onto the mask grid by nearest-cell lookup (masks carry no gradient,
/// so the lookup is deliberately non-interpolating).
inline float mask_at_pixel(const RegionMask& region, int x, int y, int frame_width,
                           int frame_height) {
    (void)frame_width;
    (void)frame_height;
    const double x0 = region.bbox[0], y0 = region.bbox[1];
    const double x1 = region.bbox[2], y1 = region.bbox[3];
    const double px = static_cast<double>(x), py = static_cast<double>(y);
    if (px < x0 || px >= x1 || py < y0 || py >= y1) return 0.0f;
    const auto hb = static_cast<std::ptrdiff_t>(region.mask.dim(0));
    const auto wb = static_cast<std::ptrdiff_t>(region.mask.dim(1));
    auto cell = [](double p, double lo, double hi, std::ptrdiff_t n) {
        auto c = static_cast<std::ptrdiff_t>(std::floor((p - lo) / (hi - lo) * n));
        return std::clamp<std::ptrdiff_t>(c, 0, n - 1);
    };
    return region.mask(static_cast<std::size_t>(cell(py, y0, y1, hb)),
                       static_cast<std::size_t>(cell(px, x0, x1, wb)));
}

namespace detail {
inline void check_label_map(const LabelMap& map, int height, int width, int num_classes,
                            const std::string& name, std::vector<std::string>& out) {
    if (map.height != height || map.width != width) {
        out.push_back(name + ": spatial dims " + std::to_string(map.height) + "x" +
                      std::to_string(map.width) + " do not match frame " +
                      std::to_string(height) + "x" + std::to_string(width));
        return;
    }
    if (map.labels.size() != static_cast<std::size_t>(height) * width)
        out.push_back(name + ": label array length mismatch");
    if (!map.ignore.empty() && map.ignore.size() != map.labels.size())
        out.push_back(name + ": ignore mask length mismatch");
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            if (map.ignored(y, x)) continue;
            if (map.at(y, x) >= num_classes) {
                out.push_back(name + ": label out of range at (" + std::to_string(x) + "," +
                              std::to_string(y) + "): " + std::to_string(map.at(y, x)) +
                              " >= " + std::to_string(num_classes));
                return;
            }
        }
}
} // namespace detail

/// Reports every invariant violation in the sample; empty result means every
/// downstream operation accepts the sample.
inline std::vector<std::string> validate_frame(const FrameSample& sample,
                                               const Taxonomy& taxonomy) {
    std::vector<std::string> out;
    if (sample.appearance.rank() != 3) {
        out.push_back("appearance: expected rank-3 tensor");
        return out;
    }
    if (sample.motion.rank() != 3) {
        out.push_back("motion: expected rank-3 tensor");
        return out;
    }
    const int height = sample.height();
    const int width = sample.width();
    if (height < 1 || width < 1) out.push_back("frame: empty spatial dims");
    if (sample.motion.dim(0) != static_cast<std::size_t>(height) ||
        sample.motion.dim(1) != static_cast<std::size_t>(width))
        out.push_back("motion: spatial dims do not match appearance");
    if (!sample.appearance.all_finite()) out.push_back("appearance: non-finite value");
    if (!sample.motion.all_finite()) out.push_back("motion: non-finite value");

    detail::check_label_map(sample.gt_actor, height, width, taxonomy.num_actors(), "gt_actor",
                            out);
    detail::check_label_map(sample.gt_action, height, width, taxonomy.num_actions(), "gt_action",
                            out);

    if (sample.regions.frame_width != width || sample.regions.frame_height != height)
        out.push_back("regions: frame dims do not match sample");
    for (std::size_t i = 0; i < sample.regions.size(); ++i) {
        const RegionMask& r = sample.regions.regions[i];
        const std::string name = "region " + std::to_string(i);
        if (!(r.bbox[0] < r.bbox[2]) || !(r.bbox[1] < r.bbox[3])) {
            out.push_back(name + ": degenerate bbox");
            continue;
        }
        if (r.bbox[2] <= 0 || r.bbox[0] >= width || r.bbox[3] <= 0 || r.bbox[1] >= height)
            out.push_back(name + ": bbox does not intersect the frame");
        if (r.mask.rank() != 2 || r.mask.dim(0) == 0 || r.mask.dim(1) == 0) {
            out.push_back(name + ": mask must be a non-empty rank-2 tensor");
            continue;
        }
        for (std::size_t k = 0; k < r.mask.size(); ++k) {
            const float v = r.mask[k];
            if (!(v >= 0.0f && v <= 1.0f)) {
                out.push_back(name + ": mask value out of [0,1]: " + std::to_string(v));
                break;
            }
        }
    }
    return out;
}

} // namespace aaseg
