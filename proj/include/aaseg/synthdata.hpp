#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "aaseg/rng.hpp"
#include "aaseg/taxonomy.hpp"
#include "aaseg/tensor.hpp"
#include "aaseg/types.hpp"

namespace aaseg {

/// Small taxonomy for generated scenes: 3 real actors + background, 4 real
/// actions + "none"; every real actor can perform every real action.
inline Taxonomy default_synth_taxonomy() {
    std::vector<std::string> actors = {"background", "blocky", "rounder", "stripe"};
    std::vector<std::string> actions = {"none", "drift_east", "drift_north", "drift_west",
                                        "drift_south"};
    std::vector<std::pair<int, int>> pairs = {{0, 0}};
    for (int a = 1; a < 4; ++a)
        for (int c = 1; c < 5; ++c) pairs.emplace_back(a, c);
    return Taxonomy(std::move(actors), std::move(actions), std::move(pairs), 0, 0);
}

enum class ShapeKind { Rectangle, Ellipse };

struct SceneSpec {
    int height = 32;
    int width = 32;
    int min_actors = 1;
    int max_actors = 3;
    std::vector<ShapeKind> shapes = {ShapeKind::Rectangle, ShapeKind::Ellipse};
    int min_size = 8;  // shape bbox side, pixels
    int max_size = 14;
    double part_fraction = 0.25; // fraction of the body carrying the motion cue
    double noise_sigma = 0.05;   // uniform channel noise amplitude
    int appearance_channels = 3;
    int motion_channels = 2;
    bool allow_overlap = false;
    Taxonomy taxonomy = default_synth_taxonomy();

    void validate() const {
        if (height < 16 || width < 16)
            throw std::invalid_argument("SceneSpec: frame must be at least 16x16");
        if (!(part_fraction > 0.0 && part_fraction < 1.0))
            throw std::invalid_argument("SceneSpec: part_fraction must be in (0,1)");
        if (min_actors < 0 || max_actors < min_actors)
            throw std::invalid_argument("SceneSpec: bad actor count range");
        if (min_size < 2 || max_size < min_size || max_size > std::min(height, width))
            throw std::invalid_argument("SceneSpec: bad size range");
        if (noise_sigma < 0) throw std::invalid_argument("SceneSpec: negative noise amplitude");
        if (shapes.empty()) throw std::invalid_argument("SceneSpec: empty shape vocabulary");
        if (appearance_channels < 2 || motion_channels < 2)
            throw std::invalid_argument("SceneSpec: need at least 2 channels per stream");
    }
};

/// Pairwise-distinct class signatures laid out on the unit circle; channel 2
/// onward of the appearance signature carries a constant presence cue.
inline std::vector<float> actor_signature(int actor_class, const Taxonomy& taxonomy,
                                          int channels) {
    const int real = taxonomy.num_actors() - 1;
    const double angle =
        2.0 * std::numbers::pi * static_cast<double>(actor_class - 1) / std::max(real, 1);
    std::vector<float> sig(static_cast<std::size_t>(channels), 1.0f);
    sig[0] = static_cast<float>(std::cos(angle));
    sig[1] = static_cast<float>(std::sin(angle));
    return sig;
}

inline std::vector<float> action_signature(int action_class, const Taxonomy& taxonomy,
                                           int channels) {
    const int real = taxonomy.num_actions() - 1;
    const double angle =
        2.0 * std::numbers::pi * static_cast<double>(action_class - 1) / std::max(real, 1);
    std::vector<float> sig(static_cast<std::size_t>(channels), 0.0f);
    sig[0] = static_cast<float>(std::cos(angle));
    sig[1] = static_cast<float>(std::sin(angle));
    return sig;
}

namespace detail {
struct PlacedShape {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    ShapeKind kind = ShapeKind::Rectangle;
    int actor_class = 0;
    int action_class = 0;

    bool covers(int x, int y) const {
        if (x < x0 || x >= x0 + w || y < y0 || y >= y0 + h) return false;
        if (kind == ShapeKind::Rectangle) return true;
        const double cx = x0 + w / 2.0, cy = y0 + h / 2.0;
        const double nx = (x + 0.5 - cx) / (w / 2.0), ny = (y + 0.5 - cy) / (h / 2.0);
        return nx * nx + ny * ny <= 1.0;
    }
};

inline bool boxes_overlap(const PlacedShape& a, const PlacedShape& b) {
    return a.x0 < b.x0 + b.w && b.x0 < a.x0 + a.w && a.y0 < b.y0 + b.h && b.y0 < a.y0 + a.h;
}
} // namespace detail

/// Deterministic scene: non-overlapping shapes whose appearance channels
/// encode the actor class everywhere on the body, while the action class is
/// visible only in the motion channels of a bottom sub-part covering roughly
/// part_fraction of the body. Ground truth labels cover whole shapes, so a
/// per-pixel classifier sees actionless motion evidence on most of each body.
inline FrameSample generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const int h = spec.height, w = spec.width;

    const int count = static_cast<int>(rng.uniform_int(spec.min_actors, spec.max_actors));
    std::vector<detail::PlacedShape> shapes;
    const std::vector<std::pair<int, int>>& pairs = spec.taxonomy.valid_pairs();
    std::vector<std::pair<int, int>> real_pairs;
    for (const auto& p : pairs)
        if (p.first != spec.taxonomy.background_actor() &&
            p.second != spec.taxonomy.background_action())
            real_pairs.push_back(p);
    if (count > 0 && real_pairs.empty())
        throw std::invalid_argument("generate_scene: taxonomy has no non-background pairs");

    for (int i = 0; i < count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            detail::PlacedShape s;
            s.w = static_cast<int>(rng.uniform_int(spec.min_size, spec.max_size));
            s.h = static_cast<int>(rng.uniform_int(spec.min_size, spec.max_size));
            s.x0 = static_cast<int>(rng.uniform_int(0, w - s.w));
            s.y0 = static_cast<int>(rng.uniform_int(0, h - s.h));
            s.kind = spec.shapes[rng.index(spec.shapes.size())];
            const auto& pair = real_pairs[rng.index(real_pairs.size())];
            s.actor_class = pair.first;
            s.action_class = pair.second;
            bool ok = true;
            if (!spec.allow_overlap)
                for (const auto& other : shapes)
                    if (detail::boxes_overlap(s, other)) {
                        ok = false;
                        break;
                    }
            if (ok) {
                shapes.push_back(s);
                placed = true;
            }
        }
        if (!placed)
            throw std::runtime_error("generate_scene: could not place shape " + std::to_string(i) +
                                     " without overlap; use fewer or smaller actors");
    }

    FrameSample sample;
    sample.appearance = Tensor<float>({static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                                       static_cast<std::size_t>(spec.appearance_channels)});
    sample.motion = Tensor<float>({static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                                   static_cast<std::size_t>(spec.motion_channels)});
    sample.gt_actor = LabelMap::filled(h, w, static_cast<std::uint16_t>(spec.taxonomy.background_actor()));
    sample.gt_action =
        LabelMap::filled(h, w, static_cast<std::uint16_t>(spec.taxonomy.background_action()));
    sample.regions.frame_width = w;
    sample.regions.frame_height = h;

    // Bounded channel noise everywhere; |noise| <= sigma by construction.
    for (std::size_t i = 0; i < sample.appearance.size(); ++i)
        sample.appearance[i] = static_cast<float>(rng.uniform(-spec.noise_sigma, spec.noise_sigma));
    for (std::size_t i = 0; i < sample.motion.size(); ++i)
        sample.motion[i] = static_cast<float>(rng.uniform(-spec.noise_sigma, spec.noise_sigma));

    // Later shapes paint over earlier ones (only relevant with allow_overlap).
    for (const auto& s : shapes) {
        const auto app_sig = actor_signature(s.actor_class, spec.taxonomy, spec.appearance_channels);
        const auto mot_sig = action_signature(s.action_class, spec.taxonomy, spec.motion_channels);

        std::vector<std::pair<int, int>> body;
        for (int y = s.y0; y < s.y0 + s.h; ++y)
            for (int x = s.x0; x < s.x0 + s.w; ++x)
                if (s.covers(x, y)) body.emplace_back(y, x);
        if (body.empty()) continue;

        // Bottom rows form the motion-cue part, ~part_fraction of the body.
        const std::size_t part_target = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(spec.part_fraction * body.size())));
        int part_row_start = s.y0 + s.h; // part = rows >= part_row_start
        {
            std::size_t acc = 0;
            for (int y = s.y0 + s.h - 1; y >= s.y0 && acc < part_target; --y) {
                for (const auto& [py, px] : body)
                    if (py == y) ++acc;
                part_row_start = y;
            }
        }

        for (const auto& [y, x] : body) {
            sample.gt_actor.at(y, x) = static_cast<std::uint16_t>(s.actor_class);
            sample.gt_action.at(y, x) = static_cast<std::uint16_t>(s.action_class);
            for (int c = 0; c < spec.appearance_channels; ++c)
                sample.appearance(static_cast<std::size_t>(y), static_cast<std::size_t>(x),
                                  static_cast<std::size_t>(c)) =
                    app_sig[static_cast<std::size_t>(c)] +
                    static_cast<float>(rng.uniform(-spec.noise_sigma, spec.noise_sigma));
            if (y >= part_row_start)
                for (int c = 0; c < spec.motion_channels; ++c)
                    sample.motion(static_cast<std::size_t>(y), static_cast<std::size_t>(x),
                                  static_cast<std::size_t>(c)) =
                        mot_sig[static_cast<std::size_t>(c)] +
                        static_cast<float>(rng.uniform(-spec.noise_sigma, spec.noise_sigma));
        }
    }

    // Exact binary masks with tight bboxes; GT z-order does not trim masks.
    for (const auto& s : shapes) {
        int minx = w, miny = h, maxx = -1, maxy = -1;
        for (int y = s.y0; y < s.y0 + s.h; ++y)
            for (int x = s.x0; x < s.x0 + s.w; ++x)
                if (s.covers(x, y)) {
                    minx = std::min(minx, x);
                    miny = std::min(miny, y);
                    maxx = std::max(maxx, x);
                    maxy = std::max(maxy, y);
                }
        if (maxx < 0) continue;
        RegionMask region;
        region.bbox = {static_cast<double>(minx), static_cast<double>(miny),
                       static_cast<double>(maxx + 1), static_cast<double>(maxy + 1)};
        region.mask = Tensor<float>({static_cast<std::size_t>(maxy - miny + 1),
                                     static_cast<std::size_t>(maxx - minx + 1)});
        for (int y = miny; y <= maxy; ++y)
            for (int x = minx; x <= maxx; ++x)
                if (s.covers(x, y))
                    region.mask(static_cast<std::size_t>(y - miny),
                                static_cast<std::size_t>(x - minx)) = 1.0f;
        sample.regions.regions.push_back(std::move(region));
    }
    return sample;
}

/// Degradation schedule for region masks, mimicking lower-quality proposals:
/// resolution loss, morphology, box jitter, drops, and spurious clutter
/// regions. The all-zero spec is the identity.
struct CorruptionSpec {
    int mask_downsample = 1;   // factor >= 1; 1 = off
    int erode_radius = 0;      // grayscale min-filter radius
    int dilate_radius = 0;     // grayscale max-filter radius
    double bbox_jitter = 0.0;  // uniform corner perturbation amplitude, pixels
    double drop_prob = 0.0;    // independent region removal probability
    double spurious_rate = 0.0; // expected clutter regions per (N+1) trials
    std::uint64_t seed = 0;

    void validate() const {
        if (mask_downsample < 1) throw std::invalid_argument("CorruptionSpec: downsample < 1");
        if (erode_radius < 0 || dilate_radius < 0 || bbox_jitter < 0)
            throw std::invalid_argument("CorruptionSpec: negative amplitude");
        if (drop_prob < 0 || drop_prob > 1 || spurious_rate < 0 || spurious_rate > 1)
            throw std::invalid_argument("CorruptionSpec: rates must be in [0,1]");
    }

    bool is_identity() const {
        return mask_downsample == 1 && erode_radius == 0 && dilate_radius == 0 &&
               bbox_jitter == 0.0 && drop_prob == 0.0 && spurious_rate == 0.0;
    }
};

namespace detail {
inline Tensor<float> downsample_upsample(const Tensor<float>& mask, int factor) {
    const std::size_t h = mask.dim(0), w = mask.dim(1);
    const std::size_t dh = std::max<std::size_t>(1, h / factor);
    const std::size_t dw = std::max<std::size_t>(1, w / factor);
    Tensor<float> low({dh, dw});
    for (std::size_t y = 0; y < dh; ++y)
        for (std::size_t x = 0; x < dw; ++x) {
            const std::size_t y0 = y * h / dh, y1 = std::max(y0 + 1, (y + 1) * h / dh);
            const std::size_t x0 = x * w / dw, x1 = std::max(x0 + 1, (x + 1) * w / dw);
            double acc = 0.0;
            for (std::size_t yy = y0; yy < y1; ++yy)
                for (std::size_t xx = x0; xx < x1; ++xx) acc += mask(yy, xx);
            low(y, x) = static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
        }
    Tensor<float> out({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out(y, x) = low(y * dh / h, x * dw / w);
    return out;
}

/// Grayscale morphology with the outside of the grid treated as 0.
inline Tensor<float> morph(const Tensor<float>& mask, int radius, bool erode) {
    const auto h = static_cast<std::ptrdiff_t>(mask.dim(0));
    const auto w = static_cast<std::ptrdiff_t>(mask.dim(1));
    Tensor<float> out(mask.shape());
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            float v = erode ? 1.0f : 0.0f;
            for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy)
                for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
                    const std::ptrdiff_t ny = y + dy, nx = x + dx;
                    const float nv = (ny < 0 || ny >= h || nx < 0 || nx >= w)
                                         ? 0.0f
                                         : mask(static_cast<std::size_t>(ny),
                                                static_cast<std::size_t>(nx));
                    v = erode ? std::min(v, nv) : std::max(v, nv);
                }
            out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = v;
        }
    return out;
}
} // namespace detail

inline RegionSet corrupt_masks(const RegionSet& regions, const CorruptionSpec& spec) {
    spec.validate();
    RegionSet out;
    out.frame_width = regions.frame_width;
    out.frame_height = regions.frame_height;
    if (spec.is_identity()) {
        out.regions = regions.regions;
        return out;
    }
    Rng rng(spec.seed);
    for (const auto& src : regions.regions) {
        RegionMask r = src;
        if (spec.mask_downsample > 1)
            r.mask = detail::downsample_upsample(r.mask, spec.mask_downsample);
        if (spec.erode_radius > 0) r.mask = detail::morph(r.mask, spec.erode_radius, true);
        if (spec.dilate_radius > 0) r.mask = detail::morph(r.mask, spec.dilate_radius, false);
        if (spec.bbox_jitter > 0) {
            for (int i = 0; i < 4; ++i)
                r.bbox[i] += rng.uniform(-spec.bbox_jitter, spec.bbox_jitter);
            // Keep the box non-degenerate and intersecting the frame.
            if (r.bbox[2] <= r.bbox[0]) r.bbox[2] = r.bbox[0] + 1.0;
            if (r.bbox[3] <= r.bbox[1]) r.bbox[3] = r.bbox[1] + 1.0;
            const double fw = regions.frame_width, fh = regions.frame_height;
            if (r.bbox[0] >= fw) { r.bbox[0] = fw - 1.0; r.bbox[2] = fw; }
            if (r.bbox[2] <= 0.0) { r.bbox[2] = 1.0; r.bbox[0] = 0.0; }
            if (r.bbox[1] >= fh) { r.bbox[1] = fh - 1.0; r.bbox[3] = fh; }
            if (r.bbox[3] <= 0.0) { r.bbox[3] = 1.0; r.bbox[1] = 0.0; }
        }
        const bool drop = spec.drop_prob > 0 && rng.bernoulli(spec.drop_prob);
        if (!drop) out.regions.push_back(std::move(r));
    }
    if (spec.spurious_rate > 0) {
        const std::size_t trials = regions.size() + 1;
        for (std::size_t t = 0; t < trials; ++t) {
            if (!rng.bernoulli(spec.spurious_rate)) continue;
            const int fw = regions.frame_width, fh = regions.frame_height;
            const int bw = static_cast<int>(rng.uniform_int(3, std::max(4, fw / 2)));
            const int bh = static_cast<int>(rng.uniform_int(3, std::max(4, fh / 2)));
            const int x0 = static_cast<int>(rng.uniform_int(0, std::max(0, fw - bw)));
            const int y0 = static_cast<int>(rng.uniform_int(0, std::max(0, fh - bh)));
            RegionMask clutter;
            clutter.bbox = {static_cast<double>(x0), static_cast<double>(y0),
                            static_cast<double>(x0 + bw), static_cast<double>(y0 + bh)};
            clutter.mask = Tensor<float>({static_cast<std::size_t>(bh),
                                          static_cast<std::size_t>(bw)});
            clutter.mask.fill(1.0f);
            out.regions.push_back(std::move(clutter));
        }
    }
    return out;
}

} // namespace aaseg
