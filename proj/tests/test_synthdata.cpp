#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aaseg/dataset_io.hpp"
#include "aaseg/synthdata.hpp"
#include "aaseg/types.hpp"

using namespace aaseg;
namespace fs = std::filesystem;

namespace {
bool samples_equal(const FrameSample& a, const FrameSample& b) {
    if (!(a.appearance == b.appearance) || !(a.motion == b.motion)) return false;
    if (!(a.gt_actor == b.gt_actor) || !(a.gt_action == b.gt_action)) return false;
    if (a.regions.size() != b.regions.size()) return false;
    for (std::size_t i = 0; i < a.regions.size(); ++i) {
        if (a.regions.regions[i].bbox != b.regions.regions[i].bbox) return false;
        if (!(a.regions.regions[i].mask == b.regions.regions[i].mask)) return false;
    }
    return true;
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("aaseg_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}
} // namespace

TEST_CASE("scene generation is deterministic") {
    SceneSpec spec;
    const FrameSample a = generate_scene(spec, 42);
    const FrameSample b = generate_scene(spec, 42);
    CHECK(samples_equal(a, b));
    const FrameSample c = generate_scene(spec, 43);
    CHECK_FALSE(samples_equal(a, c));
}

TEST_CASE("zero actors yields an all-background frame") {
    SceneSpec spec;
    spec.min_actors = 0;
    spec.max_actors = 0;
    const FrameSample s = generate_scene(spec, 7);
    CHECK(s.regions.size() == 0);
    for (auto v : s.gt_actor.labels) CHECK(v == spec.taxonomy.background_actor());
    for (auto v : s.gt_action.labels) CHECK(v == spec.taxonomy.background_action());
}

TEST_CASE("generated scenes validate and carry the part-motion phenomenon") {
    SceneSpec spec;
    spec.max_actors = 3;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const FrameSample s = generate_scene(spec, seed);
        CHECK(validate_frame(s, spec.taxonomy).empty());

        for (const auto& region : s.regions.regions) {
            // GT action constant across the exact mask support.
            int action = -1;
            std::size_t part_pixels = 0, body_pixels = 0;
            for (int y = 0; y < s.height(); ++y)
                for (int x = 0; x < s.width(); ++x) {
                    if (mask_at_pixel(region, x, y, s.width(), s.height()) != 1.0f) continue;
                    ++body_pixels;
                    if (action < 0) action = s.gt_action.at(y, x);
                    CHECK(s.gt_action.at(y, x) == action);

                    // Motion is either bounded noise (non-part) or the action
                    // signature plus bounded noise (part).
                    const auto sig =
                        action_signature(action, spec.taxonomy, spec.motion_channels);
                    bool is_noise = true, is_signal = true;
                    for (int c = 0; c < spec.motion_channels; ++c) {
                        const float v = s.motion(static_cast<std::size_t>(y),
                                                 static_cast<std::size_t>(x),
                                                 static_cast<std::size_t>(c));
                        if (std::abs(v) > spec.noise_sigma + 1e-6f) is_noise = false;
                        if (std::abs(v - sig[static_cast<std::size_t>(c)]) >
                            spec.noise_sigma + 1e-6f)
                            is_signal = false;
                    }
                    CHECK((is_noise || is_signal));
                    if (is_signal && !is_noise) ++part_pixels;
                }
            // The part carries the cue on roughly part_fraction of the body.
            REQUIRE(body_pixels > 0);
            CHECK(part_pixels >= 1);
            CHECK(part_pixels < body_pixels);
        }
    }
}

TEST_CASE("overlapping scenes are honored when allowed") {
    SceneSpec spec;
    spec.allow_overlap = true;
    spec.min_actors = 4;
    spec.max_actors = 4;
    const FrameSample s = generate_scene(spec, 3);
    CHECK(s.regions.size() == 4);
    CHECK(validate_frame(s, spec.taxonomy).empty());
}

TEST_CASE("placement failure names the remedy") {
    SceneSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.min_size = 12;
    spec.max_size = 14;
    spec.min_actors = 4;
    spec.max_actors = 4;
    try {
        generate_scene(spec, 1);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("fewer or smaller actors") != std::string::npos);
    }
}

TEST_CASE("mask corruption") {
    SceneSpec spec;
    spec.min_actors = 2;
    spec.max_actors = 3;
    const FrameSample s = generate_scene(spec, 11);
    REQUIRE(s.regions.size() >= 2);

    SECTION("all-zero spec is the identity") {
        const RegionSet out = corrupt_masks(s.regions, CorruptionSpec{});
        REQUIRE(out.size() == s.regions.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out.regions[i].bbox == s.regions.regions[i].bbox);
            CHECK(out.regions[i].mask == s.regions.regions[i].mask);
        }
    }
    SECTION("drop probability one empties the set") {
        CorruptionSpec c;
        c.drop_prob = 1.0;
        c.seed = 5;
        const RegionSet out = corrupt_masks(s.regions, c);
        CHECK(out.size() == 0);
    }
    SECTION("erosion of a solid square leaves the interior") {
        RegionSet rs;
        rs.frame_width = 16;
        rs.frame_height = 16;
        RegionMask r;
        r.bbox = {2, 2, 12, 12};
        r.mask = Tensor<float>({10, 10}, 1.0f);
        rs.regions.push_back(r);
        CorruptionSpec c;
        c.erode_radius = 1;
        const RegionSet out = corrupt_masks(rs, c);
        REQUIRE(out.size() == 1);
        const Tensor<float>& m = out.regions[0].mask;
        for (std::size_t y = 0; y < 10; ++y)
            for (std::size_t x = 0; x < 10; ++x) {
                const bool interior = y >= 1 && y <= 8 && x >= 1 && x <= 8;
                CHECK(m(y, x) == (interior ? 1.0f : 0.0f));
            }
    }
    SECTION("dilation recovers an eroded solid square interior") {
        RegionSet rs;
        rs.frame_width = 16;
        rs.frame_height = 16;
        RegionMask r;
        r.bbox = {2, 2, 12, 12};
        r.mask = Tensor<float>({10, 10}, 0.0f);
        r.mask(5, 5) = 1.0f;
        rs.regions.push_back(r);
        CorruptionSpec c;
        c.dilate_radius = 1;
        const RegionSet out = corrupt_masks(rs, c);
        std::size_t ones = 0;
        for (std::size_t i = 0; i < out.regions[0].mask.size(); ++i)
            if (out.regions[0].mask[i] == 1.0f) ++ones;
        CHECK(ones == 9);
    }
    SECTION("corruption keeps masks in [0,1] and boxes non-degenerate") {
        CorruptionSpec c;
        c.mask_downsample = 3;
        c.erode_radius = 1;
        c.dilate_radius = 1;
        c.bbox_jitter = 5.0;
        c.spurious_rate = 0.8;
        c.seed = 17;
        const RegionSet out = corrupt_masks(s.regions, c);
        for (const auto& region : out.regions) {
            CHECK(region.bbox[0] < region.bbox[2]);
            CHECK(region.bbox[1] < region.bbox[3]);
            for (std::size_t i = 0; i < region.mask.size(); ++i) {
                CHECK(region.mask[i] >= 0.0f);
                CHECK(region.mask[i] <= 1.0f);
            }
        }
    }
    SECTION("corruption is deterministic in the seed") {
        CorruptionSpec c;
        c.bbox_jitter = 2.0;
        c.drop_prob = 0.3;
        c.spurious_rate = 0.5;
        c.seed = 23;
        const RegionSet a = corrupt_masks(s.regions, c);
        const RegionSet b = corrupt_masks(s.regions, c);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.regions[i].bbox == b.regions[i].bbox);
            CHECK(a.regions[i].mask == b.regions[i].mask);
        }
    }
}

TEST_CASE("dataset round-trip is bit-exact") {
    const fs::path dir = temp_dir("roundtrip");
    SceneSpec spec;
    std::vector<FrameSample> samples;
    for (std::uint64_t s = 0; s < 3; ++s) samples.push_back(generate_scene(spec, s));
    write_dataset(samples, spec.taxonomy, dir);
    const Dataset loaded = read_dataset(dir);
    CHECK(loaded.taxonomy == spec.taxonomy);
    REQUIRE(loaded.samples.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        CHECK(samples_equal(loaded.samples[i], samples[i]));

    // Re-writing the loaded dataset reproduces identical bytes.
    const fs::path dir2 = temp_dir("roundtrip2");
    write_dataset(loaded.samples, loaded.taxonomy, dir2);
    for (const auto& entry : fs::directory_iterator(dir)) {
        const fs::path other = dir2 / entry.path().filename();
        REQUIRE(fs::exists(other));
        std::ifstream a(entry.path(), std::ios::binary), b(other, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
}

TEST_CASE("dataset IO failure modes are distinct") {
    const fs::path dir = temp_dir("io_errors");
    SceneSpec spec;
    std::vector<FrameSample> samples = {generate_scene(spec, 1)};
    write_dataset(samples, spec.taxonomy, dir);

    SECTION("missing payload") {
        fs::remove(dir / "frame_00000_motion.f32");
        try {
            read_dataset(dir);
            FAIL("expected an exception");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("missing payload") != std::string::npos);
        }
    }
    SECTION("payload length does not match the declared shape") {
        std::ofstream os(dir / "frame_00000_motion.f32", std::ios::binary | std::ios::trunc);
        const float junk[3] = {1, 2, 3};
        os.write(reinterpret_cast<const char*>(junk), sizeof(junk));
        os.close();
        try {
            read_dataset(dir);
            FAIL("expected an exception");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
        }
    }
    SECTION("malformed manifest") {
        std::ofstream os(dir / "manifest.json", std::ios::trunc);
        os << "{ not json";
        os.close();
        try {
            read_dataset(dir);
            FAIL("expected an exception");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("malformed manifest") != std::string::npos);
        }
    }
    SECTION("missing manifest") {
        fs::remove(dir / "manifest.json");
        CHECK_THROWS_AS(read_dataset(dir), IoError);
    }
}

TEST_CASE("prediction payload round-trip") {
    const fs::path dir = temp_dir("pred_roundtrip");
    std::vector<FramePrediction> preds(2);
    for (auto& p : preds) {
        p.actor = LabelMap::filled(3, 4, 1);
        p.action = LabelMap::filled(3, 4, 2);
        p.joint = LabelMap::filled(3, 4, 5);
        p.actor.at(1, 2) = 3;
    }
    write_predictions(preds, dir);
    const auto loaded = read_predictions(dir);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded[i].actor == preds[i].actor);
        CHECK(loaded[i].action == preds[i].action);
        CHECK(loaded[i].joint == preds[i].joint);
    }
}

TEST_CASE("action signatures are pairwise distinct") {
    const Taxonomy tax = default_synth_taxonomy();
    for (int c1 = 1; c1 < tax.num_actions(); ++c1)
        for (int c2 = c1 + 1; c2 < tax.num_actions(); ++c2) {
            const auto a = action_signature(c1, tax, 2);
            const auto b = action_signature(c2, tax, 2);
            const double dx = a[0] - b[0], dy = a[1] - b[1];
            CHECK(std::sqrt(dx * dx + dy * dy) > 0.5);
        }
    for (int a1 = 1; a1 < tax.num_actors(); ++a1)
        for (int a2 = a1 + 1; a2 < tax.num_actors(); ++a2) {
            const auto a = actor_signature(a1, tax, 3);
            const auto b = actor_signature(a2, tax, 3);
            const double dx = a[0] - b[0], dy = a[1] - b[1];
            CHECK(std::sqrt(dx * dx + dy * dy) > 0.5);
        }
}
