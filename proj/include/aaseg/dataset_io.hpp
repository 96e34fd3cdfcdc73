#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aaseg/taxonomy.hpp"
#include "aaseg/tensor.hpp"
#include "aaseg/types.hpp"

namespace aaseg {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- raw payloads: little-endian, row-major, no header ----

namespace detail {
template <typename T>
void write_raw(const fs::path& path, const std::vector<T>& values) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!os) throw IoError("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_raw(const fs::path& path, std::size_t count, const std::string& what) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("missing payload: " + path.string());
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    if (bytes != count * sizeof(T))
        throw IoError("shape mismatch: " + what + " payload " + path.string() + " has " +
                      std::to_string(bytes) + " bytes, expected " +
                      std::to_string(count * sizeof(T)));
    is.seekg(0);
    std::vector<T> values(count);
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(T)));
    if (!is) throw IoError("truncated payload: " + path.string());
    return values;
}

inline std::vector<std::size_t> json_shape(const json& j) {
    std::vector<std::size_t> shape;
    for (const auto& d : j) {
        const auto v = d.get<std::int64_t>();
        if (v < 0) throw IoError("malformed manifest: negative dimension");
        shape.push_back(static_cast<std::size_t>(v));
    }
    return shape;
}

inline std::size_t shape_count(const std::vector<std::size_t>& shape) {
    std::size_t n = shape.empty() ? 0 : 1;
    for (auto d : shape) n *= d;
    return n;
}
} // namespace detail

inline void write_f32_payload(const fs::path& path, const Tensor<float>& t) {
    detail::write_raw(path, t.storage());
}

inline Tensor<float> read_f32_payload(const fs::path& path, const std::vector<std::size_t>& shape,
                                      const std::string& what) {
    return Tensor<float>::from_data(shape,
                                    detail::read_raw<float>(path, detail::shape_count(shape), what));
}

inline void write_label_payload(const fs::path& path, const LabelMap& map) {
    detail::write_raw(path, map.labels);
}

inline LabelMap read_label_payload(const fs::path& path, int height, int width,
                                   const std::string& what) {
    LabelMap map;
    map.height = height;
    map.width = width;
    map.labels = detail::read_raw<std::uint16_t>(
        path, static_cast<std::size_t>(height) * static_cast<std::size_t>(width), what);
    return map;
}

// ---- taxonomy <-> json ----

inline json taxonomy_to_json(const Taxonomy& taxonomy) {
    json pairs = json::array();
    for (const auto& [a, c] : taxonomy.valid_pairs()) pairs.push_back({a, c});
    return json{{"actor_names", taxonomy.actor_names()},
                {"action_names", taxonomy.action_names()},
                {"valid_pairs", pairs},
                {"background_actor", taxonomy.background_actor()},
                {"background_action", taxonomy.background_action()}};
}

inline Taxonomy taxonomy_from_json(const json& j) {
    try {
        std::vector<std::pair<int, int>> pairs;
        for (const auto& p : j.at("valid_pairs"))
            pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
        return Taxonomy(j.at("actor_names").get<std::vector<std::string>>(),
                        j.at("action_names").get<std::vector<std::string>>(), std::move(pairs),
                        j.at("background_actor").get<int>(), j.at("background_action").get<int>());
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed manifest: taxonomy: ") + e.what());
    }
}

// ---- dataset directory: manifest.json + payloads ----

constexpr int kDatasetFormatVersion = 1;

inline std::string frame_tag(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05zu", index);
    return buf;
}

/// Writes manifest.json plus one payload file per tensor / label map /
/// region mask. Output bytes are a pure function of the inputs.
inline void write_dataset(const std::vector<FrameSample>& samples, const Taxonomy& taxonomy,
                          const fs::path& dir) {
    fs::create_directories(dir);
    json frames = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const FrameSample& s = samples[i];
        const std::string tag = frame_tag(i);
        json frame;
        auto tensor_entry = [&](const Tensor<float>& t, const std::string& name) {
            const std::string file = tag + "_" + name + ".f32";
            write_f32_payload(dir / file, t);
            return json{{"file", file}, {"shape", t.shape()}};
        };
        auto label_entry = [&](const LabelMap& m, const std::string& name) {
            const std::string file = tag + "_" + name + ".u16";
            write_label_payload(dir / file, m);
            return json{{"file", file}, {"shape", {m.height, m.width}}};
        };
        frame["appearance"] = tensor_entry(s.appearance, "appearance");
        frame["motion"] = tensor_entry(s.motion, "motion");
        frame["gt_actor"] = label_entry(s.gt_actor, "gt_actor");
        frame["gt_action"] = label_entry(s.gt_action, "gt_action");
        json regions = json::array();
        for (std::size_t r = 0; r < s.regions.size(); ++r) {
            char rb[32];
            std::snprintf(rb, sizeof(rb), "_region_%03zu.f32", r);
            const std::string file = tag + rb;
            write_f32_payload(dir / file, s.regions.regions[r].mask);
            regions.push_back({{"bbox", s.regions.regions[r].bbox},
                               {"mask_file", file},
                               {"mask_shape", s.regions.regions[r].mask.shape()}});
        }
        frame["regions"] = std::move(regions);
        frames.push_back(std::move(frame));
    }
    json manifest{{"format_version", kDatasetFormatVersion},
                  {"taxonomy", taxonomy_to_json(taxonomy)},
                  {"frames", std::move(frames)}};
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot open for writing: " + (dir / "manifest.json").string());
    os << manifest.dump(2) << "\n";
}

struct Dataset {
    Taxonomy taxonomy = Taxonomy({"background", "x"}, {"none", "y"}, {{0, 0}}, 0, 0);
    std::vector<FrameSample> samples;
};

inline Dataset read_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw IoError("missing manifest: " + manifest_path.string());
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest: " + std::string(e.what()));
    }
    Dataset ds;
    try {
        if (manifest.at("format_version").get<int>() != kDatasetFormatVersion)
            throw IoError("malformed manifest: unsupported format_version");
        ds.taxonomy = taxonomy_from_json(manifest.at("taxonomy"));
        for (const auto& frame : manifest.at("frames")) {
            FrameSample s;
            auto read_tensor = [&](const json& e, const std::string& what) {
                return read_f32_payload(dir / e.at("file").get<std::string>(),
                                        detail::json_shape(e.at("shape")), what);
            };
            s.appearance = read_tensor(frame.at("appearance"), "appearance");
            s.motion = read_tensor(frame.at("motion"), "motion");
            const auto read_labels = [&](const json& e, const std::string& what) {
                const auto shape = detail::json_shape(e.at("shape"));
                if (shape.size() != 2) throw IoError("malformed manifest: label shape rank");
                return read_label_payload(dir / e.at("file").get<std::string>(),
                                          static_cast<int>(shape[0]), static_cast<int>(shape[1]),
                                          what);
            };
            s.gt_actor = read_labels(frame.at("gt_actor"), "gt_actor");
            s.gt_action = read_labels(frame.at("gt_action"), "gt_action");
            s.regions.frame_height = static_cast<int>(s.appearance.dim(0));
            s.regions.frame_width = static_cast<int>(s.appearance.dim(1));
            for (const auto& rj : frame.at("regions")) {
                RegionMask r;
                const auto bbox = rj.at("bbox");
                for (int b = 0; b < 4; ++b) r.bbox[static_cast<std::size_t>(b)] = bbox.at(b).get<double>();
                r.mask = read_f32_payload(dir / rj.at("mask_file").get<std::string>(),
                                          detail::json_shape(rj.at("mask_shape")), "region mask");
                s.regions.regions.push_back(std::move(r));
            }
            ds.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw IoError("malformed manifest: " + std::string(e.what()));
    }
    return ds;
}

// ---- model parameters: flat little-endian float64 ----

inline void write_flat_doubles(const fs::path& path, const std::vector<double>& flat) {
    detail::write_raw(path, flat);
}

inline std::vector<double> read_flat_doubles(const fs::path& path, std::size_t count) {
    return detail::read_raw<double>(path, count, "parameters");
}

// ---- per-frame prediction payloads ----

/// Layout: predictions.json plus, per frame and task, one u16 label payload.
inline void write_predictions(const std::vector<FramePrediction>& preds, const fs::path& dir) {
    fs::create_directories(dir);
    json frames = json::array();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::string tag = frame_tag(i);
        const std::string actor_file = tag + "_actor.u16";
        const std::string action_file = tag + "_action.u16";
        const std::string joint_file = tag + "_joint.u16";
        write_label_payload(dir / actor_file, preds[i].actor);
        write_label_payload(dir / action_file, preds[i].action);
        write_label_payload(dir / joint_file, preds[i].joint);
        frames.push_back({{"actor", actor_file},
                          {"action", action_file},
                          {"joint", joint_file},
                          {"shape", {preds[i].actor.height, preds[i].actor.width}}});
    }
    json manifest{{"format_version", kDatasetFormatVersion}, {"frames", std::move(frames)}};
    std::ofstream os(dir / "predictions.json");
    if (!os) throw IoError("cannot open for writing: " + (dir / "predictions.json").string());
    os << manifest.dump(2) << "\n";
}

inline std::vector<FramePrediction> read_predictions(const fs::path& dir) {
    std::ifstream is(dir / "predictions.json");
    if (!is) throw IoError("missing manifest: " + (dir / "predictions.json").string());
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest: " + std::string(e.what()));
    }
    std::vector<FramePrediction> preds;
    try {
        for (const auto& frame : manifest.at("frames")) {
            const auto shape = detail::json_shape(frame.at("shape"));
            if (shape.size() != 2) throw IoError("malformed manifest: prediction shape rank");
            const int h = static_cast<int>(shape[0]), w = static_cast<int>(shape[1]);
            FramePrediction p;
            p.actor = read_label_payload(dir / frame.at("actor").get<std::string>(), h, w, "actor");
            p.action =
                read_label_payload(dir / frame.at("action").get<std::string>(), h, w, "action");
            p.joint = read_label_payload(dir / frame.at("joint").get<std::string>(), h, w, "joint");
            preds.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw IoError("malformed manifest: " + std::string(e.what()));
    }
    return preds;
}

} // namespace aaseg
