#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aaseg/dataset_io.hpp"
#include "aaseg/metrics.hpp"
#include "aaseg/model.hpp"
#include "aaseg/parallel.hpp"
#include "aaseg/synthdata.hpp"
#include "aaseg/training.hpp"

namespace aaseg {

// ---- JSON forms of the experiment-facing configs ----

inline json model_config_to_json(const ModelConfig& c) {
    return json{{"appearance_channels", c.appearance_channels},
                {"motion_channels", c.motion_channels},
                {"feature_channels", c.feature_channels},
                {"roi_grid", c.roi_grid},
                {"fc_layers", c.fc_layers},
                {"fc_width", c.fc_width},
                {"streams", c.use_motion ? "rgb_flow" : "rgb_only"}};
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.appearance_channels = j.value("appearance_channels", c.appearance_channels);
    c.motion_channels = j.value("motion_channels", c.motion_channels);
    c.feature_channels = j.value("feature_channels", c.feature_channels);
    c.roi_grid = j.value("roi_grid", c.roi_grid);
    c.fc_layers = j.value("fc_layers", c.fc_layers);
    c.fc_width = j.value("fc_width", c.fc_width);
    const std::string streams = j.value("streams", std::string("rgb_flow"));
    if (streams == "rgb_flow") c.use_motion = true;
    else if (streams == "rgb_only") c.use_motion = false;
    else throw IoError("config: streams must be rgb_flow or rgb_only, got " + streams);
    return c;
}

inline json train_config_to_json(const TrainConfig& c) {
    return json{{"preset", c.preset_name},
                {"stage1_lr_frontend", c.stage1_lr_frontend},
                {"stage1_lr_backend", c.stage1_lr_backend},
                {"stage1_batch", c.stage1_batch},
                {"stage1_iters", c.stage1_iters},
                {"stage2_lr", c.stage2_lr},
                {"stage2_batch", c.stage2_batch},
                {"stage2_iters", c.stage2_iters},
                {"momentum", c.momentum},
                {"weight_decay", c.weight_decay}};
}

/// Starts from the named preset (default "toy") and lets individual fields
/// override it.
inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c = TrainConfig::preset(j.value("preset", std::string("toy")));
    c.stage1_lr_frontend = j.value("stage1_lr_frontend", c.stage1_lr_frontend);
    c.stage1_lr_backend = j.value("stage1_lr_backend", c.stage1_lr_backend);
    c.stage1_batch = j.value("stage1_batch", c.stage1_batch);
    c.stage1_iters = j.value("stage1_iters", c.stage1_iters);
    c.stage2_lr = j.value("stage2_lr", c.stage2_lr);
    c.stage2_batch = j.value("stage2_batch", c.stage2_batch);
    c.stage2_iters = j.value("stage2_iters", c.stage2_iters);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.validate();
    return c;
}

inline json corruption_to_json(const CorruptionSpec& c) {
    return json{{"mask_downsample", c.mask_downsample}, {"erode_radius", c.erode_radius},
                {"dilate_radius", c.dilate_radius},     {"bbox_jitter", c.bbox_jitter},
                {"drop_prob", c.drop_prob},             {"spurious_rate", c.spurious_rate},
                {"seed", c.seed}};
}

inline CorruptionSpec corruption_from_json(const json& j) {
    CorruptionSpec c;
    c.mask_downsample = j.value("mask_downsample", c.mask_downsample);
    c.erode_radius = j.value("erode_radius", c.erode_radius);
    c.dilate_radius = j.value("dilate_radius", c.dilate_radius);
    c.bbox_jitter = j.value("bbox_jitter", c.bbox_jitter);
    c.drop_prob = j.value("drop_prob", c.drop_prob);
    c.spurious_rate = j.value("spurious_rate", c.spurious_rate);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

inline json scene_spec_to_json(const SceneSpec& s) {
    std::vector<std::string> shapes;
    for (auto k : s.shapes) shapes.push_back(k == ShapeKind::Rectangle ? "rectangle" : "ellipse");
    return json{{"height", s.height},
                {"width", s.width},
                {"min_actors", s.min_actors},
                {"max_actors", s.max_actors},
                {"shapes", shapes},
                {"min_size", s.min_size},
                {"max_size", s.max_size},
                {"part_fraction", s.part_fraction},
                {"noise_sigma", s.noise_sigma},
                {"appearance_channels", s.appearance_channels},
                {"motion_channels", s.motion_channels},
                {"allow_overlap", s.allow_overlap},
                {"taxonomy", taxonomy_to_json(s.taxonomy)}};
}

inline SceneSpec scene_spec_from_json(const json& j) {
    SceneSpec s;
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.min_actors = j.value("min_actors", s.min_actors);
    s.max_actors = j.value("max_actors", s.max_actors);
    if (j.contains("shapes")) {
        s.shapes.clear();
        for (const auto& name : j.at("shapes")) {
            const std::string n = name.get<std::string>();
            if (n == "rectangle") s.shapes.push_back(ShapeKind::Rectangle);
            else if (n == "ellipse") s.shapes.push_back(ShapeKind::Ellipse);
            else throw IoError("scene spec: unknown shape " + n);
        }
    }
    s.min_size = j.value("min_size", s.min_size);
    s.max_size = j.value("max_size", s.max_size);
    s.part_fraction = j.value("part_fraction", s.part_fraction);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.appearance_channels = j.value("appearance_channels", s.appearance_channels);
    s.motion_channels = j.value("motion_channels", s.motion_channels);
    s.allow_overlap = j.value("allow_overlap", s.allow_overlap);
    if (j.contains("taxonomy")) s.taxonomy = taxonomy_from_json(j.at("taxonomy"));
    s.validate();
    return s;
}

/// One experiment run: which dataset, how to train, the model shape, and the
/// evaluation knobs. Serializes losslessly so a run's echo reloads bit-exact.
struct ExperimentConfig {
    std::string dataset;
    TrainConfig train = TrainConfig::toy_preset();
    ModelConfig model;
    HeadMode head = HeadMode::Region;
    CorruptionSpec test_corruption; // applied to regions at prediction time
    bool non_boundary = false;
    int radius = 7;
    std::string output_dir;
    std::uint64_t seed = 1;
};

inline json experiment_to_json(const ExperimentConfig& c) {
    return json{{"dataset", c.dataset},
                {"train", train_config_to_json(c.train)},
                {"model", model_config_to_json(c.model)},
                {"head", c.head == HeadMode::Region ? "region" : "baseline"},
                {"test_corruption", corruption_to_json(c.test_corruption)},
                {"metrics", json{{"non_boundary", c.non_boundary}, {"radius", c.radius}}},
                {"output_dir", c.output_dir},
                {"seed", c.seed}};
}

inline ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig c;
    c.dataset = j.value("dataset", std::string());
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    const std::string head = j.value("head", std::string("region"));
    if (head == "region") c.head = HeadMode::Region;
    else if (head == "baseline") c.head = HeadMode::Baseline;
    else throw IoError("config: head must be region or baseline, got " + head);
    if (j.contains("test_corruption")) c.test_corruption = corruption_from_json(j.at("test_corruption"));
    if (j.contains("metrics")) {
        c.non_boundary = j.at("metrics").value("non_boundary", false);
        c.radius = j.at("metrics").value("radius", 7);
    }
    c.output_dir = j.value("output_dir", std::string());
    c.seed = j.value("seed", std::uint64_t(1));
    c.train.seed = c.seed;
    return c;
}

inline json load_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    try {
        json j;
        is >> j;
        return j;
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void save_json_file(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << j.dump(2) << "\n";
}

// ---- model parameter files (flat enumeration, little-endian f64) ----

inline void save_model_params(const fs::path& path, const ModelParams<double>& params) {
    write_flat_doubles(path, params.flatten());
}

inline void load_model_params(const fs::path& path, ModelParams<double>& params) {
    params.unflatten(read_flat_doubles(path, params.num_scalars()));
}

// ---- dataset-level prediction ----

/// Predicts every frame, optionally through corrupted test-time masks.
/// Frames may be processed in parallel; results land in per-frame slots so
/// the output is identical for any thread count.
inline std::vector<FramePrediction> predict_dataset(const Dataset& ds,
                                                    const ModelParams<double>& params,
                                                    HeadMode mode,
                                                    const CorruptionSpec& corruption = {}) {
    std::vector<FramePrediction> preds(ds.samples.size());
    parallel_for(ds.samples.size(), [&](std::size_t i) {
        const FrameSample& sample = ds.samples[i];
        if (mode == HeadMode::Region && !corruption.is_identity()) {
            FrameSample warped = sample;
            CorruptionSpec per_frame = corruption;
            per_frame.seed = derive_seed(corruption.seed, i);
            warped.regions = corrupt_masks(sample.regions, per_frame);
            preds[i] = predict_frame(warped, params, ds.taxonomy, mode);
        } else {
            preds[i] = predict_frame(sample, params, ds.taxonomy, mode);
        }
    });
    return preds;
}

} // namespace aaseg
