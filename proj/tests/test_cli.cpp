#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "aaseg/dataset_io.hpp"
#include "aaseg/experiment.hpp"
#include "aaseg/metrics.hpp"
#include "aaseg/synthdata.hpp"
#include "aaseg/tensor.hpp"
#include "oracles.hpp"

using namespace aaseg;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("aaseg_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out_file = dir / "stdout.txt";
    const fs::path err_file = dir / "stderr.txt";
    const std::string cmd = std::string(AASEG_CLI_PATH) + " " + args + " >" + out_file.string() +
                            " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WEXITSTATUS(status);
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

bool directories_byte_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> names_a, names_b;
    for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename());
    for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename());
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    if (names_a != names_b) return false;
    for (const auto& name : names_a)
        if (slurp(a / name) != slurp(b / name)) return false;
    return true;
}

std::string fixture(const std::string& name) {
    return (fs::path(AASEG_FIXTURE_DIR) / name).string();
}

} // namespace

TEST_CASE("cli synth is deterministic and validates") {
    const fs::path dir = temp_dir("synth");
    const auto r1 = run_cli("synth --count 4 --seed 9 --out " + (dir / "d1").string(), dir);
    REQUIRE(r1.exit_code == 0);
    CHECK(r1.out.find("frames=4") != std::string::npos);
    const auto r2 = run_cli("synth --count 4 --seed 9 --out " + (dir / "d2").string(), dir);
    REQUIRE(r2.exit_code == 0);
    CHECK(directories_byte_identical(dir / "d1", dir / "d2"));

    const Dataset ds = read_dataset(dir / "d1");
    REQUIRE(ds.samples.size() == 4);
    for (const auto& s : ds.samples) CHECK(validate_frame(s, ds.taxonomy).empty());
}

TEST_CASE("cli synth count zero gives a valid empty dataset and undefined metrics") {
    const fs::path dir = temp_dir("synth0");
    const auto r = run_cli("synth --count 0 --seed 1 --out " + (dir / "empty").string(), dir);
    REQUIRE(r.exit_code == 0);
    const Dataset ds = read_dataset(dir / "empty");
    CHECK(ds.samples.empty());

    write_predictions({}, dir / "preds");
    const auto ev = run_cli("evaluate --pred " + (dir / "preds").string() + " --dataset " +
                                (dir / "empty").string() + " --out " + (dir / "eval").string(),
                            dir);
    REQUIRE(ev.exit_code == 0);
    const std::string csv = slurp(dir / "eval" / "metrics.csv");
    CHECK(csv.find("actor,global_accuracy,all,undefined") != std::string::npos);
    CHECK(csv.find("actor-action,mean_class_iou,all,undefined") != std::string::npos);
}

TEST_CASE("cli train echoes the paper preset verbatim") {
    const fs::path dir = temp_dir("echo");
    json cfg{{"dataset", (dir / "nonexistent").string()},
             {"train", json{{"preset", "paper"}}},
             {"output_dir", (dir / "run").string()},
             {"seed", 3}};
    std::ofstream(dir / "cfg.json") << cfg.dump(2);
    const auto r = run_cli("train --config " + (dir / "cfg.json").string() + " --echo-only", dir);
    REQUIRE(r.exit_code == 0);
    const json echo = json::parse(slurp(dir / "run" / "config_echo.json"));
    CHECK(echo.at("train").at("preset") == "paper");
    CHECK(echo.at("train").at("stage1_lr_frontend").get<double>() == 2.5e-4);
    CHECK(echo.at("train").at("stage1_lr_backend").get<double>() == 5e-3);
    CHECK(echo.at("train").at("stage2_lr").get<double>() == 2.5e-4);
    CHECK(echo.at("train").at("stage1_iters").get<int>() == 20000);
    CHECK(echo.at("train").at("stage2_iters").get<int>() == 80000);
    CHECK(echo.at("train").at("stage1_batch").get<int>() == 10);
    CHECK(echo.at("train").at("stage2_batch").get<int>() == 1);
}

TEST_CASE("cli fuse matches the in-process oracle on the shipped fixtures") {
    const fs::path dir = temp_dir("fuse");
    const fs::path out = dir / "fused.f32";
    const auto r = run_cli("fuse --scores " + fixture("fuse_scores.json") + " --regions " +
                               fixture("fuse_regions.json") + " --out " + out.string(),
                           dir);
    REQUIRE(r.exit_code == 0);

    // Reconstruct the same instance and compare against the brute force.
    RegionSet rs;
    rs.frame_width = 4;
    rs.frame_height = 4;
    RegionMask a;
    a.bbox = {0, 0, 3, 2};
    a.mask = read_f32_payload(fixture("fuse_mask_a.f32"), {2, 3}, "fixture");
    RegionMask b;
    b.bbox = {1, 1, 4, 4};
    b.mask = read_f32_payload(fixture("fuse_mask_b.f32"), {3, 3}, "fixture");
    rs.regions = {a, b};
    Tensor<double> scores =
        Tensor<double>::from_data({2, 3}, {0.7, -0.3, 0.4, -0.1, 0.9, 0.2});
    Tensor<double> bg = Tensor<double>::from_data({3}, {0.05, -0.2, 0.1});
    const auto expected = oracle::fuse(rs, scores, bg);

    const Tensor<float> fused = read_f32_payload(out, {4, 4, 3}, "fused");
    for (std::size_t i = 0; i < fused.size(); ++i)
        CHECK(fused[i] == Catch::Approx(expected[i].value).margin(1e-6));

    const json meta = json::parse(slurp(dir / "fused.f32.meta.json"));
    CHECK(meta.at("shape") == json({4, 4, 3}));
}

TEST_CASE("cli fuse reports malformed payloads on stderr with a nonzero exit") {
    const fs::path dir = temp_dir("fusebad");
    const auto r = run_cli("fuse --scores " + fixture("fuse_scores.json") + " --regions " +
                               fixture("fuse_regions_bad.json") + " --out " +
                               (dir / "f.f32").string(),
                           dir);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("shape mismatch") != std::string::npos);
}

TEST_CASE("cli evaluate scores GT-copied predictions at one") {
    const fs::path dir = temp_dir("evalgt");
    const auto rs = run_cli("synth --count 3 --seed 5 --out " + (dir / "ds").string(), dir);
    REQUIRE(rs.exit_code == 0);
    const Dataset ds = read_dataset(dir / "ds");
    std::vector<FramePrediction> preds;
    for (const auto& s : ds.samples) {
        FramePrediction p;
        p.actor = s.gt_actor;
        p.action = s.gt_action;
        p.joint = joint_ground_truth(s.gt_actor, s.gt_action, ds.taxonomy);
        preds.push_back(std::move(p));
    }
    write_predictions(preds, dir / "preds");
    const auto r = run_cli("evaluate --pred " + (dir / "preds").string() + " --dataset " +
                               (dir / "ds").string() + " --out " + (dir / "eval").string() +
                               " --non-boundary --radius 7 --table",
                           dir);
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(dir / "eval" / "metrics.csv");
    CHECK(csv.find("actor,global_accuracy,all,1\n") != std::string::npos);
    CHECK(csv.find("actor-action,mean_class_iou,all,1\n") != std::string::npos);
    CHECK(csv.find("non_boundary") != std::string::npos);

    std::ifstream main_in(dir / "eval" / "metrics.csv");
    std::ifstream cat_in(dir / "eval" / "per_category.csv");
    const MetricsReport parsed = read_metrics_csv(main_in, &cat_in);
    CHECK(parsed.non_boundary);
    CHECK(*parsed.joint.global_acc == 1.0);
    CHECK(parsed.category_names.size() == static_cast<std::size_t>(ds.taxonomy.num_pairs()));
}

TEST_CASE("cli gradcheck exit codes and coverage") {
    const fs::path dir = temp_dir("gradcheck");
    const auto ok = run_cli("gradcheck --seed 2", dir);
    CHECK(ok.exit_code == 0);
    for (const char* op : {"two_stream", "baseline_head", "roi_pool", "region_head",
                           "region_to_pixel", "softmax", "actor_action_loss"}) {
        std::size_t first = ok.out.find(op);
        REQUIRE(first != std::string::npos);
        CHECK(ok.out.find(op, first + 1) == std::string::npos); // exactly once
    }
    const auto bad = run_cli("gradcheck --seed 2 --inject-fault", dir);
    CHECK(bad.exit_code == 1);

    const auto usage = run_cli("gradcheck --no-such-flag", dir);
    CHECK(usage.exit_code == 2);
}

TEST_CASE("cli end-to-end: train, predict, rgb-only invariance, resume") {
    const fs::path dir = temp_dir("train_e2e");
    REQUIRE(run_cli("synth --count 10 --seed 31 --out " + (dir / "ds").string(), dir).exit_code ==
            0);

    json cfg{{"dataset", (dir / "ds").string()},
             {"train", json{{"preset", "toy"},
                            {"stage1_iters", 60},
                            {"stage2_iters", 80},
                            {"stage1_batch", 2}}},
             {"model", json{{"feature_channels", 4},
                            {"roi_grid", 3},
                            {"fc_layers", 1},
                            {"fc_width", 16},
                            {"streams", "rgb_only"}}},
             {"output_dir", (dir / "run").string()},
             {"seed", 12}};
    std::ofstream(dir / "cfg.json") << cfg.dump(2);
    REQUIRE(run_cli("train --config " + (dir / "cfg.json").string(), dir).exit_code == 0);

    SECTION("seed-fixed reruns give identical parameter files") {
        json cfg2 = cfg;
        cfg2["output_dir"] = (dir / "run_again").string();
        std::ofstream(dir / "cfg2.json") << cfg2.dump(2);
        REQUIRE(run_cli("train --config " + (dir / "cfg2.json").string(), dir).exit_code == 0);
        CHECK(slurp(dir / "run" / "params.f64") == slurp(dir / "run_again" / "params.f64"));
        CHECK(slurp(dir / "run" / "train_log.csv") == slurp(dir / "run_again" / "train_log.csv"));
    }

    SECTION("stage split with resume equals the joint run bit-exactly") {
        json cfg3 = cfg;
        cfg3["output_dir"] = (dir / "run_split").string();
        std::ofstream(dir / "cfg3.json") << cfg3.dump(2);
        REQUIRE(run_cli("train --config " + (dir / "cfg3.json").string() + " --stage 1", dir)
                    .exit_code == 0);
        REQUIRE(run_cli("train --config " + (dir / "cfg3.json").string() + " --stage 2 --resume",
                        dir)
                    .exit_code == 0);
        CHECK(slurp(dir / "run" / "params.f64") == slurp(dir / "run_split" / "params.f64"));
        CHECK(slurp(dir / "run" / "train_log.csv") == slurp(dir / "run_split" / "train_log.csv"));
    }

    SECTION("both heads label every pixel and rgb-only ignores motion payloads") {
        REQUIRE(run_cli("predict --params " + (dir / "run" / "params.f64").string() +
                            " --dataset " + (dir / "ds").string() + " --mode baseline --out " +
                            (dir / "pred_b").string(),
                        dir)
                    .exit_code == 0);
        REQUIRE(run_cli("predict --params " + (dir / "run" / "params.f64").string() +
                            " --dataset " + (dir / "ds").string() + " --mode region --out " +
                            (dir / "pred_r").string(),
                        dir)
                    .exit_code == 0);
        const Dataset ds = read_dataset(dir / "ds");
        for (const auto& preds : {read_predictions(dir / "pred_b"),
                                  read_predictions(dir / "pred_r")}) {
            REQUIRE(preds.size() == ds.samples.size());
            for (std::size_t i = 0; i < preds.size(); ++i) {
                CHECK(preds[i].actor.labels.size() == ds.samples[i].gt_actor.labels.size());
                for (auto v : preds[i].actor.labels) CHECK(v < ds.taxonomy.num_actors());
                for (auto v : preds[i].joint.labels) CHECK(v < ds.taxonomy.num_pairs());
            }
        }

        // Garble every motion payload; rgb-only predictions must not change.
        for (const auto& entry : fs::directory_iterator(dir / "ds")) {
            const std::string name = entry.path().filename().string();
            if (name.find("_motion.f32") == std::string::npos) continue;
            const auto bytes = fs::file_size(entry.path());
            std::ofstream os(entry.path(), std::ios::binary | std::ios::trunc);
            std::vector<float> junk(bytes / sizeof(float), 123.5f);
            os.write(reinterpret_cast<const char*>(junk.data()),
                     static_cast<std::streamsize>(bytes));
        }
        REQUIRE(run_cli("predict --params " + (dir / "run" / "params.f64").string() +
                            " --dataset " + (dir / "ds").string() + " --mode region --out " +
                            (dir / "pred_r2").string(),
                        dir)
                    .exit_code == 0);
        CHECK(directories_byte_identical(dir / "pred_r", dir / "pred_r2"));
    }
}

TEST_CASE("thread-count override does not change output bits") {
    SceneSpec spec;
    std::vector<FrameSample> frames;
    for (int i = 0; i < 6; ++i) frames.push_back(generate_scene(spec, 700 + i));
    Dataset ds;
    ds.taxonomy = spec.taxonomy;
    ds.samples = frames;
    ModelConfig model;
    model.feature_channels = 4;
    model.roi_grid = 3;
    model.fc_layers = 1;
    model.fc_width = 16;
    const ModelParams<double> params = init_model<double>(model, ds.taxonomy, 3);

    setenv("AASEG_THREADS", "1", 1);
    const auto single = predict_dataset(ds, params, HeadMode::Region);
    setenv("AASEG_THREADS", "4", 1);
    const auto multi = predict_dataset(ds, params, HeadMode::Region);
    unsetenv("AASEG_THREADS");
    REQUIRE(single.size() == multi.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
        CHECK(single[i].actor == multi[i].actor);
        CHECK(single[i].action == multi[i].action);
        CHECK(single[i].joint == multi[i].joint);
    }
}

TEST_CASE("experiment config JSON round-trips bit-exactly") {
    ExperimentConfig cfg;
    cfg.dataset = "somewhere/ds";
    cfg.train = TrainConfig::preset("toy");
    cfg.model.feature_channels = 6;
    cfg.model.use_motion = false;
    cfg.head = HeadMode::Baseline;
    cfg.test_corruption.mask_downsample = 2;
    cfg.test_corruption.drop_prob = 0.25;
    cfg.non_boundary = true;
    cfg.radius = 4;
    cfg.output_dir = "out/run";
    cfg.seed = 99;
    const json j1 = experiment_to_json(cfg);
    const ExperimentConfig back = experiment_from_json(j1);
    const json j2 = experiment_to_json(back);
    CHECK(j1 == j2);
}

TEST_CASE("cli usage errors exit with code 2") {
    const fs::path dir = temp_dir("usage");
    CHECK(run_cli("synth --count 3", dir).exit_code == 2);            // missing --out
    CHECK(run_cli("no_such_command", dir).exit_code == 2);
    CHECK(run_cli("train --config /nonexistent.json", dir).exit_code == 2);
    CHECK(run_cli("evaluate --pred /nope --dataset /nope --out /tmp/x", dir).exit_code == 2);
}
