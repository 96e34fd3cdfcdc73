#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aaseg/aaseg.hpp"

namespace fs = std::filesystem;
using aaseg::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitUsage = 2;

std::string format_value(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw aaseg::IoError("cannot open for writing: " + path.string());
    os << text;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw aaseg::IoError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---- synth ----

int cmd_synth(const std::string& spec_path, int count, std::uint64_t seed,
              const std::string& out) {
    aaseg::SceneSpec spec;
    if (!spec_path.empty()) spec = aaseg::scene_spec_from_json(aaseg::load_json_file(spec_path));
    spec.validate();

    std::vector<aaseg::FrameSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        samples.push_back(
            aaseg::generate_scene(spec, aaseg::derive_seed(seed, static_cast<std::uint64_t>(i))));
    aaseg::write_dataset(samples, spec.taxonomy, out);

    json echo{{"command", "synth"},
              {"spec", aaseg::scene_spec_to_json(spec)},
              {"count", count},
              {"seed", seed}};
    aaseg::save_json_file(fs::path(out) / "config_echo.json", echo);

    std::size_t regions = 0;
    std::map<std::string, std::int64_t> histogram;
    for (const auto& s : samples) {
        regions += s.regions.size();
        for (int y = 0; y < s.gt_actor.height; ++y)
            for (int x = 0; x < s.gt_actor.width; ++x) {
                const auto idx = spec.taxonomy.pair_index(s.gt_actor.at(y, x), s.gt_action.at(y, x));
                if (idx) ++histogram[spec.taxonomy.pair_name(*idx)];
            }
    }
    std::ostringstream line;
    line << "frames=" << samples.size() << " regions=" << regions << " pixels:";
    for (const auto& [name, n] : histogram) line << " " << name << "=" << n;
    std::cout << line.str() << "\n";
    return kExitOk;
}

// ---- train ----

int cmd_train(const std::string& config_path, int stage, bool resume, bool echo_only) {
    aaseg::ExperimentConfig cfg =
        aaseg::experiment_from_json(aaseg::load_json_file(config_path));
    if (cfg.dataset.empty() || cfg.output_dir.empty())
        throw aaseg::IoError("config: dataset and output_dir are required");
    fs::create_directories(cfg.output_dir);
    const fs::path out(cfg.output_dir);
    aaseg::save_json_file(out / "config_echo.json", aaseg::experiment_to_json(cfg));
    if (echo_only) {
        std::cout << aaseg::experiment_to_json(cfg).dump(2) << "\n";
        return kExitOk;
    }

    aaseg::Dataset ds = aaseg::read_dataset(cfg.dataset);
    if (ds.samples.empty()) throw aaseg::IoError("train: dataset is empty");
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto violations = aaseg::validate_frame(ds.samples[i], ds.taxonomy);
        if (!violations.empty())
            throw aaseg::IoError("train: frame " + std::to_string(i) + ": " + violations.front());
    }

    aaseg::ModelParams<double> params =
        aaseg::init_model<double>(cfg.model, ds.taxonomy, cfg.seed);
    if (resume) {
        if (stage != 2) throw aaseg::IoError("--resume requires --stage 2");
        aaseg::load_model_params(out / "params.f64", params);
    }
    aaseg::TrainLog log = aaseg::train_two_stage(params, ds.samples, cfg.train, stage);
    aaseg::save_model_params(out / "params.f64", params);

    if (resume && fs::exists(out / "train_log.csv")) {
        // Extend the stage-1 log so a resumed run matches a single full run.
        std::string existing = read_text_file(out / "train_log.csv");
        std::ostringstream ss;
        for (const auto& r : log.records) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%d,%.9g\n", r.iteration, r.stage, r.loss);
            ss << buf;
        }
        write_text_file(out / "train_log.csv", existing + ss.str());
    } else {
        std::ofstream os(out / "train_log.csv");
        log.write(os);
    }
    std::cout << "trained " << (stage == 0 ? "stages 1+2" : "stage " + std::to_string(stage))
              << ", params: " << (out / "params.f64").string() << "\n";
    return kExitOk;
}

// ---- predict ----

int cmd_predict(const std::string& params_path, std::string config_path,
                const std::string& dataset_path, const std::string& mode, const std::string& out,
                const std::string& corruption_path) {
    if (config_path.empty())
        config_path = (fs::path(params_path).parent_path() / "config_echo.json").string();
    aaseg::ExperimentConfig cfg =
        aaseg::experiment_from_json(aaseg::load_json_file(config_path));

    aaseg::HeadMode head = cfg.head;
    if (mode == "region") head = aaseg::HeadMode::Region;
    else if (mode == "baseline") head = aaseg::HeadMode::Baseline;
    else if (!mode.empty()) throw aaseg::IoError("predict: mode must be region or baseline");

    aaseg::CorruptionSpec corruption = cfg.test_corruption;
    if (!corruption_path.empty())
        corruption = aaseg::corruption_from_json(aaseg::load_json_file(corruption_path));

    aaseg::Dataset ds = aaseg::read_dataset(dataset_path);
    aaseg::ModelParams<double> params =
        aaseg::init_model<double>(cfg.model, ds.taxonomy, cfg.seed);
    aaseg::load_model_params(params_path, params);

    const std::vector<aaseg::FramePrediction> preds =
        aaseg::predict_dataset(ds, params, head, corruption);
    aaseg::write_predictions(preds, out);

    json echo{{"command", "predict"},
              {"params", params_path},
              {"config", config_path},
              {"dataset", dataset_path},
              {"mode", head == aaseg::HeadMode::Region ? "region" : "baseline"},
              {"corruption", aaseg::corruption_to_json(corruption)}};
    aaseg::save_json_file(fs::path(out) / "config_echo.json", echo);
    std::cout << "predicted " << preds.size() << " frames -> " << out << "\n";
    return kExitOk;
}

// ---- fuse ----

int cmd_fuse(const std::string& scores_path, const std::string& regions_path,
             const std::string& out) {
    const json scores_json = aaseg::load_json_file(scores_path);
    const json regions_json = aaseg::load_json_file(regions_path);
    const fs::path regions_dir = fs::path(regions_path).parent_path();

    aaseg::RegionSet regions;
    try {
        regions.frame_width = regions_json.at("frame_width").get<int>();
        regions.frame_height = regions_json.at("frame_height").get<int>();
        for (const auto& rj : regions_json.at("regions")) {
            aaseg::RegionMask r;
            for (int b = 0; b < 4; ++b)
                r.bbox[static_cast<std::size_t>(b)] = rj.at("bbox").at(b).get<double>();
            std::vector<std::size_t> shape;
            for (const auto& d : rj.at("mask_shape")) shape.push_back(d.get<std::size_t>());
            r.mask = aaseg::read_f32_payload(
                regions_dir / rj.at("mask_file").get<std::string>(), shape, "region mask");
            regions.regions.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw aaseg::IoError("malformed regions file: " + std::string(e.what()));
    }

    aaseg::Tensor<double> background;
    aaseg::Tensor<double> scores;
    try {
        const auto bg = scores_json.at("background_scores").get<std::vector<double>>();
        background = aaseg::Tensor<double>::from_data({bg.size()}, bg);
        const auto rows = scores_json.at("scores").get<std::vector<std::vector<double>>>();
        std::vector<double> flat;
        for (const auto& row : rows) {
            if (row.size() != bg.size())
                throw aaseg::IoError("scores file: row width != background width");
            flat.insert(flat.end(), row.begin(), row.end());
        }
        scores = aaseg::Tensor<double>::from_data({rows.size(), bg.size()}, std::move(flat));
    } catch (const json::exception& e) {
        throw aaseg::IoError("malformed scores file: " + std::string(e.what()));
    }

    auto [fused, witness] = aaseg::region_to_pixel_forward(regions, scores, background);
    aaseg::detail::write_raw(out, fused.cast<float>().storage());
    json meta{{"command", "fuse"},
              {"scores", scores_path},
              {"regions", regions_path},
              {"shape", fused.shape()}};
    aaseg::save_json_file(out + ".meta.json", meta);
    std::cout << "fused scores " << aaseg::shape_string(fused.shape()) << " -> " << out << "\n";
    return kExitOk;
}

// ---- evaluate ----

std::string render_table(const aaseg::MetricsReport& report) {
    std::ostringstream os;
    auto row = [&](const char* name, const aaseg::SettingMetrics& m, bool nb) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-22s %12s %16s %14s\n", name,
                      format_value(nb ? m.nb_global_acc : m.global_acc).c_str(),
                      format_value(nb ? m.nb_mean_class_acc : m.mean_class_acc).c_str(),
                      format_value(nb ? m.nb_mean_class_iou : m.mean_class_iou).c_str());
        os << buf;
    };
    char header[160];
    std::snprintf(header, sizeof(header), "%-22s %12s %16s %14s\n", "setting", "global_acc",
                  "mean_class_acc", "mean_class_iou");
    os << header;
    row("actor", report.actor, false);
    row("action", report.action, false);
    row("actor-action", report.joint, false);
    if (report.non_boundary) {
        row("actor (non-bnd)", report.actor, true);
        row("action (non-bnd)", report.action, true);
        row("actor-action (non-bnd)", report.joint, true);
    }
    os << "\nper-category accuracy:\n";
    for (std::size_t i = 0; i < report.category_names.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "  %-28s %s\n", report.category_names[i].c_str(),
                      format_value(report.per_category[i]).c_str());
        os << buf;
    }
    return os.str();
}

int cmd_evaluate(const std::string& pred_path, const std::string& dataset_path,
                 const std::string& out, bool non_boundary, int radius, bool table) {
    aaseg::Dataset ds = aaseg::read_dataset(dataset_path);
    const std::vector<aaseg::FramePrediction> preds = aaseg::read_predictions(pred_path);
    aaseg::EvalOptions options;
    options.non_boundary = non_boundary;
    options.radius = radius;
    const aaseg::MetricsReport report = aaseg::evaluate_all(preds, ds.samples, ds.taxonomy, options);

    fs::create_directories(out);
    {
        std::ofstream os(fs::path(out) / "metrics.csv");
        aaseg::write_metrics_csv(report, os);
    }
    {
        std::ofstream os(fs::path(out) / "per_category.csv");
        aaseg::write_per_category_csv(report, os);
    }
    json echo{{"command", "evaluate"},
              {"pred", pred_path},
              {"dataset", dataset_path},
              {"metrics", json{{"non_boundary", non_boundary}, {"radius", radius}}}};
    aaseg::save_json_file(fs::path(out) / "config_echo.json", echo);
    if (table) std::cout << render_table(report);
    else
        std::cout << "metrics -> " << (fs::path(out) / "metrics.csv").string() << "\n";
    return kExitOk;
}

// ---- gradcheck ----

int cmd_gradcheck(std::uint64_t seed, double eps, double tol, bool inject_fault) {
    const auto report = aaseg::run_gradient_suite(seed, eps, tol, inject_fault);
    bool all_pass = true;
    for (const auto& entry : report) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-18s max_rel_err=%.3e  %s\n", entry.op.c_str(),
                      entry.max_rel_err, entry.pass ? "PASS" : "FAIL");
        std::cout << buf;
        all_pass = all_pass && entry.pass;
    }
    std::cout << (all_pass ? "gradcheck: all operations PASS" : "gradcheck: FAIL") << "\n";
    return all_pass ? kExitOk : kExitVerificationFailure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"region-based actor-action segmentation toolkit"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_spec, synth_out;
    int synth_count = 10;
    std::uint64_t synth_seed = 1;
    synth->add_option("--spec", synth_spec, "scene spec JSON (defaults used when omitted)");
    synth->add_option("--count", synth_count, "number of frames")->required();
    synth->add_option("--seed", synth_seed, "master seed");
    synth->add_option("--out", synth_out, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "run the two-stage training schedule");
    std::string train_config;
    int train_stage = 0;
    bool train_resume = false, train_echo_only = false;
    train->add_option("--config", train_config, "experiment config JSON")->required();
    train->add_option("--stage", train_stage, "1, 2, or 0 for both (default)")
        ->check(CLI::Range(0, 2));
    train->add_flag("--resume", train_resume, "load stage-1 params before stage 2");
    train->add_flag("--echo-only", train_echo_only, "resolve and echo the config, then exit");

    auto* predict = app.add_subcommand("predict", "write per-frame label payloads");
    std::string pr_params, pr_config, pr_dataset, pr_mode, pr_out, pr_corruption;
    predict->add_option("--params", pr_params, "flat f64 parameter file")->required();
    predict->add_option("--config", pr_config, "config echo JSON (default: next to params)");
    predict->add_option("--dataset", pr_dataset, "dataset directory")->required();
    predict->add_option("--mode", pr_mode, "region or baseline (default from config)");
    predict->add_option("--out", pr_out, "output prediction directory")->required();
    predict->add_option("--corruption", pr_corruption, "test-time mask corruption JSON");

    auto* fuse = app.add_subcommand("fuse", "standalone region-to-pixel max fusion");
    std::string fu_scores, fu_regions, fu_out;
    fuse->add_option("--scores", fu_scores, "scores JSON")->required();
    fuse->add_option("--regions", fu_regions, "regions JSON")->required();
    fuse->add_option("--out", fu_out, "output f32 payload path")->required();

    auto* evaluate = app.add_subcommand("evaluate", "metrics CSV for stored predictions");
    std::string ev_pred, ev_dataset, ev_out;
    bool ev_nb = false, ev_table = false;
    int ev_radius = 7;
    evaluate->add_option("--pred", ev_pred, "prediction directory")->required();
    evaluate->add_option("--dataset", ev_dataset, "dataset directory")->required();
    evaluate->add_option("--out", ev_out, "output directory")->required();
    evaluate->add_flag("--non-boundary", ev_nb, "also evaluate away from GT boundaries");
    evaluate->add_option("--radius", ev_radius, "boundary band Chebyshev radius");
    evaluate->add_flag("--table", ev_table, "print an aligned text table");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::uint64_t gc_seed = 1;
    double gc_eps = 1e-3, gc_tol = 1e-4;
    bool gc_fault = false;
    gradcheck->add_option("--seed", gc_seed, "instance seed");
    gradcheck->add_option("--eps", gc_eps, "central-difference step");
    gradcheck->add_option("--tol", gc_tol, "max relative error");
    gradcheck->add_flag("--inject-fault", gc_fault, "corrupt one gradient per op");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_spec, synth_count, synth_seed, synth_out);
        if (train->parsed())
            return cmd_train(train_config, train_stage, train_resume, train_echo_only);
        if (predict->parsed())
            return cmd_predict(pr_params, pr_config, pr_dataset, pr_mode, pr_out, pr_corruption);
        if (fuse->parsed()) return cmd_fuse(fu_scores, fu_regions, fu_out);
        if (evaluate->parsed())
            return cmd_evaluate(ev_pred, ev_dataset, ev_out, ev_nb, ev_radius, ev_table);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_eps, gc_tol, gc_fault);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
