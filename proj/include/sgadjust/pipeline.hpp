#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "sgadjust/eval.hpp"
#include "sgadjust/zeroshot.hpp"

namespace sga {

namespace fs = std::filesystem;

struct ExperimentConfig {
    SynthConfig synth;
    double test_fraction = 0.3;
    BaseTrainConfig base_train;
    TrainConfig cam_train;
    CAModuleConfig cam;
    SimilarityParams sim;
    std::vector<int> k_values{20, 50, 100};
    int vector_dim = 16;
    std::string vectors_path;  // empty: generate clustered vectors from the run seed
    bool optimize_pairs = true;
    std::uint64_t seed = 1;

    // ablation grids
    std::vector<double> alpha_grid{0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> beta_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

inline json experiment_config_to_json(const ExperimentConfig& c) {
    return json{{"synth", synth_config_to_json(c.synth)},
                {"test_fraction", c.test_fraction},
                {"base_epochs", c.base_train.epochs},
                {"base_lr", c.base_train.lr},
                {"d_noise", c.base_train.d_noise},
                {"noise_sigma", c.base_train.noise_sigma},
                {"batch", c.cam_train.batch_size},
                {"lr", c.cam_train.learning_rate},
                {"epochs", c.cam_train.epochs},
                {"grad_clip", c.cam_train.grad_clip},
                {"e_dim", c.cam.e_dim},
                {"heads", c.cam.n_heads},
                {"ffn_mult", c.cam.ffn_mult},
                {"dropout", c.cam.dropout},
                {"adjust_mode", to_string(c.cam.adjust_mode)},
                {"alpha", c.sim.alpha},
                {"beta", c.sim.beta},
                {"k_values", c.k_values},
                {"vector_dim", c.vector_dim},
                {"vectors_path", c.vectors_path},
                {"optimize_pairs", c.optimize_pairs},
                {"alpha_grid", c.alpha_grid},
                {"beta_grid", c.beta_grid},
                {"seed", c.seed}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.base_train.epochs = j.value("base_epochs", c.base_train.epochs);
    c.base_train.lr = j.value("base_lr", c.base_train.lr);
    c.base_train.d_noise = j.value("d_noise", c.base_train.d_noise);
    c.base_train.noise_sigma = j.value("noise_sigma", c.base_train.noise_sigma);
    c.cam_train.batch_size = j.value("batch", c.cam_train.batch_size);
    c.cam_train.learning_rate = j.value("lr", c.cam_train.learning_rate);
    c.cam_train.epochs = j.value("epochs", c.cam_train.epochs);
    c.cam_train.grad_clip = j.value("grad_clip", c.cam_train.grad_clip);
    c.cam.e_dim = j.value("e_dim", c.cam.e_dim);
    c.cam.n_heads = j.value("heads", c.cam.n_heads);
    c.cam.ffn_mult = j.value("ffn_mult", c.cam.ffn_mult);
    c.cam.dropout = j.value("dropout", c.cam.dropout);
    c.cam.adjust_mode = adjust_mode_from_string(j.value("adjust_mode", to_string(c.cam.adjust_mode)));
    c.sim.alpha = j.value("alpha", c.sim.alpha);
    c.sim.beta = j.value("beta", c.sim.beta);
    if (j.contains("k_values")) c.k_values = j.at("k_values").get<std::vector<int>>();
    c.vector_dim = j.value("vector_dim", c.vector_dim);
    c.vectors_path = j.value("vectors_path", c.vectors_path);
    c.optimize_pairs = j.value("optimize_pairs", c.optimize_pairs);
    if (j.contains("alpha_grid")) c.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    if (j.contains("beta_grid")) c.beta_grid = j.at("beta_grid").get<std::vector<double>>();
    c.seed = j.value("seed", c.seed);
    return c;
}

inline std::string config_hash(const ExperimentConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(experiment_config_to_json(c).dump())));
    return std::string(buf);
}

// Every artifact carries the producing config hash; loads cross-check it.
inline void write_artifact(const fs::path& path, json content, const std::string& hash,
                           std::uint64_t seed) {
    content["_manifest"] = json{{"config_hash", hash}, {"seed", seed}};
    write_file(path.string(), content.dump(1) + "\n");
}

inline json load_artifact(const fs::path& path, const std::string& expected_hash = "") {
    auto j = load_json_file(path.string());
    if (!expected_hash.empty()) {
        if (!j.contains("_manifest") ||
            j.at("_manifest").value("config_hash", "") != expected_hash)
            throw ValidationError("artifact '" + path.string() +
                                  "' was produced under a different config");
    }
    return j;
}

struct PipelineResult {
    fs::path out_dir;
    std::vector<MetricReport> reports;
    double zp_recall = 0.0;
    std::string table;
};

// Builds a LogitsProvider for one system over a frozen base model.
inline LogitsProvider base_provider(const FrozenBaseModel& base) {
    return [&base](const Scene& s) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < s.instances.size(); ++i)
            rows.push_back(base.logits_for(s.instances[i], {s.scene_id, static_cast<int>(i)}));
        return rows;
    };
}

inline LogitsProvider vanilla_provider(const FrozenBaseModel& base,
                                       const std::vector<double>& factors, AdjustMode mode) {
    return [&base, factors, mode](const Scene& s) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            auto z = base.logits_for(s.instances[i], {s.scene_id, static_cast<int>(i)});
            rows.push_back(adjust_logits_row(z, factors, mode));
        }
        return rows;
    };
}

inline LogitsProvider cam_provider(const FrozenBaseModel& base, const AdjustmentTensor& tensor,
                                   AdjustMode mode) {
    return [&base, &tensor, mode](const Scene& s) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            const auto& in = s.instances[i];
            auto z = base.logits_for(in, {s.scene_id, static_cast<int>(i)});
            rows.push_back(adjust_logits_row(z, tensor.slice(in.subject_cat, in.object_cat), mode));
        }
        return rows;
    };
}

// gen-data -> split -> extract-dist -> train-base -> infer-pairs ->
// optimize-P -> train-cam -> eval, all artifacts under out_dir.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const fs::path& out_dir,
                                   bool quiet = true) {
    const std::string hash = config_hash(cfg);
    fs::create_directories(out_dir);
    auto log = [&](const std::string& msg) {
        if (!quiet) std::fprintf(stderr, "[pipeline] %s\n", msg.c_str());
    };

    log("generating data");
    SynthConfig synth = cfg.synth;
    synth.seed = cfg.seed;
    auto data = generate_synthetic(synth);
    write_artifact(out_dir / "data.json", dataset_to_json(data), hash, cfg.seed);

    log("splitting");
    auto split = split_train_test(data, cfg.test_fraction, cfg.seed + 1);
    write_artifact(out_dir / "train.json", dataset_to_json(split.train), hash, cfg.seed);
    write_artifact(out_dir / "test.json", dataset_to_json(split.test), hash, cfg.seed);
    write_artifact(out_dir / "manifest.json", manifest_to_json(split.manifest), hash, cfg.seed);

    log("extracting distributions");
    auto dists = extract_distributions(split.train);
    write_artifact(out_dir / "dist.json", distributions_to_json(dists), hash, cfg.seed);

    log("training base model");
    BaseTrainConfig base_cfg = cfg.base_train;
    base_cfg.seed = cfg.seed + 2;
    auto base = train_base(split.train, base_cfg);
    write_artifact(out_dir / "base.json", base_model_to_json(base), hash, cfg.seed);

    log("inferring zero-shot pairs");
    EmbeddingStore store =
        cfg.vectors_path.empty()
            ? generate_clustered_vectors(data.vocabulary, cfg.synth.affinity_clusters,
                                         cfg.vector_dim, cfg.seed + 3)
            : load_word_vectors(cfg.vectors_path, data.vocabulary);
    auto inferred = infer_zero_shot_pairs(split.train.pair_types(), data.vocabulary, store, cfg.sim);
    write_artifact(out_dir / "pairs.json", json{{"pairs", inferred_pairs_to_json(inferred)}}, hash,
                   cfg.seed);
    double zp = zero_shot_pair_recall(inferred, split.manifest);

    auto dists_used = dists;
    if (cfg.optimize_pairs) {
        log("optimizing pair distribution");
        dists_used.P = optimize_pair_distribution(dists.P, inferred);
        write_artifact(out_dir / "dist_opt.json", distributions_to_json(dists_used), hash, cfg.seed);
    }

    log("training camodule");
    TrainConfig tc = cfg.cam_train;
    tc.seed = cfg.seed + 4;
    auto cam_init = init_camodule(data.vocabulary.n_objects(), data.vocabulary.n_predicates(),
                                  cfg.cam, cfg.seed + 5);
    auto trained = train_camodule(base, dists_used, split.train, tc, std::move(cam_init));
    write_artifact(out_dir / "cam.json", camodule_to_json(trained.params), hash, cfg.seed);
    write_artifact(out_dir / "loss_curve.json", json{{"loss", trained.loss_curve}}, hash, cfg.seed);

    log("materializing adjustment tensor");
    auto tensor = materialize_adjustment_tensor(trained.params, dists_used);
    write_artifact(out_dir / "adjust.json", adjustment_tensor_to_json(tensor), hash, cfg.seed);

    log("evaluating");
    auto vanilla = vanilla_adjustment(dists.R);
    const int nr = data.vocabulary.n_predicates();
    PipelineResult result;
    result.out_dir = out_dir;
    result.zp_recall = zp;

    auto scored_base = score_dataset(split.test, base_provider(base));
    auto scored_vanilla =
        score_dataset(split.test, vanilla_provider(base, vanilla, cfg.cam.adjust_mode));
    auto scored_cam = score_dataset(split.test, cam_provider(base, tensor, cfg.cam.adjust_mode));
    result.reports.push_back(
        build_metric_report("base", scored_base, split.manifest, nr, cfg.k_values));
    result.reports.push_back(
        build_metric_report("vanilla", scored_vanilla, split.manifest, nr, cfg.k_values));
    result.reports.push_back(
        build_metric_report("camodule", scored_cam, split.manifest, nr, cfg.k_values));
    result.reports.back().zp_recall = zp;

    json report;
    report["config_hash"] = hash;
    report["seed"] = cfg.seed;
    report["zpR@"] = zp;
    report["systems"] = json::array();
    for (const auto& r : result.reports) report["systems"].push_back(metric_report_to_json(r));
    write_file((out_dir / "report.json").string(), report.dump(1) + "\n");
    result.table = comparison_table(result.reports);
    return result;
}

enum class AblationAxis { Alpha, Beta, DistanceMode, PairOpt };

inline AblationAxis ablation_axis_from_string(const std::string& s) {
    if (s == "alpha") return AblationAxis::Alpha;
    if (s == "beta") return AblationAxis::Beta;
    if (s == "distance_mode") return AblationAxis::DistanceMode;
    if (s == "pair_opt") return AblationAxis::PairOpt;
    throw ConfigError("unknown ablation axis '" + s + "'");
}

struct AblationRow {
    std::string label;
    MetricReport cam_report;
    double zp_recall = 0.0;
};

// One full train+eval per grid point, constant seed everywhere.
inline std::vector<AblationRow> ablate(const ExperimentConfig& base_cfg, AblationAxis axis,
                                       const fs::path& out_dir, bool quiet = true) {
    std::vector<std::pair<std::string, ExperimentConfig>> points;
    switch (axis) {
        case AblationAxis::Alpha:
            for (double a : base_cfg.alpha_grid) {
                auto c = base_cfg;
                c.sim.alpha = a;
                points.push_back({"alpha=" + std::to_string(a).substr(0, 4), c});
            }
            break;
        case AblationAxis::Beta:
            for (double b : base_cfg.beta_grid) {
                auto c = base_cfg;
                c.sim.beta = b;
                points.push_back({"beta=" + std::to_string(b).substr(0, 4), c});
            }
            break;
        case AblationAxis::DistanceMode: {
            // cosine-only (alpha=1), distance-only (alpha=0), blended
            auto c1 = base_cfg;
            c1.sim.alpha = 1.0;
            auto c2 = base_cfg;
            c2.sim.alpha = 0.0;
            auto c3 = base_cfg;
            points.push_back({"cos-only", c1});
            points.push_back({"d-only", c2});
            points.push_back({"d+cos", c3});
            break;
        }
        case AblationAxis::PairOpt: {
            auto with = base_cfg;
            with.optimize_pairs = true;
            auto without = base_cfg;
            without.optimize_pairs = false;
            points.push_back({"with-P-opt", with});
            points.push_back({"without-P-opt", without});
            break;
        }
    }
    if (points.empty()) throw ConfigError("ablation grid is empty");

    std::vector<AblationRow> rows;
    int idx = 0;
    for (auto& [label, cfg] : points) {
        auto res = run_pipeline(cfg, out_dir / ("point_" + std::to_string(idx++)), quiet);
        AblationRow row;
        row.label = label;
        row.zp_recall = res.zp_recall;
        for (const auto& r : res.reports)
            if (r.system == "camodule") row.cam_report = r;
        rows.push_back(std::move(row));
    }

    json sweep = json::array();
    for (const auto& r : rows) {
        json j = metric_report_to_json(r.cam_report);
        j["label"] = r.label;
        j["zpR@"] = r.zp_recall;
        sweep.push_back(std::move(j));
    }
    write_file((out_dir / "sweep.json").string(), sweep.dump(1) + "\n");
    return rows;
}

}  // namespace sga
