// Single binary driving the whole experiment: data generation, splitting,
// distribution extraction, base training, adjustment-module training,
// zero-shot pair inference, evaluation, and ablation sweeps.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sgadjust/pipeline.hpp"

using namespace sga;

namespace {

ExperimentConfig load_config(const std::string& path, std::uint64_t seed_override,
                             bool have_seed) {
    ExperimentConfig cfg;
    if (!path.empty()) cfg = experiment_config_from_json(load_json_file(path));
    if (have_seed) cfg.seed = seed_override;
    return cfg;
}

void emit(const json& j, const std::string& out_path, bool quiet) {
    if (!out_path.empty())
        write_file(out_path, j.dump(1) + "\n");
    else if (!quiet)
        std::cout << j.dump(1) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scene-graph relationship classification with causal logit adjustment"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    bool have_seed = false;
    std::string config_path;
    std::string out_dir = "run";
    bool quiet = false;
    app.add_option("--seed", seed, "run seed")->each([&](const std::string&) { have_seed = true; });
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--out-dir", out_dir, "artifact directory");
    app.add_flag("--quiet", quiet, "suppress progress output");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    std::string gen_out = "data.json";
    gen->add_option("--out", gen_out, "output dataset path");

    // split
    auto* split_cmd = app.add_subcommand("split", "split a dataset into train/test scenes");
    std::string split_data, split_train = "train.json", split_test = "test.json",
                split_manifest = "manifest.json";
    double split_fraction = 0.3;
    split_cmd->add_option("--data", split_data, "dataset path")->required();
    split_cmd->add_option("--test-fraction", split_fraction, "test scene fraction");
    split_cmd->add_option("--train-out", split_train, "train split path");
    split_cmd->add_option("--test-out", split_test, "test split path");
    split_cmd->add_option("--manifest-out", split_manifest, "zero-shot manifest path");

    // extract-dist
    auto* dist_cmd = app.add_subcommand("extract-dist", "extract the four corpus distributions");
    std::string dist_data, dist_out = "dist.json";
    dist_cmd->add_option("--data", dist_data, "train split path")->required();
    dist_cmd->add_option("--out", dist_out, "distribution file path");

    // train-base
    auto* base_cmd = app.add_subcommand("train-base", "train the frozen base classifier");
    std::string base_data, base_out = "base.json";
    base_cmd->add_option("--data", base_data, "train split path")->required();
    base_cmd->add_option("--out", base_out, "checkpoint path");

    // train-cam
    auto* cam_cmd = app.add_subcommand("train-cam", "train the adjustment module");
    std::string cam_data, cam_base, cam_dist, cam_out = "cam.json";
    cam_cmd->add_option("--data", cam_data, "train split path")->required();
    cam_cmd->add_option("--base", cam_base, "base checkpoint")->required();
    cam_cmd->add_option("--dist", cam_dist, "distribution file")->required();
    cam_cmd->add_option("--out", cam_out, "checkpoint path");

    // export-adjust
    auto* adj_cmd = app.add_subcommand("export-adjust", "materialize the adjustment tensor");
    std::string adj_cam, adj_dist, adj_out = "adjust.json";
    adj_cmd->add_option("--cam", adj_cam, "module checkpoint")->required();
    adj_cmd->add_option("--dist", adj_dist, "distribution file")->required();
    adj_cmd->add_option("--out", adj_out, "tensor output path");

    // gen-vectors
    auto* vec_cmd = app.add_subcommand("gen-vectors", "emit synthetic clustered word vectors");
    std::string vec_data, vec_out = "vectors.txt";
    int vec_dim = 16, vec_clusters = 4;
    vec_cmd->add_option("--data", vec_data, "dataset path (for the vocabulary)")->required();
    vec_cmd->add_option("--dim", vec_dim, "vector width");
    vec_cmd->add_option("--clusters", vec_clusters, "cluster count");
    vec_cmd->add_option("--out", vec_out, "vector file path");

    // infer-pairs
    auto* pairs_cmd = app.add_subcommand("infer-pairs", "infer zero-shot object pairs");
    std::string pairs_data, pairs_vectors, pairs_out = "pairs.json";
    double pairs_alpha = 0.7, pairs_beta = 0.4;
    pairs_cmd->add_option("--data", pairs_data, "train split path")->required();
    pairs_cmd->add_option("--vectors", pairs_vectors, "word vector file")->required();
    pairs_cmd->add_option("--alpha", pairs_alpha, "similarity blend weight");
    pairs_cmd->add_option("--beta", pairs_beta, "similarity threshold");
    pairs_cmd->add_option("--out", pairs_out, "inferred pair output path");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score systems on a test split");
    std::string eval_data, eval_manifest, eval_base, eval_cam, eval_dist,
        eval_out = "report.json";
    bool eval_vanilla = false;
    std::string eval_k = "20,50,100";
    eval_cmd->add_option("--data", eval_data, "test split path")->required();
    eval_cmd->add_option("--split", eval_manifest, "zero-shot manifest path")->required();
    eval_cmd->add_option("--base", eval_base, "base checkpoint")->required();
    eval_cmd->add_option("--cam", eval_cam, "adjustment tensor (export-adjust output)");
    eval_cmd->add_option("--dist", eval_dist, "distribution file (needed with --vanilla)");
    eval_cmd->add_flag("--vanilla", eval_vanilla, "include the inverse-frequency baseline");
    eval_cmd->add_option("--k", eval_k, "comma-separated K cutoffs");
    eval_cmd->add_option("--out", eval_out, "report path");

    // run / ablate / report
    auto* run_cmd = app.add_subcommand("run", "full pipeline: data through report");
    auto* ablate_cmd = app.add_subcommand("ablate", "grid sweep over one ablation axis");
    std::string ablate_axis = "alpha";
    ablate_cmd->add_option("--axis", ablate_axis, "alpha|beta|distance_mode|pair_opt");
    auto* report_cmd = app.add_subcommand("report", "print the comparison table of a finished run");
    std::string report_path = "run/report.json";
    report_cmd->add_option("--report", report_path, "report.json path");

    // Let the global options (--seed, --out-dir, ...) also appear after a
    // subcommand name.
    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        ExperimentConfig cfg = load_config(config_path, seed, have_seed);

        if (gen->parsed()) {
            SynthConfig sc = cfg.synth;
            sc.seed = cfg.seed;
            auto ds = generate_synthetic(sc);
            save_dataset(ds, gen_out);
            if (!quiet)
                std::cout << "wrote " << gen_out << " (" << ds.scenes.size() << " scenes, "
                          << ds.instance_count() << " instances)\n";
        } else if (split_cmd->parsed()) {
            auto ds = load_dataset(split_data);
            auto sp = split_train_test(ds, split_fraction, cfg.seed);
            save_dataset(sp.train, split_train);
            save_dataset(sp.test, split_test);
            write_file(split_manifest, manifest_to_json(sp.manifest).dump(1) + "\n");
            if (!quiet)
                std::cout << "train " << sp.train.scenes.size() << " scenes, test "
                          << sp.test.scenes.size() << " scenes, "
                          << sp.manifest.zero_shot_pairs.size() << " zero-shot pairs\n";
        } else if (dist_cmd->parsed()) {
            auto ds = load_dataset(dist_data);
            emit(distributions_to_json(extract_distributions(ds)), dist_out, quiet);
        } else if (base_cmd->parsed()) {
            auto ds = load_dataset(base_data);
            BaseTrainConfig bc = cfg.base_train;
            bc.seed = cfg.seed;
            emit(base_model_to_json(train_base(ds, bc)), base_out, quiet);
        } else if (cam_cmd->parsed()) {
            auto ds = load_dataset(cam_data);
            auto base = base_model_from_json(load_json_file(cam_base));
            auto dists = distributions_from_json(load_json_file(cam_dist));
            TrainConfig tc = cfg.cam_train;
            tc.seed = cfg.seed;
            auto init = init_camodule(dists.n_objects(), dists.n_predicates(), cfg.cam, cfg.seed);
            auto res = train_camodule(base, dists, ds, tc, std::move(init));
            emit(camodule_to_json(res.params), cam_out, quiet);
            if (!quiet)
                std::cout << "final epoch loss " << res.loss_curve.back() << "\n";
        } else if (adj_cmd->parsed()) {
            auto cam = camodule_from_json(load_json_file(adj_cam));
            auto dists = distributions_from_json(load_json_file(adj_dist));
            emit(adjustment_tensor_to_json(materialize_adjustment_tensor(cam, dists)), adj_out,
                 quiet);
        } else if (vec_cmd->parsed()) {
            auto ds = load_dataset(vec_data);
            auto store = generate_clustered_vectors(ds.vocabulary, vec_clusters, vec_dim, cfg.seed);
            save_word_vectors(store, vec_out);
        } else if (pairs_cmd->parsed()) {
            auto ds = load_dataset(pairs_data);
            auto store = load_word_vectors(pairs_vectors, ds.vocabulary);
            SimilarityParams sp{pairs_alpha, pairs_beta};
            auto inferred = infer_zero_shot_pairs(ds.pair_types(), ds.vocabulary, store, sp);
            emit(json{{"pairs", inferred_pairs_to_json(inferred)}}, pairs_out, quiet);
        } else if (eval_cmd->parsed()) {
            auto ds = load_dataset(eval_data);
            auto manifest = manifest_from_json(load_json_file(eval_manifest));
            auto base = base_model_from_json(load_json_file(eval_base));
            std::vector<int> ks;
            {
                std::istringstream s(eval_k);
                std::string tok;
                while (std::getline(s, tok, ',')) ks.push_back(std::stoi(tok));
                if (ks.empty()) throw ConfigError("--k needs at least one cutoff");
            }
            const int nr = ds.vocabulary.n_predicates();
            std::vector<MetricReport> reports;
            reports.push_back(build_metric_report(
                "base", score_dataset(ds, base_provider(base)), manifest, nr, ks));
            if (eval_vanilla) {
                if (eval_dist.empty()) throw ConfigError("--vanilla requires --dist");
                auto dists = distributions_from_json(load_json_file(eval_dist));
                auto factors = vanilla_adjustment(dists.R);
                reports.push_back(build_metric_report(
                    "vanilla", score_dataset(ds, vanilla_provider(base, factors, cfg.cam.adjust_mode)),
                    manifest, nr, ks));
            }
            AdjustmentTensor tensor;
            if (!eval_cam.empty()) {
                auto tj = load_json_file(eval_cam);
                tensor.n_objects = tj.at("n_objects").get<int>();
                tensor.n_predicates = tj.at("n_predicates").get<int>();
                for (const auto& vi : tj.at("values"))
                    for (const auto& vk : vi)
                        for (const auto& v : vk) tensor.values.push_back(v.get<double>());
                reports.push_back(build_metric_report(
                    "camodule", score_dataset(ds, cam_provider(base, tensor, cfg.cam.adjust_mode)),
                    manifest, nr, ks));
            }
            json out;
            out["systems"] = json::array();
            for (const auto& r : reports) out["systems"].push_back(metric_report_to_json(r));
            write_file(eval_out, out.dump(1) + "\n");
            std::cout << comparison_table(reports);
        } else if (run_cmd->parsed()) {
            auto res = run_pipeline(cfg, out_dir, quiet);
            std::cout << res.table;
        } else if (ablate_cmd->parsed()) {
            auto rows = ablate(cfg, ablation_axis_from_string(ablate_axis), out_dir, quiet);
            for (const auto& r : rows)
                std::printf("%-16s mR@50 %5.1f  zR@50 %5.1f  zpR@ %5.1f\n", r.label.c_str(),
                            100.0 * r.cam_report.mean_recall.at(50),
                            100.0 * r.cam_report.zero_shot_recall.at(50), 100.0 * r.zp_recall);
        } else if (report_cmd->parsed()) {
            auto j = load_json_file(report_path);
            std::vector<MetricReport> reports;
            for (const auto& sj : j.at("systems")) {
                MetricReport r;
                r.system = sj.at("system").get<std::string>();
                r.k_values = sj.at("k_values").get<std::vector<int>>();
                for (int k : r.k_values) {
                    std::string ks = std::to_string(k);
                    r.recall[k] = sj.at("R@" + ks).get<double>();
                    r.mean_recall[k] = sj.at("mR@" + ks).get<double>();
                    r.mr[k] = sj.at("MR@" + ks).get<double>();
                    r.zero_shot_recall[k] = sj.at("zR@" + ks).get<double>();
                }
                r.avg_mr_delta = sj.at("AVG_mR_delta").get<double>();
                reports.push_back(std::move(r));
            }
            std::cout << comparison_table(reports);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
