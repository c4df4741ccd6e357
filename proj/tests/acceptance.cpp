// Acceptance suite: one pass/fail line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <vector>

#include "sgadjust/pipeline.hpp"

using namespace sga;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", idx, name,
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!pass) ++failures;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

// ---- 1: distribution extraction vs a single-pass counting oracle ----------

bool check_distributions() {
    auto t0 = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 50; ++trial) {
        SynthConfig cfg;
        cfg.n_objects = 6 + trial % 10;
        cfg.n_predicates = 3 + trial % 5;
        cfg.n_scenes = 40 + 7 * (trial % 13);
        cfg.affinity_clusters = 1 + trial % 3;
        cfg.seed = 1000 + static_cast<std::uint64_t>(trial);
        auto ds = generate_synthetic(cfg);
        if (ds.instance_count() > 1000) return false;

        // independent single pass
        std::map<int, std::int64_t> slots, preds;
        std::map<std::pair<int, int>, std::int64_t> pairs;
        std::int64_t total = 0;
        for (const auto& in : ds.all_instances()) {
            slots[in.subject_cat]++;
            slots[in.object_cat]++;
            pairs[{in.subject_cat, in.object_cat}]++;
            preds[in.predicate_cat]++;
            ++total;
        }
        auto slot = [&](int i) { return slots.count(i) ? slots.at(i) : 0; };
        auto pair_n = [&](int i, int j) {
            return pairs.count({i, j}) ? pairs.at({i, j}) : 0;
        };

        auto d = extract_distributions(ds);
        if (d.counts.total_instances != total) return false;
        for (int i = 0; i < d.n_objects(); ++i) {
            if (d.counts.object_slots[static_cast<std::size_t>(i)] != slot(i)) return false;
            if (std::abs(d.O[static_cast<std::size_t>(i)] -
                         static_cast<double>(slot(i)) / (2.0 * total)) > 1e-12)
                return false;
            for (int j = 0; j < d.n_objects(); ++j) {
                if (d.counts.ordered_pairs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] !=
                    pair_n(i, j))
                    return false;
                double c = i == j ? (slot(i) > 0 ? 2.0 * pair_n(i, i) / slot(i) : 0.0)
                                  : (slot(i) + slot(j) > 0
                                         ? static_cast<double>(pair_n(i, j) + pair_n(j, i)) /
                                               (slot(i) + slot(j))
                                         : 0.0);
                if (std::abs(d.C[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - c) >
                    1e-12)
                    return false;
                if (std::abs(d.P[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
                             static_cast<double>(pair_n(i, j)) / total) > 1e-12)
                    return false;
            }
        }
        for (int k = 0; k < d.n_predicates(); ++k) {
            std::int64_t pc = preds.count(k) ? preds.at(k) : 0;
            if (std::abs(d.R[static_cast<std::size_t>(k)] - static_cast<double>(pc) / total) >
                1e-12)
                return false;
        }
    }
    return elapsed_s(t0) < 5.0;
}

// ---- 2: finite-difference check of the training loss ----------------------

bool check_gradients(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    const int no = 4, nr = 5;
    SynthConfig sc;
    sc.n_objects = no;
    sc.n_predicates = nr;
    sc.n_scenes = 10;
    sc.affinity_clusters = 2;
    sc.seed = 31;
    auto ds = generate_synthetic(sc);
    auto dists = extract_distributions(ds);

    CAModuleConfig mc;
    mc.e_dim = 8;
    mc.n_heads = 2;
    mc.dropout = 0.0;
    auto params = init_camodule(no, nr, mc, 32);

    auto all = ds.all_instances();
    std::vector<Instance> batch(all.begin(), all.begin() + 3);
    std::vector<int> labels;
    for (const auto& in : batch) labels.push_back(in.predicate_cat);
    auto sub = batch_subdistributions(dists, batch);
    Tensor logits({3, nr});
    Rng lrng(33);
    for (auto& x : logits.data) x = lrng.normal();

    auto loss_of = [&](bool want_grads, std::vector<double>* grads) {
        Tape tape;
        auto vars = CAModuleVars::leaf(tape, params, true);
        auto factors = camodule_forward_on_tape(tape, vars, sub, mc, false, nullptr);
        auto loss = tape.cross_entropy_mean(tape.mul(tape.leaf(logits), factors), labels);
        if (want_grads) {
            tape.backward(loss);
            std::vector<Tape::NodeId> ids = {vars.w_o, vars.b_o, vars.w_c, vars.b_c, vars.w_p,
                                             vars.b_p, vars.w_r, vars.b_r, vars.out_w, vars.out_b};
            for (auto id : vars.t_oc.ids()) ids.push_back(id);
            for (auto id : vars.t_ocp.ids()) ids.push_back(id);
            for (auto id : vars.t_cppr.ids()) ids.push_back(id);
            for (auto id : ids)
                for (double g : tape.grad(id).data) grads->push_back(g);
        }
        return tape.value(loss).data[0];
    };

    std::vector<double> analytic;
    loss_of(true, &analytic);
    std::vector<double*> ptrs;
    for (auto& [name, t] : params.named_tensors())
        for (auto& v : t->data) ptrs.push_back(&v);
    double err = grad_check([&]() { return loss_of(false, nullptr); },
                            [&]() { return analytic; }, ptrs, 1e-5);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max relative error %.3g over %zu parameters, %.1fs", err,
                  ptrs.size(), elapsed_s(t0));
    detail = buf;
    return err <= 1e-4 && elapsed_s(t0) < 60.0;
}

// ---- shared pipeline runner for the directional criteria -------------------

struct RunMetrics {
    double base_r50 = 0.0, base_mr50 = 0.0;
    double vanilla_mr50 = 0.0;
    double cam_r50 = 0.0, cam_mr50 = 0.0, cam_zr50 = 0.0;
    double zp = 0.0;
};

RunMetrics run_once(const ExperimentConfig& cfg, const fs::path& dir) {
    auto res = run_pipeline(cfg, dir);
    RunMetrics m;
    for (const auto& r : res.reports) {
        if (r.system == "base") {
            m.base_r50 = r.recall.at(50);
            m.base_mr50 = r.mean_recall.at(50);
        } else if (r.system == "vanilla") {
            m.vanilla_mr50 = r.mean_recall.at(50);
        } else {
            m.cam_r50 = r.recall.at(50);
            m.cam_mr50 = r.mean_recall.at(50);
            m.cam_zr50 = r.zero_shot_recall.at(50);
        }
    }
    m.zp = res.zp_recall;
    return m;
}

ExperimentConfig directional_config() {
    ExperimentConfig cfg;  // synth defaults: 20 objects, 10 predicates, 500 scenes
    cfg.cam.e_dim = 32;
    cfg.cam.n_heads = 4;
    cfg.cam.dropout = 0.0;
    cfg.cam.adjust_mode = AdjustMode::Softplus;
    cfg.cam_train.epochs = 150;
    cfg.cam_train.learning_rate = 0.02;
    return cfg;
}

// ---- 3: debiasing direction ------------------------------------------------

bool check_debias(std::string& detail) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> mr_gain, r_drop;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        auto cfg = directional_config();
        cfg.seed = s;
        auto m = run_once(cfg, temp_dir("sga_acc3_" + std::to_string(s)));
        mr_gain.push_back(100.0 * (m.cam_mr50 - m.base_mr50));
        r_drop.push_back(100.0 * (m.base_r50 - m.cam_r50));
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "median mR@50 gain %.1f pts, median R@50 drop %.1f pts, %.0fs",
                  median(mr_gain), median(r_drop), elapsed_s(t0));
    detail = buf;
    return median(mr_gain) >= 5.0 && median(r_drop) <= 10.0 && elapsed_s(t0) < 600.0;
}

// ---- 4: vanilla-baseline separation ----------------------------------------

bool check_vanilla_separation(std::string& detail) {
    std::vector<double> margin;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        auto cfg = directional_config();
        cfg.synth.pair_preference = 30.0;  // strong within-predicate pair skew
        cfg.seed = 50 + s;
        auto m = run_once(cfg, temp_dir("sga_acc4_" + std::to_string(s)));
        margin.push_back(100.0 * (m.cam_mr50 - m.vanilla_mr50));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "median mR@50 margin over vanilla %.1f pts", median(margin));
    detail = buf;
    return median(margin) > 0.0;
}

// ---- 5: zero-shot machinery --------------------------------------------------

bool check_zero_shot(std::string& detail) {
    // (a) zpR@ monotone in beta, 0 at beta = 1 with pairwise-distinct vectors
    SynthConfig sc;
    sc.seed = 71;
    auto ds = generate_synthetic(sc);
    auto sp = split_train_test(ds, 0.3, 72);
    auto store = generate_clustered_vectors(ds.vocabulary, sc.affinity_clusters, 16, 73);
    double prev = 2.0;
    bool monotone = true;
    double at_one = -1.0;
    for (int i = 1; i <= 10; ++i) {
        SimilarityParams p;
        p.beta = 0.1 * i;
        auto inferred = infer_zero_shot_pairs(sp.train.pair_types(), ds.vocabulary, store, p);
        double zp = sp.manifest.zero_shot_pairs.empty()
                        ? 1.0
                        : zero_shot_pair_recall(inferred, sp.manifest);
        if (zp > prev + 1e-15) monotone = false;
        prev = zp;
        if (i == 10) at_one = zp;
    }
    bool a_ok = monotone && at_one == 0.0 && !sp.manifest.zero_shot_pairs.empty();

    // (b) zR@50 with P optimization >= without, median over 5 seeds
    std::vector<double> with_opt, without_opt;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        ExperimentConfig cfg;
        cfg.synth.n_objects = 12;
        cfg.synth.n_predicates = 6;
        cfg.synth.n_scenes = 150;
        cfg.synth.zero_shot_fraction = 0.08;
        cfg.cam.e_dim = 16;
        cfg.cam.n_heads = 2;
        cfg.cam.dropout = 0.0;
        cfg.cam.adjust_mode = AdjustMode::Softplus;
        cfg.cam_train.epochs = 15;
        cfg.cam_train.learning_rate = 0.05;
        cfg.seed = 80 + s;
        cfg.optimize_pairs = true;
        with_opt.push_back(run_once(cfg, temp_dir("sga_acc5w_" + std::to_string(s))).cam_zr50);
        cfg.optimize_pairs = false;
        without_opt.push_back(run_once(cfg, temp_dir("sga_acc5o_" + std::to_string(s))).cam_zr50);
    }
    bool b_ok = median(with_opt) >= median(without_opt);
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "(a) monotone=%d zpR@(beta=1)=%.2f; (b) median zR@50 %.3f with vs %.3f without",
                  monotone ? 1 : 0, at_one, median(with_opt), median(without_opt));
    detail = buf;
    return a_ok && b_ok;
}

// ---- 6: similarity closed form ----------------------------------------------

bool check_similarity() {
    std::vector<double> u = {1.0, 0.0, 0.0}, w = {0.0, 1.0, 0.0};
    for (double a : {0.0, 0.25, 0.5, 0.7, 1.0})
        if (std::abs(similarity(u, u, a) - 1.0) > 1e-12) return false;
    std::vector<double> v1 = {0.3, -1.2, 2.0}, v2 = {1.5, 0.4, -0.7};
    double dot = 0.3 * 1.5 - 1.2 * 0.4 - 2.0 * 0.7;
    double cosine = dot / (std::sqrt(0.09 + 1.44 + 4.0) * std::sqrt(2.25 + 0.16 + 0.49));
    if (std::abs(similarity(v1, v2, 1.0) - cosine) > 1e-12) return false;
    double expect = 0.3 * (1.0 / (1.0 + std::sqrt(2.0)));
    return std::abs(similarity(u, w, 0.7) - expect) <= 1e-12;
}

// ---- 7: pipeline determinism --------------------------------------------------

bool check_determinism() {
    ExperimentConfig cfg;
    cfg.synth.n_objects = 8;
    cfg.synth.n_predicates = 5;
    cfg.synth.n_scenes = 50;
    cfg.cam.e_dim = 8;
    cfg.cam.n_heads = 2;
    cfg.cam.adjust_mode = AdjustMode::Softplus;
    cfg.cam_train.epochs = 3;
    cfg.k_values = {5, 10, 20};
    cfg.seed = 91;
    auto d1 = temp_dir("sga_acc7_a");
    auto d2 = temp_dir("sga_acc7_b");
    run_pipeline(cfg, d1);
    run_pipeline(cfg, d2);
    return read_file((d1 / "report.json").string()) == read_file((d2 / "report.json").string());
}

// ---- 8: metric suite self-consistency ------------------------------------------

bool check_metrics() {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        SynthConfig sc;
        sc.n_objects = 8;
        sc.n_predicates = 5;
        sc.n_scenes = 40;
        sc.seed = 200 + trial;
        auto ds = generate_synthetic(sc);
        auto sp = split_train_test(ds, 0.3, 300 + trial);

        // score the test side with arbitrary deterministic logits
        Rng rng(400 + trial);
        std::vector<ScoredScene> scenes;
        for (const auto& s : sp.test.scenes) {
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < s.instances.size(); ++i) {
                std::vector<double> r(5);
                for (auto& x : r) x = rng.normal();
                rows.push_back(r);
            }
            scenes.push_back(rank_scene(s, rows));
        }
        auto rep = build_metric_report("t", scenes, sp.manifest, 5, {1, 2, 5, 20});

        double prev = -1.0;
        for (int k : rep.k_values) {
            if (rep.recall.at(k) < prev - 1e-15) return false;
            prev = rep.recall.at(k);
            if (rep.mr.at(k) != (rep.recall.at(k) + rep.mean_recall.at(k)) / 2.0) return false;

            // brute-force mR recomputation
            std::map<int, std::int64_t> gold, hit;
            for (const auto& scn : scenes) {
                for (const auto& g : scn.gold) gold[g.predicate_cat]++;
                for (std::size_t r = 0;
                     r < std::min<std::size_t>(static_cast<std::size_t>(k), scn.ranked.size()); ++r) {
                    const auto& p = scn.ranked[r];
                    int gp = scn.gold[static_cast<std::size_t>(p.position)].predicate_cat;
                    if (p.predicate_cat == gp) hit[gp]++;
                }
            }
            double sum = 0.0;
            int present = 0;
            for (auto& [pred, count] : gold) {
                sum += static_cast<double>(hit.count(pred) ? hit.at(pred) : 0) /
                       static_cast<double>(count);
                ++present;
            }
            if (std::abs(rep.mean_recall.at(k) - sum / present) > 1e-12) return false;
        }
    }
    return true;
}

}  // namespace

int main() {
    std::string detail;

    report(1, "distribution extraction matches the counting oracle on 50 corpora",
           check_distributions());

    detail.clear();
    report(2, "end-to-end finite-difference gradient check (E=8)", check_gradients(detail), detail);

    detail.clear();
    report(3, "adjusted mR@50 beats base by >= 5 pts, R@50 drop <= 10 pts (median, 5 seeds)",
           check_debias(detail), detail);

    detail.clear();
    report(4, "triplet-level adjustment beats the inverse-frequency baseline (median, 5 seeds)",
           check_vanilla_separation(detail), detail);

    detail.clear();
    report(5, "zero-shot: zpR@ monotone in beta, 0 at beta=1; P-optimization helps zR@50",
           check_zero_shot(detail), detail);

    report(6, "similarity closed form to 1e-12", check_similarity());

    report(7, "identical config + seed reproduces report.json byte-for-byte", check_determinism());

    report(8, "metric suite self-consistency on 20 random splits", check_metrics());

    std::printf("%d of 8 criteria passed\n", 8 - failures);
    return failures;
}
