#pragma once

#include <algorithm>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgadjust/camodule.hpp"

namespace sga {

// PredCls ranking: per gold pair occurrence, the argmax predicate and its
// softmax score (graph-constraint style: one prediction per pair position).
struct RankedPrediction {
    std::string scene_id;
    int position = 0;  // gold pair position within the scene
    int subject_cat = 0;
    int object_cat = 0;
    int predicate_cat = 0;
    double score = 0.0;
};

struct ScoredScene {
    std::string scene_id;
    std::vector<Instance> gold;               // in position order
    std::vector<RankedPrediction> ranked;     // sorted by score desc, ties by position
};

// A scoring system maps a scene's gold pairs to adjusted logit rows.
using LogitsProvider =
    std::function<std::vector<std::vector<double>>(const Scene&)>;

inline ScoredScene rank_scene(const Scene& scene,
                              const std::vector<std::vector<double>>& adjusted_logits) {
    if (adjusted_logits.size() != scene.instances.size())
        throw ShapeError("rank_scene: one logit row per gold pair required");
    ScoredScene out;
    out.scene_id = scene.scene_id;
    out.gold = scene.instances;
    for (std::size_t i = 0; i < scene.instances.size(); ++i) {
        const auto& row = adjusted_logits[i];
        auto probs = softmax(row);
        int arg = 0;
        for (std::size_t k = 1; k < probs.size(); ++k)
            if (probs[k] > probs[static_cast<std::size_t>(arg)]) arg = static_cast<int>(k);
        RankedPrediction rp;
        rp.scene_id = scene.scene_id;
        rp.position = static_cast<int>(i);
        rp.subject_cat = scene.instances[i].subject_cat;
        rp.object_cat = scene.instances[i].object_cat;
        rp.predicate_cat = arg;
        rp.score = probs[static_cast<std::size_t>(arg)];
        out.ranked.push_back(rp);
    }
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const RankedPrediction& a, const RankedPrediction& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.position < b.position;
                     });
    return out;
}

inline std::vector<ScoredScene> score_dataset(const Dataset& data, const LogitsProvider& provider) {
    std::vector<ScoredScene> out;
    out.reserve(data.scenes.size());
    for (const auto& s : data.scenes) out.push_back(rank_scene(s, provider(s)));
    return out;
}

// R@K: per-scene fraction of gold triplets matched in the top K, averaged
// over scenes. A prediction matches the gold at its own pair position.
inline double recall_at_k(const std::vector<ScoredScene>& scenes, int k) {
    if (k < 1) throw DomainError("recall_at_k: K must be >= 1");
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& sc : scenes) {
        if (sc.gold.empty()) continue;
        std::size_t hits = 0;
        const auto top = std::min<std::size_t>(static_cast<std::size_t>(k), sc.ranked.size());
        for (std::size_t r = 0; r < top; ++r) {
            const auto& p = sc.ranked[r];
            if (p.predicate_cat == sc.gold[static_cast<std::size_t>(p.position)].predicate_cat) ++hits;
        }
        total += static_cast<double>(hits) / static_cast<double>(sc.gold.size());
        ++counted;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
}

// Per-predicate recalls pooled over scenes; mR@K is their unweighted mean
// over predicates that appear in gold.
inline std::vector<double> per_predicate_recall(const std::vector<ScoredScene>& scenes, int k,
                                                int n_predicates) {
    if (k < 1) throw DomainError("per_predicate_recall: K must be >= 1");
    std::vector<std::int64_t> gold_count(static_cast<std::size_t>(n_predicates), 0);
    std::vector<std::int64_t> hit_count(static_cast<std::size_t>(n_predicates), 0);
    for (const auto& sc : scenes) {
        for (const auto& g : sc.gold) gold_count[static_cast<std::size_t>(g.predicate_cat)] += 1;
        const auto top = std::min<std::size_t>(static_cast<std::size_t>(k), sc.ranked.size());
        for (std::size_t r = 0; r < top; ++r) {
            const auto& p = sc.ranked[r];
            int gold_pred = sc.gold[static_cast<std::size_t>(p.position)].predicate_cat;
            if (p.predicate_cat == gold_pred) hit_count[static_cast<std::size_t>(gold_pred)] += 1;
        }
    }
    std::vector<double> recalls(static_cast<std::size_t>(n_predicates), -1.0);  // -1: absent in gold
    for (int p = 0; p < n_predicates; ++p)
        if (gold_count[static_cast<std::size_t>(p)] > 0)
            recalls[static_cast<std::size_t>(p)] =
                static_cast<double>(hit_count[static_cast<std::size_t>(p)]) /
                static_cast<double>(gold_count[static_cast<std::size_t>(p)]);
    return recalls;
}

inline double mean_recall_at_k(const std::vector<ScoredScene>& scenes, int k, int n_predicates) {
    auto recalls = per_predicate_recall(scenes, k, n_predicates);
    double sum = 0.0;
    int present = 0;
    for (double r : recalls)
        if (r >= 0.0) {
            sum += r;
            ++present;
        }
    return present ? sum / present : 0.0;
}

// zR@K: recall over gold triplets whose type is in the zero-shot manifest;
// scenes without zero-shot gold are skipped.
inline double zero_shot_recall_at_k(const std::vector<ScoredScene>& scenes,
                                    const ZeroShotManifest& manifest, int k) {
    if (k < 1) throw DomainError("zero_shot_recall_at_k: K must be >= 1");
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& sc : scenes) {
        std::size_t zs_gold = 0;
        for (const auto& g : sc.gold)
            if (manifest.zero_shot_triplets.count({g.subject_cat, g.predicate_cat, g.object_cat}))
                ++zs_gold;
        if (zs_gold == 0) continue;
        std::size_t hits = 0;
        const auto top = std::min<std::size_t>(static_cast<std::size_t>(k), sc.ranked.size());
        for (std::size_t r = 0; r < top; ++r) {
            const auto& p = sc.ranked[r];
            const auto& g = sc.gold[static_cast<std::size_t>(p.position)];
            if (p.predicate_cat == g.predicate_cat &&
                manifest.zero_shot_triplets.count({g.subject_cat, g.predicate_cat, g.object_cat}))
                ++hits;
        }
        total += static_cast<double>(hits) / static_cast<double>(zs_gold);
        ++counted;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
}

struct MetricReport {
    std::string system;
    std::vector<int> k_values{20, 50, 100};
    std::map<int, double> recall;           // R@K
    std::map<int, double> mean_recall;      // mR@K
    std::map<int, double> mr;               // MR@K = (R@K + mR@K) / 2
    std::map<int, double> zero_shot_recall; // zR@K
    std::map<int, std::vector<double>> per_predicate;  // -1 marks absent predicates
    double avg_mr_delta = 0.0;   // mean of mR over all Ks
    double avg_mr_diamond = 0.0; // mean of mR over the upper two Ks
    double zp_recall = -1.0;     // zpR@, -1 when not evaluated
};

inline MetricReport build_metric_report(const std::string& system,
                                        const std::vector<ScoredScene>& scenes,
                                        const ZeroShotManifest& manifest, int n_predicates,
                                        const std::vector<int>& k_values = {20, 50, 100}) {
    MetricReport rep;
    rep.system = system;
    rep.k_values = k_values;
    for (int k : k_values) {
        rep.recall[k] = recall_at_k(scenes, k);
        rep.mean_recall[k] = mean_recall_at_k(scenes, k, n_predicates);
        rep.mr[k] = (rep.recall[k] + rep.mean_recall[k]) / 2.0;
        rep.zero_shot_recall[k] = zero_shot_recall_at_k(scenes, manifest, k);
        rep.per_predicate[k] = per_predicate_recall(scenes, k, n_predicates);
    }
    double sum_all = 0.0;
    for (int k : k_values) sum_all += rep.mean_recall[k];
    rep.avg_mr_delta = sum_all / static_cast<double>(k_values.size());
    if (k_values.size() >= 2) {
        double sum_upper = 0.0;
        for (std::size_t i = 1; i < k_values.size(); ++i) sum_upper += rep.mean_recall[k_values[i]];
        rep.avg_mr_diamond = sum_upper / static_cast<double>(k_values.size() - 1);
    } else {
        rep.avg_mr_diamond = rep.avg_mr_delta;
    }
    return rep;
}

inline json metric_report_to_json(const MetricReport& r) {
    json j;
    j["system"] = r.system;
    j["k_values"] = r.k_values;
    for (int k : r.k_values) {
        std::string ks = std::to_string(k);
        j["R@" + ks] = r.recall.at(k);
        j["mR@" + ks] = r.mean_recall.at(k);
        j["MR@" + ks] = r.mr.at(k);
        j["zR@" + ks] = r.zero_shot_recall.at(k);
        j["per_predicate@" + ks] = r.per_predicate.at(k);
    }
    j["AVG_mR_delta"] = r.avg_mr_delta;
    j["AVG_mR_diamond"] = r.avg_mr_diamond;
    if (r.zp_recall >= 0.0) j["zpR@"] = r.zp_recall;
    return j;
}

// Side-by-side text table in the familiar mR@20/50/100 column layout.
inline std::string comparison_table(const std::vector<MetricReport>& reports) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << std::left << std::setw(16) << "system";
    if (!reports.empty())
        for (int k : reports.front().k_values)
            out << std::right << std::setw(8) << ("R@" + std::to_string(k)) << std::setw(8)
                << ("mR@" + std::to_string(k)) << std::setw(8) << ("MR@" + std::to_string(k))
                << std::setw(8) << ("zR@" + std::to_string(k));
    out << std::right << std::setw(9) << "AVGmR" << "\n";
    for (const auto& r : reports) {
        out << std::left << std::setw(16) << r.system;
        for (int k : r.k_values)
            out << std::right << std::setw(8) << 100.0 * r.recall.at(k) << std::setw(8)
                << 100.0 * r.mean_recall.at(k) << std::setw(8) << 100.0 * r.mr.at(k)
                << std::setw(8) << 100.0 * r.zero_shot_recall.at(k);
        out << std::right << std::setw(9) << 100.0 * r.avg_mr_delta << "\n";
    }
    return out.str();
}

}  // namespace sga
