#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sgadjust/common.hpp"

namespace sga {

using json = nlohmann::json;

// Category identity is by index; names exist for reporting only.
struct Vocabulary {
    std::vector<std::string> object_names;
    std::vector<std::string> predicate_names;

    int n_objects() const { return static_cast<int>(object_names.size()); }
    int n_predicates() const { return static_cast<int>(predicate_names.size()); }

    void validate() const {
        if (n_objects() < 2 || n_predicates() < 2)
            throw ValidationError("vocabulary needs at least 2 object and 2 predicate names");
        std::set<std::string> o(object_names.begin(), object_names.end());
        std::set<std::string> p(predicate_names.begin(), predicate_names.end());
        if (static_cast<int>(o.size()) != n_objects() || static_cast<int>(p.size()) != n_predicates())
            throw ValidationError("vocabulary names must be unique");
    }
};

struct Instance {
    int subject_cat = 0;
    int predicate_cat = 0;
    int object_cat = 0;
    std::string scene_id;
};

struct Scene {
    std::string scene_id;
    std::vector<Instance> instances;
};

using Triplet = std::tuple<int, int, int>;   // (subject, predicate, object)
using Pair = std::pair<int, int>;            // ordered (subject, object)

struct Dataset {
    Vocabulary vocabulary;
    std::vector<Scene> scenes;

    std::size_t instance_count() const {
        std::size_t n = 0;
        for (const auto& s : scenes) n += s.instances.size();
        return n;
    }

    std::vector<Instance> all_instances() const {
        std::vector<Instance> out;
        out.reserve(instance_count());
        for (const auto& s : scenes)
            out.insert(out.end(), s.instances.begin(), s.instances.end());
        return out;
    }

    std::set<Triplet> triplet_types() const {
        std::set<Triplet> t;
        for (const auto& s : scenes)
            for (const auto& in : s.instances)
                t.insert({in.subject_cat, in.predicate_cat, in.object_cat});
        return t;
    }

    std::set<Pair> pair_types() const {
        std::set<Pair> p;
        for (const auto& s : scenes)
            for (const auto& in : s.instances)
                p.insert({in.subject_cat, in.object_cat});
        return p;
    }

    void validate() const {
        vocabulary.validate();
        const int no = vocabulary.n_objects();
        const int nr = vocabulary.n_predicates();
        for (const auto& s : scenes) {
            if (s.instances.empty())
                throw ValidationError("scene '" + s.scene_id + "' has no instances");
            for (std::size_t i = 0; i < s.instances.size(); ++i) {
                const auto& in = s.instances[i];
                if (in.scene_id != s.scene_id)
                    throw ValidationError("scene '" + s.scene_id + "' instance " +
                                          std::to_string(i) + " carries wrong scene id");
                if (in.subject_cat < 0 || in.subject_cat >= no || in.object_cat < 0 ||
                    in.object_cat >= no)
                    throw ValidationError("scene '" + s.scene_id + "' instance " +
                                          std::to_string(i) + ": object index out of range");
                if (in.predicate_cat < 0 || in.predicate_cat >= nr)
                    throw ValidationError("scene '" + s.scene_id + "' instance " +
                                          std::to_string(i) + ": predicate index out of range");
            }
        }
    }
};

struct SynthConfig {
    int n_objects = 20;
    int n_predicates = 10;
    int n_scenes = 500;
    double object_zipf_s = 1.0;
    double predicate_zipf_s = 1.2;
    int affinity_clusters = 4;
    double zero_shot_fraction = 0.05;
    // How strongly each ordered pair prefers its own predicate over the
    // global marginal; drives the within-predicate triplet imbalance.
    double pair_preference = 12.0;
    int min_instances_per_scene = 3;
    int max_instances_per_scene = 8;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_objects < 2 || n_predicates < 1 || n_scenes < 1)
            throw ConfigError("synth config: counts must be positive (n_objects >= 2)");
        if (object_zipf_s <= 0.0 || predicate_zipf_s <= 0.0)
            throw ConfigError("synth config: zipf exponents must be > 0");
        if (affinity_clusters < 1 || affinity_clusters > n_objects)
            throw ConfigError("synth config: affinity_clusters out of range");
        if (zero_shot_fraction < 0.0 || zero_shot_fraction >= 0.5)
            throw ConfigError("synth config: zero_shot_fraction must lie in [0, 0.5)");
        if (min_instances_per_scene < 1 || max_instances_per_scene < min_instances_per_scene)
            throw ConfigError("synth config: bad instances-per-scene range");
    }
};

struct ZeroShotManifest {
    std::set<Triplet> zero_shot_triplets;
    std::set<Pair> zero_shot_pairs;
};

inline std::vector<double> zipf_weights(int n, double s) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>(i + 1), -s);
    return w;
}

// Cluster assignment shared with the synthetic word-vector generator, so
// attribute similarity lines up with pair affinity.
inline int object_cluster(int obj, int n_clusters) { return obj % n_clusters; }

// Scenes are composed cluster-first: sample a cluster, objects within it,
// then a predicate conditioned on the ordered pair through a pair-preference
// table. The preference table is what gives triplet-level adjustment a
// signal that relationship-level adjustment cannot see.
inline Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    Dataset ds;
    for (int i = 0; i < cfg.n_objects; ++i)
        ds.vocabulary.object_names.push_back("obj" + std::to_string(i));
    for (int k = 0; k < cfg.n_predicates; ++k)
        ds.vocabulary.predicate_names.push_back("pred" + std::to_string(k));
    if (cfg.n_predicates < 2) ds.vocabulary.predicate_names.push_back("pred_pad");

    const auto obj_w = zipf_weights(cfg.n_objects, cfg.object_zipf_s);
    const auto pred_w = zipf_weights(cfg.n_predicates, cfg.predicate_zipf_s);

    // Per-cluster object weights.
    std::vector<std::vector<double>> cluster_obj_w(cfg.affinity_clusters,
                                                   std::vector<double>(cfg.n_objects, 0.0));
    std::vector<double> cluster_w(cfg.affinity_clusters, 0.0);
    for (int o = 0; o < cfg.n_objects; ++o) {
        int c = object_cluster(o, cfg.affinity_clusters);
        cluster_obj_w[c][o] = obj_w[o];
        cluster_w[c] += obj_w[o];
    }

    // Each ordered pair gets one uniformly drawn preferred predicate; the
    // Zipf marginal keeps the aggregate skewed while the preference creates
    // the within-predicate pair imbalance.
    auto preferred_predicate = [&](int i, int j) {
        Rng pair_rng(fnv1a_u64(static_cast<std::uint64_t>(i) * 100003ULL + j,
                               fnv1a_u64(cfg.seed)));
        return static_cast<int>(pair_rng.below(static_cast<std::uint64_t>(cfg.n_predicates)));
    };
    auto sample_predicate = [&](Rng& r, int i, int j) {
        int pref = preferred_predicate(i, j);
        std::vector<double> w = pred_w;
        w[pref] *= cfg.pair_preference;
        return static_cast<int>(r.categorical(w));
    };

    for (int s = 0; s < cfg.n_scenes; ++s) {
        Scene scene;
        scene.scene_id = "s" + std::to_string(s);
        int cl = static_cast<int>(rng.categorical(cluster_w));
        int n_inst = cfg.min_instances_per_scene +
                     static_cast<int>(rng.below(static_cast<std::uint64_t>(
                         cfg.max_instances_per_scene - cfg.min_instances_per_scene + 1)));
        for (int t = 0; t < n_inst; ++t) {
            // mostly within-cluster pairs; occasional global draw keeps the
            // co-occurrence matrix connected
            const auto& w_subj =
                (rng.uniform() < 0.85) ? cluster_obj_w[cl] : obj_w;
            const auto& w_obj =
                (rng.uniform() < 0.85) ? cluster_obj_w[cl] : obj_w;
            Instance in;
            in.subject_cat = static_cast<int>(rng.categorical(w_subj));
            in.object_cat = static_cast<int>(rng.categorical(w_obj));
            in.predicate_cat = sample_predicate(rng, in.subject_cat, in.object_cat);
            in.scene_id = scene.scene_id;
            scene.instances.push_back(in);
        }
        ds.scenes.push_back(std::move(scene));
    }

    // Reserve a fraction of within-cluster ordered pairs and inject each into
    // exactly one scene; after a random scene split a share of them lands
    // only in the test half and becomes genuinely zero-shot.
    if (cfg.zero_shot_fraction > 0.0) {
        std::vector<Pair> candidates;
        for (int i = 0; i < cfg.n_objects; ++i)
            for (int j = 0; j < cfg.n_objects; ++j)
                if (object_cluster(i, cfg.affinity_clusters) ==
                    object_cluster(j, cfg.affinity_clusters))
                    candidates.push_back({i, j});
        rng.shuffle(candidates);
        auto n_reserved = static_cast<std::size_t>(cfg.zero_shot_fraction *
                                                   static_cast<double>(candidates.size()));
        for (std::size_t r = 0; r < n_reserved; ++r) {
            auto [i, j] = candidates[r];
            auto& scene = ds.scenes[rng.below(ds.scenes.size())];
            Instance in;
            in.subject_cat = i;
            in.object_cat = j;
            in.predicate_cat = sample_predicate(rng, i, j);
            in.scene_id = scene.scene_id;
            scene.instances.push_back(in);
        }
    }

    ds.validate();
    return ds;
}

inline json dataset_to_json(const Dataset& ds) {
    json j;
    j["objects"] = ds.vocabulary.object_names;
    j["predicates"] = ds.vocabulary.predicate_names;
    j["scenes"] = json::array();
    for (const auto& s : ds.scenes) {
        json js;
        js["id"] = s.scene_id;
        js["triplets"] = json::array();
        for (const auto& in : s.instances)
            js["triplets"].push_back({in.subject_cat, in.predicate_cat, in.object_cat});
        j["scenes"].push_back(std::move(js));
    }
    return j;
}

inline Dataset dataset_from_json(const json& j) {
    Dataset ds;
    try {
        ds.vocabulary.object_names = j.at("objects").get<std::vector<std::string>>();
        ds.vocabulary.predicate_names = j.at("predicates").get<std::vector<std::string>>();
        for (const auto& js : j.at("scenes")) {
            Scene s;
            s.scene_id = js.at("id").get<std::string>();
            for (const auto& t : js.at("triplets")) {
                if (!t.is_array() || t.size() != 3)
                    throw ValidationError("scene '" + s.scene_id +
                                          "': triplet must be [subj, pred, obj]");
                Instance in;
                in.subject_cat = t[0].get<int>();
                in.predicate_cat = t[1].get<int>();
                in.object_cat = t[2].get<int>();
                in.scene_id = s.scene_id;
                s.instances.push_back(in);
            }
            ds.scenes.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("dataset schema violation: ") + e.what());
    }
    ds.validate();
    return ds;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write file: " + path);
    f << content;
}

inline json load_json_file(const std::string& path) {
    auto text = read_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("invalid JSON in " + path);
    return j;
}

inline Dataset load_dataset(const std::string& path) { return dataset_from_json(load_json_file(path)); }

inline void save_dataset(const Dataset& ds, const std::string& path) {
    write_file(path, dataset_to_json(ds).dump(1) + "\n");
}

struct Split {
    Dataset train;
    Dataset test;
    ZeroShotManifest manifest;
};

inline Split split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction must lie in (0, 1)");
    if (ds.scenes.size() < 2) throw ValidationError("cannot split a dataset with < 2 scenes");

    std::vector<std::size_t> order(ds.scenes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(ds.scenes.size()));
    n_test = std::clamp<std::size_t>(n_test, 1, ds.scenes.size() - 1);

    Split sp;
    sp.train.vocabulary = ds.vocabulary;
    sp.test.vocabulary = ds.vocabulary;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& scene = ds.scenes[order[i]];
        (i < n_test ? sp.test : sp.train).scenes.push_back(scene);
    }
    // keep original scene order within each side for readability
    auto by_id = [](const Scene& a, const Scene& b) { return a.scene_id < b.scene_id; };
    std::sort(sp.train.scenes.begin(), sp.train.scenes.end(), by_id);
    std::sort(sp.test.scenes.begin(), sp.test.scenes.end(), by_id);

    auto train_triplets = sp.train.triplet_types();
    auto train_pairs = sp.train.pair_types();
    for (const auto& t : sp.test.triplet_types())
        if (!train_triplets.count(t)) sp.manifest.zero_shot_triplets.insert(t);
    for (const auto& p : sp.test.pair_types())
        if (!train_pairs.count(p)) sp.manifest.zero_shot_pairs.insert(p);
    return sp;
}

inline json manifest_to_json(const ZeroShotManifest& m) {
    json j;
    j["zero_shot_triplets"] = json::array();
    for (const auto& [s, k, o] : m.zero_shot_triplets)
        j["zero_shot_triplets"].push_back({s, k, o});
    j["zero_shot_pairs"] = json::array();
    for (const auto& [s, o] : m.zero_shot_pairs) j["zero_shot_pairs"].push_back({s, o});
    return j;
}

inline ZeroShotManifest manifest_from_json(const json& j) {
    ZeroShotManifest m;
    for (const auto& t : j.at("zero_shot_triplets"))
        m.zero_shot_triplets.insert({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
    for (const auto& p : j.at("zero_shot_pairs"))
        m.zero_shot_pairs.insert({p[0].get<int>(), p[1].get<int>()});
    return m;
}

inline json synth_config_to_json(const SynthConfig& c) {
    return json{{"n_objects", c.n_objects},
                {"n_predicates", c.n_predicates},
                {"n_scenes", c.n_scenes},
                {"object_zipf_s", c.object_zipf_s},
                {"predicate_zipf_s", c.predicate_zipf_s},
                {"affinity_clusters", c.affinity_clusters},
                {"zero_shot_fraction", c.zero_shot_fraction},
                {"pair_preference", c.pair_preference},
                {"min_instances_per_scene", c.min_instances_per_scene},
                {"max_instances_per_scene", c.max_instances_per_scene},
                {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const json& j) {
    SynthConfig c;
    c.n_objects = j.value("n_objects", c.n_objects);
    c.n_predicates = j.value("n_predicates", c.n_predicates);
    c.n_scenes = j.value("n_scenes", c.n_scenes);
    c.object_zipf_s = j.value("object_zipf_s", c.object_zipf_s);
    c.predicate_zipf_s = j.value("predicate_zipf_s", c.predicate_zipf_s);
    c.affinity_clusters = j.value("affinity_clusters", c.affinity_clusters);
    c.zero_shot_fraction = j.value("zero_shot_fraction", c.zero_shot_fraction);
    c.pair_preference = j.value("pair_preference", c.pair_preference);
    c.min_instances_per_scene = j.value("min_instances_per_scene", c.min_instances_per_scene);
    c.max_instances_per_scene = j.value("max_instances_per_scene", c.max_instances_per_scene);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

}  // namespace sga
