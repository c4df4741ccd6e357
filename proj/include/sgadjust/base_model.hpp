#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sgadjust/dataset.hpp"

namespace sga {

struct InstanceKey {
    std::string scene_id;
    int position = 0;  // index of the instance within its scene

    bool operator<(const InstanceKey& o) const {
        return scene_id != o.scene_id ? scene_id < o.scene_id : position < o.position;
    }
    bool operator==(const InstanceKey& o) const {
        return scene_id == o.scene_id && position == o.position;
    }
};

struct LogitsRecord {
    InstanceKey key;
    std::vector<double> logits;
};

// The stand-in biased classifier: multinomial logistic regression over
// [one-hot(subject) + one-hot(object) + per-instance Gaussian noise].
// The noise features break score ties between instances of the same pair.
class FrozenBaseModel {
  public:
    int n_objects = 0;
    int n_predicates = 0;
    int d_noise = 4;
    double noise_sigma = 1.0;
    std::uint64_t feature_seed = 0;
    std::vector<std::vector<double>> weight;  // (2*N_o + d_noise) x N_r
    std::vector<double> bias;                 // N_r

    int feature_dim() const { return 2 * n_objects + d_noise; }

    std::vector<double> features(const Instance& in, const InstanceKey& key) const {
        std::vector<double> f(static_cast<std::size_t>(feature_dim()), 0.0);
        f[static_cast<std::size_t>(in.subject_cat)] = 1.0;
        f[static_cast<std::size_t>(n_objects + in.object_cat)] = 1.0;
        if (d_noise > 0) {
            Rng noise(fnv1a_u64(static_cast<std::uint64_t>(key.position),
                                fnv1a(key.scene_id, fnv1a_u64(feature_seed))));
            for (int d = 0; d < d_noise; ++d)
                f[static_cast<std::size_t>(2 * n_objects + d)] = noise_sigma * noise.normal();
        }
        return f;
    }

    std::vector<double> logits_for(const Instance& in, const InstanceKey& key) const {
        auto f = features(in, key);
        std::vector<double> z = bias;
        for (std::size_t d = 0; d < f.size(); ++d) {
            if (f[d] == 0.0) continue;
            for (int k = 0; k < n_predicates; ++k) z[static_cast<std::size_t>(k)] += f[d] * weight[d][static_cast<std::size_t>(k)];
        }
        return z;
    }
};

inline std::vector<double> softmax(const std::vector<double>& z) {
    double mx = z[0];
    for (double x : z) mx = std::max(mx, x);
    std::vector<double> p(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        total += p[i];
    }
    for (auto& x : p) x /= total;
    return p;
}

struct BaseTrainConfig {
    int epochs = 200;
    double lr = 0.1;
    std::uint64_t seed = 0;
    int d_noise = 4;
    double noise_sigma = 1.0;
};

// Full-batch gradient descent on mean cross-entropy. The returned model is
// frozen: nothing in the toolkit mutates it afterwards.
inline FrozenBaseModel train_base(const Dataset& train, const BaseTrainConfig& cfg) {
    if (train.instance_count() == 0) throw DomainError("cannot train the base model on an empty corpus");
    FrozenBaseModel m;
    m.n_objects = train.vocabulary.n_objects();
    m.n_predicates = train.vocabulary.n_predicates();
    m.d_noise = cfg.d_noise;
    m.noise_sigma = cfg.noise_sigma;
    m.feature_seed = cfg.seed;
    const int fd = m.feature_dim();
    const int nr = m.n_predicates;
    m.weight.assign(static_cast<std::size_t>(fd), std::vector<double>(static_cast<std::size_t>(nr), 0.0));
    m.bias.assign(static_cast<std::size_t>(nr), 0.0);

    // precompute features once; they are pure functions of (seed, key)
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (const auto& s : train.scenes) {
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            InstanceKey key{s.scene_id, static_cast<int>(i)};
            feats.push_back(m.features(s.instances[i], key));
            labels.push_back(s.instances[i].predicate_cat);
        }
    }
    const auto n = feats.size();

    std::vector<std::vector<double>> gw(static_cast<std::size_t>(fd),
                                        std::vector<double>(static_cast<std::size_t>(nr)));
    std::vector<double> gb(static_cast<std::size_t>(nr));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (auto& row : gw) std::fill(row.begin(), row.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> z = m.bias;
            for (int d = 0; d < fd; ++d) {
                double f = feats[i][static_cast<std::size_t>(d)];
                if (f == 0.0) continue;
                for (int k = 0; k < nr; ++k) z[static_cast<std::size_t>(k)] += f * m.weight[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
            }
            auto p = softmax(z);
            p[static_cast<std::size_t>(labels[i])] -= 1.0;
            for (int d = 0; d < fd; ++d) {
                double f = feats[i][static_cast<std::size_t>(d)];
                if (f == 0.0) continue;
                for (int k = 0; k < nr; ++k)
                    gw[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] += f * p[static_cast<std::size_t>(k)];
            }
            for (int k = 0; k < nr; ++k) gb[static_cast<std::size_t>(k)] += p[static_cast<std::size_t>(k)];
        }
        const double step = cfg.lr / static_cast<double>(n);
        for (int d = 0; d < fd; ++d)
            for (int k = 0; k < nr; ++k)
                m.weight[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] -= step * gw[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
        for (int k = 0; k < nr; ++k) m.bias[static_cast<std::size_t>(k)] -= step * gb[static_cast<std::size_t>(k)];
    }
    return m;
}

inline std::vector<LogitsRecord> base_logits(const FrozenBaseModel& m, const Dataset& data) {
    std::vector<LogitsRecord> out;
    for (const auto& s : data.scenes) {
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            const auto& in = s.instances[i];
            if (in.subject_cat >= m.n_objects || in.object_cat >= m.n_objects)
                throw DomainError("instance index out of model range in scene '" + s.scene_id + "'");
            InstanceKey key{s.scene_id, static_cast<int>(i)};
            out.push_back({key, m.logits_for(in, key)});
        }
    }
    return out;
}

inline json base_model_to_json(const FrozenBaseModel& m) {
    return json{{"n_objects", m.n_objects},   {"n_predicates", m.n_predicates},
                {"d_noise", m.d_noise},       {"noise_sigma", m.noise_sigma},
                {"feature_seed", m.feature_seed}, {"weight", m.weight},
                {"bias", m.bias}};
}

inline FrozenBaseModel base_model_from_json(const json& j) {
    FrozenBaseModel m;
    m.n_objects = j.at("n_objects").get<int>();
    m.n_predicates = j.at("n_predicates").get<int>();
    m.d_noise = j.at("d_noise").get<int>();
    m.noise_sigma = j.at("noise_sigma").get<double>();
    m.feature_seed = j.at("feature_seed").get<std::uint64_t>();
    m.weight = j.at("weight").get<std::vector<std::vector<double>>>();
    m.bias = j.at("bias").get<std::vector<double>>();
    return m;
}

// Logits interchange format: JSON lines, one record per line.
inline void export_logits(const std::vector<LogitsRecord>& records, const std::string& path) {
    std::ostringstream out;
    for (const auto& r : records) {
        json j{{"scene", r.key.scene_id}, {"pos", r.key.position}, {"logits", r.logits}};
        out << j.dump() << "\n";
    }
    write_file(path, out.str());
}

inline std::vector<LogitsRecord> import_logits(const std::string& path, int n_predicates) {
    std::istringstream in(read_file(path));
    std::vector<LogitsRecord> records;
    std::map<InstanceKey, bool> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ValidationError("logits line " + std::to_string(line_no) + ": invalid JSON");
        LogitsRecord r;
        r.key.scene_id = j.at("scene").get<std::string>();
        r.key.position = j.at("pos").get<int>();
        r.logits = j.at("logits").get<std::vector<double>>();
        if (static_cast<int>(r.logits.size()) != n_predicates)
            throw ValidationError("logits record scene '" + r.key.scene_id + "' pos " +
                                  std::to_string(r.key.position) + ": expected " +
                                  std::to_string(n_predicates) + " values, got " +
                                  std::to_string(r.logits.size()));
        for (double v : r.logits)
            if (!std::isfinite(v))
                throw ValidationError("logits record scene '" + r.key.scene_id + "' pos " +
                                      std::to_string(r.key.position) + ": non-finite value");
        if (seen.count(r.key))
            throw ValidationError("duplicate logits record: scene '" + r.key.scene_id + "' pos " +
                                  std::to_string(r.key.position));
        seen[r.key] = true;
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace sga
