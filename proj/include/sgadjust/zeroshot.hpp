#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgadjust/dataset.hpp"

namespace sga {

struct EmbeddingStore {
    int dim = 0;
    std::map<std::string, std::vector<double>> vectors;

    const std::vector<double>& get(const std::string& name) const {
        auto it = vectors.find(name);
        if (it == vectors.end()) throw DomainError("no vector for token '" + name + "'");
        return it->second;
    }
};

struct SimilarityParams {
    double alpha = 0.7;
    double beta = 0.4;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0,1]");
    }
};

// Plain-text vector format: `token v1 v2 ... vD` per line. Tokens outside the
// vocabulary are ignored; a missing vocabulary token is a coverage error.
inline EmbeddingStore load_word_vectors(const std::string& path, const Vocabulary& vocab) {
    std::istringstream in(read_file(path));
    std::set<std::string> wanted(vocab.object_names.begin(), vocab.object_names.end());
    EmbeddingStore store;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        if (!wanted.count(token)) continue;
        std::vector<double> v;
        double x;
        while (ls >> x) v.push_back(x);
        if (v.empty()) throw ValidationError("vector line " + std::to_string(line_no) + ": no values");
        if (store.dim == 0) store.dim = static_cast<int>(v.size());
        if (static_cast<int>(v.size()) != store.dim)
            throw ValidationError("vector line " + std::to_string(line_no) + ": ragged dimension (" +
                                  std::to_string(v.size()) + " vs " + std::to_string(store.dim) + ")");
        store.vectors[token] = std::move(v);
    }
    std::string missing;
    for (const auto& name : vocab.object_names)
        if (!store.vectors.count(name)) missing += (missing.empty() ? "" : ", ") + name;
    if (!missing.empty()) throw ValidationError("word vectors missing vocabulary tokens: " + missing);
    return store;
}

// Synthetic clustered vectors: cluster centers are random unit-ish vectors,
// members sit near their center, so within-cluster cosine beats cross-cluster.
inline EmbeddingStore generate_clustered_vectors(const Vocabulary& vocab, int n_clusters, int dim,
                                                 std::uint64_t seed, double spread = 0.25) {
    if (n_clusters < 1 || dim < 2) throw ConfigError("clustered vectors need n_clusters >= 1, dim >= 2");
    Rng rng(seed);
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(n_clusters));
    for (auto& c : centers) {
        c.resize(static_cast<std::size_t>(dim));
        double norm = 0.0;
        for (auto& x : c) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : c) x /= norm;
    }
    EmbeddingStore store;
    store.dim = dim;
    for (int o = 0; o < vocab.n_objects(); ++o) {
        const auto& center = centers[static_cast<std::size_t>(object_cluster(o, n_clusters))];
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (int d = 0; d < dim; ++d) v[static_cast<std::size_t>(d)] = center[static_cast<std::size_t>(d)] + spread * rng.normal();
        store.vectors[vocab.object_names[static_cast<std::size_t>(o)]] = std::move(v);
    }
    return store;
}

inline void save_word_vectors(const EmbeddingStore& store, const std::string& path) {
    std::ostringstream out;
    out.precision(17);
    for (const auto& [token, v] : store.vectors) {
        out << token;
        for (double x : v) out << " " << x;
        out << "\n";
    }
    write_file(path, out.str());
}

// S = alpha * cos(theta) + (1 - alpha) * (1 - d / (1 + d)), d Euclidean.
inline double similarity(const std::vector<double>& v1, const std::vector<double>& v2,
                         double alpha) {
    if (v1.size() != v2.size()) throw ShapeError("similarity: dimension mismatch");
    double dot = 0.0, n1 = 0.0, n2 = 0.0, dist2 = 0.0;
    for (std::size_t i = 0; i < v1.size(); ++i) {
        dot += v1[i] * v2[i];
        n1 += v1[i] * v1[i];
        n2 += v2[i] * v2[i];
        dist2 += (v1[i] - v2[i]) * (v1[i] - v2[i]);
    }
    if (n1 == 0.0 || n2 == 0.0) throw DomainError("similarity undefined for a zero vector");
    double cosine = dot / (std::sqrt(n1) * std::sqrt(n2));
    double d = std::sqrt(dist2);
    return alpha * cosine + (1.0 - alpha) * (1.0 - d / (1.0 + d));
}

enum class InferenceRule { Rule1, Rule2 };

struct InferredPair {
    int subject_cat = 0;
    int object_cat = 0;
    Pair source_pair;
    InferenceRule rule = InferenceRule::Rule1;
    double similarity = 0.0;
};

// Rule 1 substitutes the first slot of an observed pair with a similar
// category, Rule 2 the second. Pairs already observed in training are
// excluded; duplicate inferences keep the highest similarity.
inline std::vector<InferredPair> infer_zero_shot_pairs(const std::set<Pair>& train_pairs,
                                                       const Vocabulary& vocab,
                                                       const EmbeddingStore& store,
                                                       const SimilarityParams& params) {
    params.validate();
    const int no = vocab.n_objects();
    // category-by-category similarity, computed once
    std::vector<std::vector<double>> sim(static_cast<std::size_t>(no),
                                         std::vector<double>(static_cast<std::size_t>(no), 0.0));
    for (int m = 0; m < no; ++m)
        for (int M = 0; M < no; ++M)
            if (m != M)
                sim[static_cast<std::size_t>(m)][static_cast<std::size_t>(M)] =
                    similarity(store.get(vocab.object_names[static_cast<std::size_t>(m)]),
                               store.get(vocab.object_names[static_cast<std::size_t>(M)]),
                               params.alpha);

    std::map<Pair, InferredPair> best;
    auto consider = [&](int subj, int obj, const Pair& source, InferenceRule rule, double s) {
        if (s < params.beta) return;
        Pair key{subj, obj};
        if (train_pairs.count(key)) return;
        auto it = best.find(key);
        if (it == best.end() || s > it->second.similarity)
            best[key] = InferredPair{subj, obj, source, rule, s};
    };
    for (const auto& [m, n] : train_pairs) {
        for (int M = 0; M < no; ++M) {
            if (M != m) consider(M, n, {m, n}, InferenceRule::Rule1,
                                 sim[static_cast<std::size_t>(m)][static_cast<std::size_t>(M)]);
            if (M != n) consider(m, M, {m, n}, InferenceRule::Rule2,
                                 sim[static_cast<std::size_t>(n)][static_cast<std::size_t>(M)]);
        }
    }
    std::vector<InferredPair> out;
    out.reserve(best.size());
    for (auto& [key, ip] : best) out.push_back(ip);
    return out;
}

// P'[M][n] += S * P[m][n] for each inferred pair, then renormalize.
// Existing support is only rescaled, never zeroed.
inline std::vector<std::vector<double>> optimize_pair_distribution(
    const std::vector<std::vector<double>>& P, const std::vector<InferredPair>& inferred) {
    auto out = P;
    const int no = static_cast<int>(P.size());
    for (const auto& ip : inferred) {
        if (ip.subject_cat < 0 || ip.subject_cat >= no || ip.object_cat < 0 || ip.object_cat >= no)
            throw ShapeError("inferred pair index out of range");
        out[static_cast<std::size_t>(ip.subject_cat)][static_cast<std::size_t>(ip.object_cat)] +=
            ip.similarity * P[static_cast<std::size_t>(ip.source_pair.first)]
                             [static_cast<std::size_t>(ip.source_pair.second)];
    }
    double total = 0.0;
    for (const auto& row : out)
        for (double x : row) total += x;
    if (total > 0.0)
        for (auto& row : out)
            for (auto& x : row) x /= total;
    return out;
}

// Fraction of manifest zero-shot pair types recovered by the rules;
// defined as 1 for an empty manifest.
inline double zero_shot_pair_recall(const std::vector<InferredPair>& inferred,
                                    const ZeroShotManifest& manifest) {
    if (manifest.zero_shot_pairs.empty()) return 1.0;
    std::size_t hit = 0;
    std::set<Pair> got;
    for (const auto& ip : inferred) got.insert({ip.subject_cat, ip.object_cat});
    for (const auto& p : manifest.zero_shot_pairs)
        if (got.count(p)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(manifest.zero_shot_pairs.size());
}

inline json inferred_pairs_to_json(const std::vector<InferredPair>& inferred) {
    json arr = json::array();
    for (const auto& ip : inferred)
        arr.push_back({{"subject", ip.subject_cat},
                       {"object", ip.object_cat},
                       {"source", {ip.source_pair.first, ip.source_pair.second}},
                       {"rule", ip.rule == InferenceRule::Rule1 ? 1 : 2},
                       {"similarity", ip.similarity}});
    return arr;
}

inline std::vector<InferredPair> inferred_pairs_from_json(const json& arr) {
    std::vector<InferredPair> out;
    for (const auto& j : arr) {
        InferredPair ip;
        ip.subject_cat = j.at("subject").get<int>();
        ip.object_cat = j.at("object").get<int>();
        ip.source_pair = {j.at("source")[0].get<int>(), j.at("source")[1].get<int>()};
        ip.rule = j.at("rule").get<int>() == 1 ? InferenceRule::Rule1 : InferenceRule::Rule2;
        ip.similarity = j.at("similarity").get<double>();
        out.push_back(ip);
    }
    return out;
}

}  // namespace sga
