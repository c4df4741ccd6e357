#pragma once

#include <array>
#include <vector>

#include "sgadjust/dataset.hpp"

namespace sga {

struct RawCounts {
    std::vector<std::int64_t> object_slots;               // per category, subject+object slots
    std::vector<std::vector<std::int64_t>> ordered_pairs; // [subject][object]
    std::vector<std::int64_t> predicates;
    std::int64_t total_instances = 0;
};

struct DistributionSet {
    std::vector<double> O;                 // length N_o, sums to 1
    std::vector<std::vector<double>> C;    // N_o x N_o, symmetric, entries in [0,1]
    std::vector<std::vector<double>> P;    // N_o x N_o, ordered, sums to 1
    std::vector<double> R;                 // length N_r, sums to 1
    RawCounts counts;

    int n_objects() const { return static_cast<int>(O.size()); }
    int n_predicates() const { return static_cast<int>(R.size()); }
};

inline RawCounts count_corpus(const Dataset& train) {
    if (train.instance_count() == 0) throw DomainError("cannot extract distributions from an empty corpus");
    const int no = train.vocabulary.n_objects();
    const int nr = train.vocabulary.n_predicates();
    RawCounts c;
    c.object_slots.assign(no, 0);
    c.ordered_pairs.assign(no, std::vector<std::int64_t>(no, 0));
    c.predicates.assign(nr, 0);
    for (const auto& s : train.scenes) {
        for (const auto& in : s.instances) {
            c.object_slots[in.subject_cat] += 1;
            c.object_slots[in.object_cat] += 1;
            c.ordered_pairs[in.subject_cat][in.object_cat] += 1;
            c.predicates[in.predicate_cat] += 1;
            c.total_instances += 1;
        }
    }
    return c;
}

inline std::vector<double> extract_object_distribution(const Dataset& train) {
    auto c = count_corpus(train);
    std::vector<double> o(c.object_slots.size(), 0.0);
    double total = static_cast<double>(2 * c.total_instances);
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = static_cast<double>(c.object_slots[i]) / total;
    return o;
}

// C[i][j] = (Count(i->j) + Count(j->i)) / (slots(i) + slots(j)); 0 when the
// denominator vanishes. slots(i) counts pair-slot participations, so a
// self-pair contributes 2 and the diagonal stays <= 1.
inline std::vector<std::vector<double>> extract_cooccurrence(const Dataset& train) {
    auto c = count_corpus(train);
    const auto n = c.object_slots.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::int64_t num = c.ordered_pairs[i][j] + c.ordered_pairs[j][i];
            std::int64_t den = c.object_slots[i] + c.object_slots[j];
            if (i == j) {
                // a self-pair contributes 2 participations and both numerator
                // terms; the slot pool is shared, so a lone self-pair gives 1
                num = 2 * c.ordered_pairs[i][i];
                den = c.object_slots[i];
            }
            m[i][j] = den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
        }
    }
    return m;
}

inline std::vector<std::vector<double>> extract_pair_distribution(const Dataset& train) {
    auto c = count_corpus(train);
    const auto n = c.object_slots.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m[i][j] = static_cast<double>(c.ordered_pairs[i][j]) /
                      static_cast<double>(c.total_instances);
    return m;
}

inline std::vector<double> extract_relationship_distribution(const Dataset& train) {
    auto c = count_corpus(train);
    std::vector<double> r(c.predicates.size(), 0.0);
    for (std::size_t k = 0; k < r.size(); ++k)
        r[k] = static_cast<double>(c.predicates[k]) / static_cast<double>(c.total_instances);
    return r;
}

inline DistributionSet extract_distributions(const Dataset& train) {
    DistributionSet d;
    d.counts = count_corpus(train);
    d.O = extract_object_distribution(train);
    d.C = extract_cooccurrence(train);
    d.P = extract_pair_distribution(train);
    d.R = extract_relationship_distribution(train);
    return d;
}

// Per-batch slices of the full distributions; one row per instance, the
// relationship distribution is shared across the batch.
struct BatchSubDistributions {
    std::vector<std::array<double, 2>> O_B;  // (O[subject], O[object])
    std::vector<double> C_B;
    std::vector<double> P_B;
    std::vector<double> R_B;  // length N_r
};

inline BatchSubDistributions batch_subdistributions(const DistributionSet& d,
                                                    const std::vector<Instance>& batch) {
    BatchSubDistributions sub;
    sub.R_B = d.R;
    const int no = d.n_objects();
    for (const auto& in : batch) {
        if (in.subject_cat < 0 || in.subject_cat >= no || in.object_cat < 0 || in.object_cat >= no)
            throw DomainError("batch instance index out of distribution range");
        sub.O_B.push_back({d.O[in.subject_cat], d.O[in.object_cat]});
        sub.C_B.push_back(d.C[in.subject_cat][in.object_cat]);
        sub.P_B.push_back(d.P[in.subject_cat][in.object_cat]);
    }
    return sub;
}

// Shannon entropy in nats, with 0 * ln 0 := 0.
inline double prediction_entropy(const std::vector<double>& probs) {
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw DomainError("entropy input has a negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("entropy input does not sum to 1");
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

inline json distributions_to_json(const DistributionSet& d) {
    json j;
    j["O"] = d.O;
    j["C"] = d.C;
    j["P"] = d.P;
    j["R"] = d.R;
    j["counts"] = {{"object_slots", d.counts.object_slots},
                   {"ordered_pairs", d.counts.ordered_pairs},
                   {"predicates", d.counts.predicates},
                   {"total_instances", d.counts.total_instances}};
    return j;
}

inline DistributionSet distributions_from_json(const json& j) {
    DistributionSet d;
    d.O = j.at("O").get<std::vector<double>>();
    d.C = j.at("C").get<std::vector<std::vector<double>>>();
    d.P = j.at("P").get<std::vector<std::vector<double>>>();
    d.R = j.at("R").get<std::vector<double>>();
    const auto& c = j.at("counts");
    d.counts.object_slots = c.at("object_slots").get<std::vector<std::int64_t>>();
    d.counts.ordered_pairs = c.at("ordered_pairs").get<std::vector<std::vector<std::int64_t>>>();
    d.counts.predicates = c.at("predicates").get<std::vector<std::int64_t>>();
    d.counts.total_instances = c.at("total_instances").get<std::int64_t>();
    return d;
}

}  // namespace sga
