#pragma once

#include <string>
#include <vector>

#include "sgadjust/base_model.hpp"
#include "sgadjust/distributions.hpp"
#include "sgadjust/transformer.hpp"

namespace sga {

enum class AdjustMode {
    Literal,   // factors multiply raw logits
    Softplus,  // factors multiply softplus(logits); keeps the product ranking-capable
};

inline std::string to_string(AdjustMode m) {
    return m == AdjustMode::Literal ? "literal" : "softplus";
}

inline AdjustMode adjust_mode_from_string(const std::string& s) {
    if (s == "literal") return AdjustMode::Literal;
    if (s == "softplus") return AdjustMode::Softplus;
    throw ConfigError("unknown adjust_mode '" + s + "' (expected literal|softplus)");
}

struct CAModuleConfig {
    int e_dim = 128;
    int n_heads = 4;
    int ffn_mult = 2;
    double dropout = 0.1;
    AdjustMode adjust_mode = AdjustMode::Literal;
};

// Embedding layers for the four distribution slices, three cascaded
// transformer blocks along the mediation chain, and the output projection
// that turns the fused feature into per-predicate factors.
struct CAModuleParams {
    int n_objects = 0;
    int n_predicates = 0;
    CAModuleConfig cfg;

    Tensor w_o, b_o;  // 2 x E
    Tensor w_c, b_c;  // 1 x E
    Tensor w_p, b_p;  // 1 x E
    Tensor w_r, b_r;  // N_r x E
    TransformerBlockParams t_oc, t_ocp, t_cppr;
    Tensor out_w, out_b;  // E x N_r

    std::vector<std::pair<std::string, Tensor*>> named_tensors() {
        std::vector<std::pair<std::string, Tensor*>> all = {
            {"w_o", &w_o}, {"b_o", &b_o}, {"w_c", &w_c}, {"b_c", &b_c},
            {"w_p", &w_p}, {"b_p", &b_p}, {"w_r", &w_r}, {"b_r", &b_r},
            {"out_w", &out_w}, {"out_b", &out_b}};
        for (auto& [name, t] : t_oc.named_tensors()) all.push_back({"t_oc." + name, t});
        for (auto& [name, t] : t_ocp.named_tensors()) all.push_back({"t_ocp." + name, t});
        for (auto& [name, t] : t_cppr.named_tensors()) all.push_back({"t_cppr." + name, t});
        return all;
    }
};

inline CAModuleParams init_camodule(int n_objects, int n_predicates, const CAModuleConfig& cfg,
                                    std::uint64_t seed) {
    if (n_objects < 1 || n_predicates < 1 || cfg.e_dim < 1)
        throw ConfigError("camodule dimensions must be positive");
    if (cfg.e_dim % cfg.n_heads != 0)
        throw ConfigError("e_dim must be divisible by the head count");
    Rng rng(seed);
    CAModuleParams p;
    p.n_objects = n_objects;
    p.n_predicates = n_predicates;
    p.cfg = cfg;
    const int e = cfg.e_dim;
    const int h = cfg.ffn_mult * e;
    p.w_o = init_weight(2, e, rng);
    p.b_o = Tensor({e});
    p.w_c = init_weight(1, e, rng);
    p.b_c = Tensor({e});
    p.w_p = init_weight(1, e, rng);
    p.b_p = Tensor({e});
    p.w_r = init_weight(n_predicates, e, rng);
    p.b_r = Tensor({e});
    p.t_oc = TransformerBlockParams::init(e, h, cfg.n_heads, cfg.dropout, rng);
    p.t_ocp = TransformerBlockParams::init(e, h, cfg.n_heads, cfg.dropout, rng);
    p.t_cppr = TransformerBlockParams::init(e, h, cfg.n_heads, cfg.dropout, rng);
    p.out_w = init_weight(e, n_predicates, rng);
    // bias starts at 1 so initial factors sit near the identity scale; a zero
    // bias can leave every output behind the final ReLU and the module dead
    p.out_b = Tensor({n_predicates}, 1.0);
    return p;
}

// Tape-resident CAModule; built once per forward/backward pass.
struct CAModuleVars {
    Tape::NodeId w_o, b_o, w_c, b_c, w_p, b_p, w_r, b_r, out_w, out_b;
    TransformerBlockVars t_oc, t_ocp, t_cppr;

    static CAModuleVars leaf(Tape& tape, CAModuleParams& p, bool requires_grad) {
        CAModuleVars v{};
        v.w_o = tape.leaf(p.w_o, requires_grad);
        v.b_o = tape.leaf(p.b_o, requires_grad);
        v.w_c = tape.leaf(p.w_c, requires_grad);
        v.b_c = tape.leaf(p.b_c, requires_grad);
        v.w_p = tape.leaf(p.w_p, requires_grad);
        v.b_p = tape.leaf(p.b_p, requires_grad);
        v.w_r = tape.leaf(p.w_r, requires_grad);
        v.b_r = tape.leaf(p.b_r, requires_grad);
        v.out_w = tape.leaf(p.out_w, requires_grad);
        v.out_b = tape.leaf(p.out_b, requires_grad);
        v.t_oc = TransformerBlockVars::leaf(tape, p.t_oc, requires_grad);
        v.t_ocp = TransformerBlockVars::leaf(tape, p.t_ocp, requires_grad);
        v.t_cppr = TransformerBlockVars::leaf(tape, p.t_cppr, requires_grad);
        return v;
    }
};

inline Tensor sub_to_tensor_O(const BatchSubDistributions& sub) {
    Tensor t({static_cast<int>(sub.O_B.size()), 2});
    for (std::size_t i = 0; i < sub.O_B.size(); ++i) {
        t(static_cast<int>(i), 0) = sub.O_B[i][0];
        t(static_cast<int>(i), 1) = sub.O_B[i][1];
    }
    return t;
}

inline Tensor column_tensor(const std::vector<double>& v) {
    Tensor t({static_cast<int>(v.size()), 1});
    t.data = v;
    return t;
}

// Forward pass on an existing tape. Stage interfaces are kept uniform by
// mean-pooling each 2-token sequence back to a single E-dim vector.
inline Tape::NodeId camodule_forward_on_tape(Tape& tape, const CAModuleVars& v,
                                             const BatchSubDistributions& sub,
                                             const CAModuleConfig& cfg, bool train_mode,
                                             Rng* rng) {
    const int batch = static_cast<int>(sub.O_B.size());
    if (sub.C_B.size() != static_cast<std::size_t>(batch) ||
        sub.P_B.size() != static_cast<std::size_t>(batch))
        throw ShapeError("camodule forward: ragged batch sub-distributions");

    auto o_in = tape.leaf(sub_to_tensor_O(sub));
    auto c_in = tape.leaf(column_tensor(sub.C_B));
    auto p_in = tape.leaf(column_tensor(sub.P_B));
    Tensor r_row({1, static_cast<int>(sub.R_B.size())});
    r_row.data = sub.R_B;
    auto r_in = tape.leaf(r_row);

    auto f_o = tape.relu(tape.linear(o_in, v.w_o, v.b_o));
    auto f_c = tape.relu(tape.linear(c_in, v.w_c, v.b_c));
    auto f_p = tape.relu(tape.linear(p_in, v.w_p, v.b_p));
    // the relationship distribution is shared by the whole batch; embed once
    auto f_r = tape.broadcast_row(tape.relu(tape.linear(r_in, v.w_r, v.b_r)), batch);

    auto stage = [&](Tape::NodeId a, Tape::NodeId b, const TransformerBlockVars& block) {
        auto seq = tape.stack_tokens({a, b});
        auto y = transformer_block(tape, seq, block, train_mode, rng);
        return tape.mean_tokens(y);
    };
    auto f_oc = tape.relu(stage(f_o, f_c, v.t_oc));
    auto f_ocp = tape.relu(stage(f_oc, f_p, v.t_ocp));
    auto fused = stage(f_ocp, f_r, v.t_cppr);
    return tape.relu(tape.linear(fused, v.out_w, v.out_b));  // (|B|, N_r), >= 0
}

struct AdjustmentFactors {
    std::vector<std::vector<double>> factors;  // |B| x N_r, entries >= 0
};

inline AdjustmentFactors camodule_forward(CAModuleParams& params, const BatchSubDistributions& sub,
                                          bool train_mode = false, Rng* rng = nullptr) {
    Tape tape;
    auto vars = CAModuleVars::leaf(tape, params, false);
    auto out = camodule_forward_on_tape(tape, vars, sub, params.cfg, train_mode, rng);
    const auto& t = tape.value(out);
    AdjustmentFactors f;
    const int nr = t.shape[1];
    for (int i = 0; i < t.shape[0]; ++i)
        f.factors.emplace_back(t.data.begin() + static_cast<std::ptrdiff_t>(i) * nr,
                               t.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * nr);
    return f;
}

inline std::vector<double> adjust_logits_row(const std::vector<double>& logits,
                                             const std::vector<double>& factors,
                                             AdjustMode mode) {
    if (logits.size() != factors.size()) throw ShapeError("adjust_logits: row length mismatch");
    std::vector<double> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        double z = logits[k];
        if (mode == AdjustMode::Softplus) z = z > 30.0 ? z : std::log1p(std::exp(z));
        out[k] = z * factors[k];
    }
    return out;
}

inline std::vector<std::vector<double>> adjust_logits(
    const std::vector<std::vector<double>>& logits, const AdjustmentFactors& f,
    AdjustMode mode = AdjustMode::Literal) {
    if (logits.size() != f.factors.size()) throw ShapeError("adjust_logits: batch size mismatch");
    std::vector<std::vector<double>> out;
    out.reserve(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        out.push_back(adjust_logits_row(logits[i], f.factors[i], mode));
    return out;
}

// Relationship-level baseline: one reciprocal-frequency factor per predicate,
// identical for every instance.
inline std::vector<double> vanilla_adjustment(const std::vector<double>& R) {
    bool any = false;
    for (double r : R) any = any || r > 0.0;
    if (!any) throw DomainError("vanilla adjustment needs a non-empty predicate distribution");
    std::vector<double> a(R.size(), 0.0);
    for (std::size_t k = 0; k < R.size(); ++k)
        if (R[k] > 0.0) a[k] = 1.0 / R[k];
    return a;
}

struct TrainConfig {
    int batch_size = 12;
    double learning_rate = 0.01;
    int epochs = 30;
    std::uint64_t seed = 0;
    double grad_clip = 5.0;  // global gradient-norm cap; <= 0 disables clipping
    bool identity_factors = false;  // ablation: freeze factors at 1
};

struct TrainResult {
    CAModuleParams params;
    std::vector<double> loss_curve;  // mean CE per epoch
};

// Minimizes mean cross-entropy of softmax(adjusted logits) over shuffled
// mini-batches with plain gradient descent. Only CAModule parameters move;
// the base model is read-only throughout.
inline TrainResult train_camodule(const FrozenBaseModel& base, const DistributionSet& dists,
                                  const Dataset& train, const TrainConfig& cfg,
                                  CAModuleParams params) {
    if (base.n_predicates != dists.n_predicates())
        throw ConfigError("base model and distributions disagree on predicate count");
    if (params.n_predicates != base.n_predicates || params.n_objects != dists.n_objects())
        throw ConfigError("camodule parameters sized for a different vocabulary");
    if (cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
        throw ConfigError("train config: batch_size >= 1 and learning_rate > 0 required");

    struct Example {
        Instance instance;
        std::vector<double> logits;
        int label;
    };
    std::vector<Example> examples;
    for (const auto& s : train.scenes)
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            InstanceKey key{s.scene_id, static_cast<int>(i)};
            examples.push_back({s.instances[i], base.logits_for(s.instances[i], key),
                                s.instances[i].predicate_cat});
        }
    if (examples.empty()) throw DomainError("cannot train camodule on an empty corpus");

    Rng order_rng(fnv1a_u64(cfg.seed, fnv1a("batch-order")));
    Rng dropout_rng(fnv1a_u64(cfg.seed, fnv1a("dropout")));

    TrainResult result;
    result.params = std::move(params);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int nr = base.n_predicates;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<Instance> batch;
            std::vector<int> labels;
            Tensor logits_t({0, nr});
            std::vector<double> flat;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i) {
                const auto& ex = examples[order[i]];
                batch.push_back(ex.instance);
                labels.push_back(ex.label);
                flat.insert(flat.end(), ex.logits.begin(), ex.logits.end());
            }
            logits_t.shape = {static_cast<int>(batch.size()), nr};
            logits_t.data = std::move(flat);

            auto sub = batch_subdistributions(dists, batch);
            Tape tape;
            auto vars = CAModuleVars::leaf(tape, result.params, true);
            auto logits_id = tape.leaf(logits_t, false);
            Tape::NodeId adjusted;
            if (cfg.identity_factors) {
                adjusted = result.params.cfg.adjust_mode == AdjustMode::Softplus
                               ? tape.softplus(logits_id)
                               : logits_id;
            } else {
                auto factors =
                    camodule_forward_on_tape(tape, vars, sub, result.params.cfg, true, &dropout_rng);
                auto z = result.params.cfg.adjust_mode == AdjustMode::Softplus
                             ? tape.softplus(logits_id)
                             : logits_id;
                adjusted = tape.mul(z, factors);
            }
            auto loss = tape.cross_entropy_mean(adjusted, labels);
            epoch_loss += tape.value(loss).data[0];
            ++n_batches;
            if (!cfg.identity_factors) {
                tape.backward(loss);
                auto named = result.params.named_tensors();
                std::vector<Tape::NodeId> ids = {vars.w_o, vars.b_o, vars.w_c, vars.b_c,
                                                 vars.w_p, vars.b_p, vars.w_r, vars.b_r,
                                                 vars.out_w, vars.out_b};
                for (auto bid : vars.t_oc.ids()) ids.push_back(bid);
                for (auto bid : vars.t_ocp.ids()) ids.push_back(bid);
                for (auto bid : vars.t_cppr.ids()) ids.push_back(bid);
                if (ids.size() != named.size()) throw ShapeError("parameter enumeration mismatch");
                // Global-norm clipping: one oversized step can push the whole
                // output head behind its ReLU and freeze training permanently.
                double scale = 1.0;
                if (cfg.grad_clip > 0.0) {
                    double sq = 0.0;
                    for (auto id : ids)
                        for (double g : tape.grad(id).data) sq += g * g;
                    double norm = std::sqrt(sq);
                    if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
                }
                // SGD step over every parameter leaf
                for (std::size_t j = 0; j < ids.size(); ++j) {
                    const auto& g = tape.grad(ids[j]);
                    Tensor& target = *named[j].second;
                    for (std::size_t q = 0; q < target.data.size(); ++q)
                        target.data[q] -= cfg.learning_rate * scale * g.data[q];
                }
            }
        }
        result.loss_curve.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    return result;
}

struct AdjustmentTensor {
    int n_objects = 0;
    int n_predicates = 0;
    std::vector<double> values;  // flattened N_o x N_r x N_o, index [i][k][j]

    double at(int i, int k, int j) const {
        return values[(static_cast<std::size_t>(i) * n_predicates + k) * n_objects + j];
    }
    std::vector<double> slice(int i, int j) const {
        std::vector<double> v(static_cast<std::size_t>(n_predicates));
        for (int k = 0; k < n_predicates; ++k) v[static_cast<std::size_t>(k)] = at(i, k, j);
        return v;
    }
};

// Evaluate the trained module on every ordered category pair in one batch.
inline AdjustmentTensor materialize_adjustment_tensor(CAModuleParams& params,
                                                      const DistributionSet& dists) {
    const int no = dists.n_objects();
    const int nr = dists.n_predicates();
    std::vector<Instance> pairs;
    pairs.reserve(static_cast<std::size_t>(no) * no);
    for (int i = 0; i < no; ++i)
        for (int j = 0; j < no; ++j) pairs.push_back({i, 0, j, ""});
    auto sub = batch_subdistributions(dists, pairs);
    auto f = camodule_forward(params, sub, false, nullptr);
    AdjustmentTensor t;
    t.n_objects = no;
    t.n_predicates = nr;
    t.values.assign(static_cast<std::size_t>(no) * nr * no, 0.0);
    for (int i = 0; i < no; ++i)
        for (int j = 0; j < no; ++j)
            for (int k = 0; k < nr; ++k)
                t.values[(static_cast<std::size_t>(i) * nr + k) * no + j] =
                    f.factors[static_cast<std::size_t>(i) * no + j][static_cast<std::size_t>(k)];
    return t;
}

inline json adjustment_tensor_to_json(const AdjustmentTensor& t) {
    json v = json::array();
    for (int i = 0; i < t.n_objects; ++i) {
        json vi = json::array();
        for (int k = 0; k < t.n_predicates; ++k) {
            json vk = json::array();
            for (int j = 0; j < t.n_objects; ++j) vk.push_back(t.at(i, k, j));
            vi.push_back(std::move(vk));
        }
        v.push_back(std::move(vi));
    }
    return json{{"n_objects", t.n_objects}, {"n_predicates", t.n_predicates}, {"values", v}};
}

// Checkpoint: manifest of (name, shape) plus flat data arrays; JSON doubles
// round-trip bit-exactly.
inline json camodule_to_json(CAModuleParams& p) {
    json params = json::object();
    for (auto& [name, t] : p.named_tensors())
        params[name] = json{{"shape", t->shape}, {"data", t->data}};
    return json{{"n_objects", p.n_objects},
                {"n_predicates", p.n_predicates},
                {"e_dim", p.cfg.e_dim},
                {"heads", p.cfg.n_heads},
                {"ffn_mult", p.cfg.ffn_mult},
                {"dropout", p.cfg.dropout},
                {"adjust_mode", to_string(p.cfg.adjust_mode)},
                {"params", params}};
}

inline CAModuleParams camodule_from_json(const json& j) {
    CAModuleConfig cfg;
    cfg.e_dim = j.at("e_dim").get<int>();
    cfg.n_heads = j.at("heads").get<int>();
    cfg.ffn_mult = j.at("ffn_mult").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.adjust_mode = adjust_mode_from_string(j.at("adjust_mode").get<std::string>());
    auto p = init_camodule(j.at("n_objects").get<int>(), j.at("n_predicates").get<int>(), cfg, 0);
    const auto& params = j.at("params");
    for (auto& [name, t] : p.named_tensors()) {
        const auto& pj = params.at(name);
        auto shape = pj.at("shape").get<std::vector<int>>();
        if (shape != t->shape)
            throw ValidationError("checkpoint parameter '" + name + "' has unexpected shape");
        t->data = pj.at("data").get<std::vector<double>>();
    }
    return p;
}

}  // namespace sga
