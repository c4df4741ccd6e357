#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sgadjust/autodiff.hpp"

namespace sga {

// Glorot-uniform init from the run seed; biases zero, layer-norm scale one.
inline Tensor init_weight(int fan_in, int fan_out, Rng& rng) {
    Tensor w({fan_in, fan_out});
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : w.data) x = rng.uniform(-bound, bound);
    return w;
}

struct TransformerBlockParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections, E x E
    Tensor w1, b1, w2, b2;                  // feed-forward, E x H and H x E
    Tensor ln1_gain, ln1_shift, ln2_gain, ln2_shift;
    int n_heads = 4;
    double dropout_p = 0.1;

    static TransformerBlockParams init(int e_dim, int hidden, int n_heads, double dropout_p,
                                       Rng& rng) {
        if (e_dim % n_heads != 0)
            throw ConfigError("embedding dimension must be divisible by head count");
        if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout must lie in [0,1)");
        TransformerBlockParams p;
        p.n_heads = n_heads;
        p.dropout_p = dropout_p;
        p.wq = init_weight(e_dim, e_dim, rng);
        p.wk = init_weight(e_dim, e_dim, rng);
        p.wv = init_weight(e_dim, e_dim, rng);
        p.wo = init_weight(e_dim, e_dim, rng);
        p.bq = Tensor({e_dim});
        p.bk = Tensor({e_dim});
        p.bv = Tensor({e_dim});
        p.bo = Tensor({e_dim});
        p.w1 = init_weight(e_dim, hidden, rng);
        p.b1 = Tensor({hidden});
        p.w2 = init_weight(hidden, e_dim, rng);
        p.b2 = Tensor({e_dim});
        p.ln1_gain = Tensor({e_dim}, 1.0);
        p.ln1_shift = Tensor({e_dim});
        p.ln2_gain = Tensor({e_dim}, 1.0);
        p.ln2_shift = Tensor({e_dim});
        return p;
    }

    // stable enumeration used by checkpoints, SGD updates, and grad checks
    std::vector<std::pair<std::string, Tensor*>> named_tensors() {
        return {{"wq", &wq}, {"bq", &bq}, {"wk", &wk}, {"bk", &bk},
                {"wv", &wv}, {"bv", &bv}, {"wo", &wo}, {"bo", &bo},
                {"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2},
                {"ln1_gain", &ln1_gain}, {"ln1_shift", &ln1_shift},
                {"ln2_gain", &ln2_gain}, {"ln2_shift", &ln2_shift}};
    }
};

// Tape-resident handles for one block's parameters.
struct TransformerBlockVars {
    Tape::NodeId wq, bq, wk, bk, wv, bv, wo, bo;
    Tape::NodeId w1, b1, w2, b2;
    Tape::NodeId ln1_gain, ln1_shift, ln2_gain, ln2_shift;
    int n_heads;
    double dropout_p;

    static TransformerBlockVars leaf(Tape& tape, TransformerBlockParams& p, bool requires_grad) {
        TransformerBlockVars v{};
        v.wq = tape.leaf(p.wq, requires_grad);
        v.bq = tape.leaf(p.bq, requires_grad);
        v.wk = tape.leaf(p.wk, requires_grad);
        v.bk = tape.leaf(p.bk, requires_grad);
        v.wv = tape.leaf(p.wv, requires_grad);
        v.bv = tape.leaf(p.bv, requires_grad);
        v.wo = tape.leaf(p.wo, requires_grad);
        v.bo = tape.leaf(p.bo, requires_grad);
        v.w1 = tape.leaf(p.w1, requires_grad);
        v.b1 = tape.leaf(p.b1, requires_grad);
        v.w2 = tape.leaf(p.w2, requires_grad);
        v.b2 = tape.leaf(p.b2, requires_grad);
        v.ln1_gain = tape.leaf(p.ln1_gain, requires_grad);
        v.ln1_shift = tape.leaf(p.ln1_shift, requires_grad);
        v.ln2_gain = tape.leaf(p.ln2_gain, requires_grad);
        v.ln2_shift = tape.leaf(p.ln2_shift, requires_grad);
        v.n_heads = p.n_heads;
        v.dropout_p = p.dropout_p;
        return v;
    }

    std::vector<Tape::NodeId> ids() const {
        return {wq, bq, wk, bk, wv, bv, wo, bo, w1, b1, w2, b2,
                ln1_gain, ln1_shift, ln2_gain, ln2_shift};
    }
};

inline Tape::NodeId multi_head_attention(Tape& tape, Tape::NodeId x,
                                         const TransformerBlockVars& v) {
    const auto& shape = tape.value(x).shape;
    if (shape.size() != 3) throw ShapeError("attention expects (N,S,E) input");
    const int e_dim = shape[2];
    const int dk = e_dim / v.n_heads;
    auto q = tape.split_heads(tape.linear(x, v.wq, v.bq), v.n_heads);
    auto k = tape.split_heads(tape.linear(x, v.wk, v.bk), v.n_heads);
    auto val = tape.split_heads(tape.linear(x, v.wv, v.bv), v.n_heads);
    auto scores = tape.scale(tape.bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(dk));
    auto attn = tape.softmax_lastdim(scores);
    auto ctx = tape.merge_heads(tape.bmm(attn, val), v.n_heads);
    return tape.linear(ctx, v.wo, v.bo);
}

// Post-norm encoder block: attention -> dropout -> residual -> LN ->
// FFN (linear, ReLU, dropout, linear) -> dropout -> residual -> LN.
inline Tape::NodeId transformer_block(Tape& tape, Tape::NodeId x, const TransformerBlockVars& v,
                                      bool train_mode, Rng* rng) {
    auto attended = multi_head_attention(tape, x, v);
    auto x2 = tape.add(x, tape.dropout(attended, v.dropout_p, train_mode, rng));
    x2 = tape.layer_norm(x2, v.ln1_gain, v.ln1_shift);
    auto y = tape.relu(tape.linear(x2, v.w1, v.b1));
    y = tape.dropout(y, v.dropout_p, train_mode, rng);
    y = tape.linear(y, v.w2, v.b2);
    y = tape.add(x2, tape.dropout(y, v.dropout_p, train_mode, rng));
    return tape.layer_norm(y, v.ln2_gain, v.ln2_shift);
}

}  // namespace sga
