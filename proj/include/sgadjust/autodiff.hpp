#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "sgadjust/common.hpp"

namespace sga {

// Dense row-major double tensor. Rank is small (<= 3 in practice).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel(shape)), fill);
    }

    static std::int64_t numel(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= d;
        }
        return n;
    }
    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

    double& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double& operator()(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double operator()(int i) const { return data[static_cast<std::size_t>(i)]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double operator()(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    // rows/cols view: collapse all leading dims, keep the last one
    int last_dim() const { return shape.empty() ? 1 : shape.back(); }
    std::int64_t n_rows() const { return last_dim() ? size() / last_dim() : 0; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Reverse-mode tape. Node ids are topologically ordered by construction, so
// backward is a single reverse sweep. One tape per forward pass; parameters
// enter as leaves each time.
class Tape {
  public:
    using NodeId = int;

    NodeId leaf(Tensor value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, {});
    }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    // ---- primitives -----------------------------------------------------

    NodeId add(NodeId a, NodeId b) {
        const auto& va = value(a);
        const auto& vb = value(b);
        if (!va.same_shape(vb)) throw ShapeError("add: shape mismatch");
        Tensor out(va.shape);
        for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] = va.data[i] + vb.data[i];
        NodeId id = push(std::move(out), any_grad({a, b}), [this, a, b](const Node& n) {
            accumulate(a, n.grad.data);
            accumulate(b, n.grad.data);
        });
        return id;
    }

    NodeId mul(NodeId a, NodeId b) {
        const auto& va = value(a);
        const auto& vb = value(b);
        if (!va.same_shape(vb)) throw ShapeError("mul: shape mismatch");
        Tensor out(va.shape);
        for (std::int64_t i = 0; i < out.size(); ++i) out.data[i] = va.data[i] * vb.data[i];
        return push(std::move(out), any_grad({a, b}), [this, a, b](const Node& n) {
            const auto& va2 = value(a);
            const auto& vb2 = value(b);
            std::vector<double> ga(va2.data.size()), gb(vb2.data.size());
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] = n.grad.data[i] * vb2.data[i];
                gb[i] = n.grad.data[i] * va2.data[i];
            }
            accumulate(a, ga);
            accumulate(b, gb);
        });
    }

    NodeId scale(NodeId a, double s) {
        Tensor out = value(a);
        for (auto& x : out.data) x *= s;
        return push(std::move(out), any_grad({a}), [this, a, s](const Node& n) {
            std::vector<double> g(n.grad.data.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad.data[i] * s;
            accumulate(a, g);
        });
    }

    NodeId relu(NodeId a) {
        Tensor out = value(a);
        for (auto& x : out.data) x = x > 0.0 ? x : 0.0;
        return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
            const auto& va = value(a);
            std::vector<double> g(va.data.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = va.data[i] > 0.0 ? n.grad.data[i] : 0.0;
            accumulate(a, g);
        });
    }

    NodeId softplus(NodeId a) {
        const auto& va = value(a);
        Tensor out(va.shape);
        for (std::int64_t i = 0; i < out.size(); ++i) {
            double x = va.data[i];
            out.data[i] = x > 30.0 ? x : std::log1p(std::exp(x));
        }
        return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
            const auto& va2 = value(a);
            std::vector<double> g(va2.data.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = n.grad.data[i] / (1.0 + std::exp(-va2.data[i]));
            accumulate(a, g);
        });
    }

    // x: (..., In), w: (In, Out), bias: (Out) or -1 for none
    NodeId linear(NodeId x, NodeId w, NodeId bias = -1) {
        const auto& vx = value(x);
        const auto& vw = value(w);
        if (vw.shape.size() != 2 || vx.last_dim() != vw.shape[0])
            throw ShapeError("linear: weight shape mismatch");
        const int in = vw.shape[0], out_dim = vw.shape[1];
        const auto rows = vx.n_rows();
        std::vector<int> out_shape = vx.shape;
        out_shape.back() = out_dim;
        Tensor out(out_shape);
        const double* bptr = nullptr;
        if (bias >= 0) {
            const auto& vb = value(bias);
            if (vb.size() != out_dim) throw ShapeError("linear: bias length mismatch");
            bptr = vb.data.data();
        }
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = vx.data.data() + r * in;
            double* yr = out.data.data() + r * out_dim;
            if (bptr)
                for (int o = 0; o < out_dim; ++o) yr[o] = bptr[o];
            for (int i = 0; i < in; ++i) {
                const double xi = xr[i];
                const double* wrow = vw.data.data() + static_cast<std::size_t>(i) * out_dim;
                for (int o = 0; o < out_dim; ++o) yr[o] += xi * wrow[o];
            }
        }
        return push(std::move(out), any_grad({x, w, bias}),
                    [this, x, w, bias, in, out_dim, rows](const Node& n) {
                        const auto& vx2 = value(x);
                        const auto& vw2 = value(w);
                        std::vector<double> gx(vx2.data.size(), 0.0);
                        std::vector<double> gw(vw2.data.size(), 0.0);
                        for (std::int64_t r = 0; r < rows; ++r) {
                            const double* xr = vx2.data.data() + r * in;
                            const double* gy = n.grad.data.data() + r * out_dim;
                            double* gxr = gx.data() + r * in;
                            for (int i = 0; i < in; ++i) {
                                const double* wrow =
                                    vw2.data.data() + static_cast<std::size_t>(i) * out_dim;
                                double* gwrow = gw.data() + static_cast<std::size_t>(i) * out_dim;
                                double acc = 0.0;
                                const double xi = xr[i];
                                for (int o = 0; o < out_dim; ++o) {
                                    acc += gy[o] * wrow[o];
                                    gwrow[o] += xi * gy[o];
                                }
                                gxr[i] = acc;
                            }
                        }
                        accumulate(x, gx);
                        accumulate(w, gw);
                        if (bias >= 0) {
                            std::vector<double> gb(static_cast<std::size_t>(out_dim), 0.0);
                            for (std::int64_t r = 0; r < rows; ++r) {
                                const double* gy = n.grad.data.data() + r * out_dim;
                                for (int o = 0; o < out_dim; ++o) gb[o] += gy[o];
                            }
                            accumulate(bias, gb);
                        }
                    });
    }

    // batched matmul on 3D tensors: (B,M,K) x (B,K,N) -> (B,M,N);
    // transpose_b treats b as (B,N,K)
    NodeId bmm(NodeId a, NodeId b, bool transpose_b = false) {
        const auto& va = value(a);
        const auto& vb = value(b);
        if (va.shape.size() != 3 || vb.shape.size() != 3 || va.shape[0] != vb.shape[0])
            throw ShapeError("bmm: expects matching 3D tensors");
        const int B = va.shape[0], M = va.shape[1], K = va.shape[2];
        const int N = transpose_b ? vb.shape[1] : vb.shape[2];
        const int Kb = transpose_b ? vb.shape[2] : vb.shape[1];
        if (K != Kb) throw ShapeError("bmm: inner dimension mismatch");
        Tensor out({B, M, N});
        for (int bb = 0; bb < B; ++bb)
            for (int m = 0; m < M; ++m)
                for (int nn = 0; nn < N; ++nn) {
                    double acc = 0.0;
                    for (int k = 0; k < K; ++k) {
                        double bv = transpose_b ? vb(bb, nn, k) : vb(bb, k, nn);
                        acc += va(bb, m, k) * bv;
                    }
                    out(bb, m, nn) = acc;
                }
        return push(std::move(out), any_grad({a, b}),
                    [this, a, b, transpose_b, B, M, N, K](const Node& n) {
                        const auto& va2 = value(a);
                        const auto& vb2 = value(b);
                        Tensor ga(va2.shape);
                        Tensor gb(vb2.shape);
                        for (int bb = 0; bb < B; ++bb)
                            for (int m = 0; m < M; ++m)
                                for (int nn = 0; nn < N; ++nn) {
                                    double g = n.grad(bb, m, nn);
                                    for (int k = 0; k < K; ++k) {
                                        double bv = transpose_b ? vb2(bb, nn, k) : vb2(bb, k, nn);
                                        ga(bb, m, k) += g * bv;
                                        if (transpose_b)
                                            gb(bb, nn, k) += g * va2(bb, m, k);
                                        else
                                            gb(bb, k, nn) += g * va2(bb, m, k);
                                    }
                                }
                        accumulate(a, ga.data);
                        accumulate(b, gb.data);
                    });
    }

    NodeId softmax_lastdim(NodeId a) {
        const auto& va = value(a);
        Tensor out(va.shape);
        const int d = va.last_dim();
        const auto rows = va.n_rows();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* x = va.data.data() + r * d;
            double* y = out.data.data() + r * d;
            double mx = x[0];
            for (int i = 1; i < d; ++i) mx = std::max(mx, x[i]);
            double z = 0.0;
            for (int i = 0; i < d; ++i) {
                y[i] = std::exp(x[i] - mx);
                z += y[i];
            }
            for (int i = 0; i < d; ++i) y[i] /= z;
        }
        NodeId id = push(std::move(out), any_grad({a}), [this, a, d, rows](const Node& n) {
            std::vector<double> g(n.grad.data.size());
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* y = n.value.data.data() + r * d;
                const double* gy = n.grad.data.data() + r * d;
                double dot = 0.0;
                for (int i = 0; i < d; ++i) dot += gy[i] * y[i];
                for (int i = 0; i < d; ++i) g[r * d + i] = (gy[i] - dot) * y[i];
            }
            accumulate(a, g);
        });
        return id;
    }

    // layer norm over the last dimension; gain/shift are length-d vectors
    NodeId layer_norm(NodeId x, NodeId gain, NodeId shift, double eps = 1e-5) {
        const auto& vx = value(x);
        const int d = vx.last_dim();
        const auto rows = vx.n_rows();
        const auto& vg = value(gain);
        const auto& vs = value(shift);
        if (vg.size() != d || vs.size() != d) throw ShapeError("layer_norm: gain/shift length mismatch");
        Tensor out(vx.shape);
        // saved statistics for the backward pass
        auto xhat = std::make_shared<std::vector<double>>(vx.data.size());
        auto istd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = vx.data.data() + r * d;
            double mu = 0.0;
            for (int i = 0; i < d; ++i) mu += xr[i];
            mu /= d;
            double var = 0.0;
            for (int i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
            var /= d;
            double is = 1.0 / std::sqrt(var + eps);
            (*istd)[static_cast<std::size_t>(r)] = is;
            for (int i = 0; i < d; ++i) {
                double xh = (xr[i] - mu) * is;
                (*xhat)[static_cast<std::size_t>(r * d + i)] = xh;
                out.data[static_cast<std::size_t>(r * d + i)] = vg.data[i] * xh + vs.data[i];
            }
        }
        return push(std::move(out), any_grad({x, gain, shift}),
                    [this, x, gain, shift, d, rows, xhat, istd](const Node& n) {
                        const auto& vg2 = value(gain);
                        std::vector<double> gx(static_cast<std::size_t>(rows * d));
                        std::vector<double> gg(static_cast<std::size_t>(d), 0.0);
                        std::vector<double> gs(static_cast<std::size_t>(d), 0.0);
                        for (std::int64_t r = 0; r < rows; ++r) {
                            const double* gy = n.grad.data.data() + r * d;
                            const double* xh = xhat->data() + r * d;
                            double is = (*istd)[static_cast<std::size_t>(r)];
                            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                            for (int i = 0; i < d; ++i) {
                                double dxh = gy[i] * vg2.data[i];
                                sum_dxh += dxh;
                                sum_dxh_xh += dxh * xh[i];
                                gg[static_cast<std::size_t>(i)] += gy[i] * xh[i];
                                gs[static_cast<std::size_t>(i)] += gy[i];
                            }
                            for (int i = 0; i < d; ++i) {
                                double dxh = gy[i] * vg2.data[i];
                                gx[static_cast<std::size_t>(r * d + i)] =
                                    is * (dxh - sum_dxh / d - xh[i] * sum_dxh_xh / d);
                            }
                        }
                        accumulate(x, gx);
                        accumulate(gain, gg);
                        accumulate(shift, gs);
                    });
    }

    // inverted dropout: identity in eval mode, mask+rescale in train mode
    NodeId dropout(NodeId x, double p, bool train, Rng* rng) {
        if (!train || p <= 0.0) return x;
        if (p >= 1.0) throw DomainError("dropout probability must be < 1");
        if (!rng) throw DomainError("dropout in train mode needs an rng");
        const auto& vx = value(x);
        auto mask = std::make_shared<std::vector<double>>(vx.data.size());
        const double keep = 1.0 - p;
        Tensor out(vx.shape);
        for (std::size_t i = 0; i < vx.data.size(); ++i) {
            double m = rng->uniform() < p ? 0.0 : 1.0 / keep;
            (*mask)[i] = m;
            out.data[i] = vx.data[i] * m;
        }
        return push(std::move(out), any_grad({x}), [this, x, mask](const Node& n) {
            std::vector<double> g(n.grad.data.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad.data[i] * (*mask)[i];
            accumulate(x, g);
        });
    }

    // stack S tensors of shape (N,E) into a sequence tensor (N,S,E)
    NodeId stack_tokens(const std::vector<NodeId>& tokens) {
        if (tokens.empty()) throw ShapeError("stack_tokens: empty token list");
        const auto& v0 = value(tokens[0]);
        if (v0.shape.size() != 2) throw ShapeError("stack_tokens: tokens must be (N,E)");
        const int N = v0.shape[0], E = v0.shape[1];
        const int S = static_cast<int>(tokens.size());
        for (NodeId t : tokens)
            if (!value(t).same_shape(v0)) throw ShapeError("stack_tokens: shape mismatch");
        Tensor out({N, S, E});
        for (int s = 0; s < S; ++s) {
            const auto& vt = value(tokens[s]);
            for (int n = 0; n < N; ++n)
                for (int e = 0; e < E; ++e) out(n, s, e) = vt(n, e);
        }
        std::vector<NodeId> parents = tokens;
        bool rg = false;
        for (NodeId t : tokens) rg = rg || requires_grad(t);
        return push(std::move(out), rg, [this, parents, N, E](const Node& n) {
            for (int s = 0; s < static_cast<int>(parents.size()); ++s) {
                std::vector<double> g(static_cast<std::size_t>(N) * E);
                for (int nn = 0; nn < N; ++nn)
                    for (int e = 0; e < E; ++e)
                        g[static_cast<std::size_t>(nn) * E + e] = n.grad(nn, s, e);
                accumulate(parents[static_cast<std::size_t>(s)], g);
            }
        });
    }

    // mean over the sequence axis: (N,S,E) -> (N,E)
    NodeId mean_tokens(NodeId x) {
        const auto& vx = value(x);
        if (vx.shape.size() != 3) throw ShapeError("mean_tokens: expects (N,S,E)");
        const int N = vx.shape[0], S = vx.shape[1], E = vx.shape[2];
        Tensor out({N, E});
        for (int n = 0; n < N; ++n)
            for (int e = 0; e < E; ++e) {
                double acc = 0.0;
                for (int s = 0; s < S; ++s) acc += vx(n, s, e);
                out(n, e) = acc / S;
            }
        return push(std::move(out), any_grad({x}), [this, x, N, S, E](const Node& n) {
            std::vector<double> g(static_cast<std::size_t>(N) * S * E);
            for (int nn = 0; nn < N; ++nn)
                for (int s = 0; s < S; ++s)
                    for (int e = 0; e < E; ++e)
                        g[(static_cast<std::size_t>(nn) * S + s) * E + e] = n.grad(nn, e) / S;
            accumulate(x, g);
        });
    }

    // (N,S,E) -> (N*h, S, E/h): heads become extra batch entries
    NodeId split_heads(NodeId x, int h) {
        const auto& vx = value(x);
        if (vx.shape.size() != 3) throw ShapeError("split_heads: expects (N,S,E)");
        const int N = vx.shape[0], S = vx.shape[1], E = vx.shape[2];
        if (E % h != 0) throw ShapeError("split_heads: E not divisible by head count");
        const int dk = E / h;
        Tensor out({N * h, S, dk});
        for (int n = 0; n < N; ++n)
            for (int hh = 0; hh < h; ++hh)
                for (int s = 0; s < S; ++s)
                    for (int k = 0; k < dk; ++k) out(n * h + hh, s, k) = vx(n, s, hh * dk + k);
        return push(std::move(out), any_grad({x}), [this, x, h, N, S, E](const Node& n) {
            const int dk = E / h;
            std::vector<double> g(static_cast<std::size_t>(N) * S * E);
            for (int nn = 0; nn < N; ++nn)
                for (int hh = 0; hh < h; ++hh)
                    for (int s = 0; s < S; ++s)
                        for (int k = 0; k < dk; ++k)
                            g[(static_cast<std::size_t>(nn) * S + s) * E + hh * dk + k] =
                                n.grad(nn * h + hh, s, k);
            accumulate(x, g);
        });
    }

    // inverse of split_heads: (N*h, S, dk) -> (N, S, h*dk)
    NodeId merge_heads(NodeId x, int h) {
        const auto& vx = value(x);
        if (vx.shape.size() != 3 || vx.shape[0] % h != 0)
            throw ShapeError("merge_heads: batch not divisible by head count");
        const int N = vx.shape[0] / h, S = vx.shape[1], dk = vx.shape[2];
        Tensor out({N, S, h * dk});
        for (int n = 0; n < N; ++n)
            for (int hh = 0; hh < h; ++hh)
                for (int s = 0; s < S; ++s)
                    for (int k = 0; k < dk; ++k) out(n, s, hh * dk + k) = vx(n * h + hh, s, k);
        return push(std::move(out), any_grad({x}), [this, x, h, N, S, dk](const Node& n) {
            std::vector<double> g(static_cast<std::size_t>(N) * h * S * dk);
            for (int nn = 0; nn < N; ++nn)
                for (int hh = 0; hh < h; ++hh)
                    for (int s = 0; s < S; ++s)
                        for (int k = 0; k < dk; ++k)
                            g[(static_cast<std::size_t>(nn * h + hh) * S + s) * dk + k] =
                                n.grad(nn, s, hh * dk + k);
            accumulate(x, g);
        });
    }

    // broadcast a (1,E) row to (N,E); backward sums over the batch
    NodeId broadcast_row(NodeId x, int n_rows_out) {
        const auto& vx = value(x);
        if (vx.shape.size() != 2 || vx.shape[0] != 1) throw ShapeError("broadcast_row: expects (1,E)");
        const int E = vx.shape[1];
        Tensor out({n_rows_out, E});
        for (int r = 0; r < n_rows_out; ++r)
            for (int e = 0; e < E; ++e) out(r, e) = vx(0, e);
        return push(std::move(out), any_grad({x}), [this, x, n_rows_out, E](const Node& n) {
            std::vector<double> g(static_cast<std::size_t>(E), 0.0);
            for (int r = 0; r < n_rows_out; ++r)
                for (int e = 0; e < E; ++e) g[static_cast<std::size_t>(e)] += n.grad(r, e);
            accumulate(x, g);
        });
    }

    // mean cross-entropy of softmax(logits) against integer labels
    NodeId cross_entropy_mean(NodeId logits, const std::vector<int>& labels) {
        const auto& vl = value(logits);
        if (vl.shape.size() != 2 || vl.shape[0] != static_cast<int>(labels.size()))
            throw ShapeError("cross_entropy_mean: logits/labels mismatch");
        const int N = vl.shape[0], C = vl.shape[1];
        auto probs = std::make_shared<std::vector<double>>(vl.data.size());
        double loss = 0.0;
        for (int n = 0; n < N; ++n) {
            const double* x = vl.data.data() + static_cast<std::size_t>(n) * C;
            double mx = x[0];
            for (int c = 1; c < C; ++c) mx = std::max(mx, x[c]);
            double z = 0.0;
            for (int c = 0; c < C; ++c) z += std::exp(x[c] - mx);
            double logz = std::log(z) + mx;
            for (int c = 0; c < C; ++c)
                (*probs)[static_cast<std::size_t>(n) * C + c] = std::exp(x[c] - logz);
            if (labels[static_cast<std::size_t>(n)] < 0 || labels[static_cast<std::size_t>(n)] >= C)
                throw DomainError("cross_entropy_mean: label out of range");
            loss -= x[labels[static_cast<std::size_t>(n)]] - logz;
        }
        Tensor out(std::vector<int>{});
        out.data = {loss / N};
        return push(std::move(out), any_grad({logits}),
                    [this, logits, labels, probs, N, C](const Node& n) {
                        double g0 = n.grad.data[0];
                        std::vector<double> g(probs->size());
                        for (int nn = 0; nn < N; ++nn)
                            for (int c = 0; c < C; ++c) {
                                double p = (*probs)[static_cast<std::size_t>(nn) * C + c];
                                double y = labels[static_cast<std::size_t>(nn)] == c ? 1.0 : 0.0;
                                g[static_cast<std::size_t>(nn) * C + c] = g0 * (p - y) / N;
                            }
                        accumulate(logits, g);
                    });
    }

    NodeId sum(NodeId a) {
        const auto& va = value(a);
        Tensor out(std::vector<int>{});
        out.data = {std::accumulate(va.data.begin(), va.data.end(), 0.0)};
        return push(std::move(out), any_grad({a}), [this, a](const Node& n) {
            const auto& va2 = value(a);
            std::vector<double> g(va2.data.size(), n.grad.data[0]);
            accumulate(a, g);
        });
    }

    void backward(NodeId loss) {
        auto& ln = nodes_[static_cast<std::size_t>(loss)];
        if (ln.value.size() != 1 || !ln.value.shape.empty())
            throw DomainError("backward requires a scalar loss node");
        for (auto& n : nodes_) n.grad = Tensor(n.value.shape);
        ln.grad.data[0] = 1.0;
        for (NodeId id = loss; id >= 0; --id) {
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (n.back && n.requires_grad) n.back(n);
        }
    }

    bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(const Node&)> back;
    };

    bool any_grad(std::initializer_list<NodeId> ids) const {
        for (NodeId id : ids)
            if (id >= 0 && requires_grad(id)) return true;
        return false;
    }

    NodeId push(Tensor value, bool requires_grad, std::function<void(const Node&)> back) {
        Node n;
        n.value = std::move(value);
        n.grad = Tensor(n.value.shape);
        n.requires_grad = requires_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    void accumulate(NodeId id, const std::vector<double>& g) {
        if (id < 0) return;
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return;
        if (n.grad.data.size() != g.size()) throw ShapeError("gradient accumulation size mismatch");
        for (std::size_t i = 0; i < g.size(); ++i) n.grad.data[i] += g[i];
    }

    std::vector<Node> nodes_;
};

// Max relative finite-difference error over a flat parameter list.
// f() must be deterministic (dropout off) and re-read params on every call.
// `floor` caps the denominator from below so gradients at the central-
// difference noise level (|loss| * machine-eps / epsilon) are compared on an
// absolute scale instead of drowning in their own roundoff.
inline double grad_check(const std::function<double()>& f,
                         const std::function<std::vector<double>()>& analytic_grads,
                         std::vector<double*> params, double epsilon = 1e-5,
                         double floor = 1e-5) {
    auto analytic = analytic_grads();
    if (analytic.size() != params.size())
        throw DomainError("grad_check: gradient/parameter count mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = *params[i];
        *params[i] = saved + epsilon;
        double up = f();
        *params[i] = saved - epsilon;
        double down = f();
        *params[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw DomainError("grad_check: non-finite loss during probing");
        double numeric = (up - down) / (2.0 * epsilon);
        double denom = std::max(floor, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace sga
