#include <doctest.h>

#include "sgadjust/transformer.hpp"

using namespace sga;

namespace {

Tensor random_seq(int n, int s, int e, Rng& rng) {
    Tensor t({n, s, e});
    for (auto& x : t.data) x = rng.normal();
    return t;
}

Tensor run_block(TransformerBlockParams& p, const Tensor& x, bool train, Rng* rng) {
    Tape tape;
    auto vars = TransformerBlockVars::leaf(tape, p, false);
    auto out = transformer_block(tape, tape.leaf(x), vars, train, rng);
    return tape.value(out);
}

}  // namespace

TEST_CASE("block preserves the input shape") {
    Rng rng(1);
    auto p = TransformerBlockParams::init(8, 16, 2, 0.1, rng);
    auto x = random_seq(3, 2, 8, rng);
    auto y = run_block(p, x, false, nullptr);
    CHECK(y.shape == x.shape);
}

TEST_CASE("eval mode is deterministic across calls") {
    Rng rng(2);
    auto p = TransformerBlockParams::init(8, 16, 4, 0.3, rng);
    auto x = random_seq(4, 2, 8, rng);
    auto a = run_block(p, x, false, nullptr);
    auto b = run_block(p, x, false, nullptr);
    CHECK(a.data == b.data);
}

TEST_CASE("permuting the batch axis permutes the output rows identically") {
    Rng rng(3);
    const int N = 5, S = 2, E = 8;
    auto p = TransformerBlockParams::init(E, 16, 2, 0.0, rng);
    auto x = random_seq(N, S, E, rng);
    auto y = run_block(p, x, false, nullptr);

    std::vector<int> perm = {3, 0, 4, 1, 2};
    Tensor xp({N, S, E});
    for (int n = 0; n < N; ++n)
        for (int s = 0; s < S; ++s)
            for (int e = 0; e < E; ++e) xp(n, s, e) = x(perm[static_cast<std::size_t>(n)], s, e);
    auto yp = run_block(p, xp, false, nullptr);
    for (int n = 0; n < N; ++n)
        for (int s = 0; s < S; ++s)
            for (int e = 0; e < E; ++e)
                CHECK(yp(n, s, e) ==
                      doctest::Approx(y(perm[static_cast<std::size_t>(n)], s, e)).epsilon(1e-12));
}

TEST_CASE("init validates configuration") {
    Rng rng(4);
    CHECK_THROWS_AS(TransformerBlockParams::init(6, 12, 4, 0.1, rng), ConfigError);
    CHECK_THROWS_AS(TransformerBlockParams::init(8, 16, 2, 1.0, rng), ConfigError);
}

TEST_CASE("init is seed-deterministic") {
    Rng a(7), b(7);
    auto pa = TransformerBlockParams::init(8, 16, 2, 0.1, a);
    auto pb = TransformerBlockParams::init(8, 16, 2, 0.1, b);
    for (std::size_t i = 0; i < pa.named_tensors().size(); ++i)
        CHECK(pa.named_tensors()[i].second->data == pb.named_tensors()[i].second->data);
}

TEST_CASE("glorot bounds hold") {
    Rng rng(5);
    auto w = init_weight(30, 50, rng);
    double bound = std::sqrt(6.0 / 80.0);
    for (double x : w.data) {
        CHECK(x >= -bound);
        CHECK(x <= bound);
    }
}

TEST_CASE("gradients flow to every block parameter") {
    Rng rng(6);
    auto p = TransformerBlockParams::init(8, 16, 2, 0.0, rng);
    auto x = random_seq(3, 2, 8, rng);
    Tape tape;
    auto vars = TransformerBlockVars::leaf(tape, p, true);
    auto out = transformer_block(tape, tape.leaf(x), vars, false, nullptr);
    tape.backward(tape.sum(tape.mul(out, out)));
    for (auto id : vars.ids()) {
        double norm = 0.0;
        for (double g : tape.grad(id).data) norm += g * g;
        CHECK(norm > 0.0);
    }
}

TEST_CASE("finite-difference check through a whole block") {
    Rng rng(8);
    auto p = TransformerBlockParams::init(4, 8, 2, 0.0, rng);
    Tensor x = random_seq(2, 2, 4, rng);

    // analytic gradients
    std::vector<double> analytic;
    {
        Tape tape;
        auto vars = TransformerBlockVars::leaf(tape, p, true);
        auto out = transformer_block(tape, tape.leaf(x), vars, false, nullptr);
        tape.backward(tape.sum(tape.mul(out, out)));
        for (auto id : vars.ids())
            for (double g : tape.grad(id).data) analytic.push_back(g);
    }
    std::vector<double*> ptrs;
    for (auto& [name, t] : p.named_tensors())
        for (auto& v : t->data) ptrs.push_back(&v);
    auto f = [&]() {
        Tape tape;
        auto vars = TransformerBlockVars::leaf(tape, p, true);
        auto out = transformer_block(tape, tape.leaf(x), vars, false, nullptr);
        return tape.value(tape.sum(tape.mul(out, out))).data[0];
    };
    double err = grad_check(f, [&]() { return analytic; }, ptrs, 1e-5);
    CHECK(err <= 1e-4);
}
