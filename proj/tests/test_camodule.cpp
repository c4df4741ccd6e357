#include <doctest.h>

#include "sgadjust/camodule.hpp"

using namespace sga;

namespace {

CAModuleConfig small_cfg() {
    CAModuleConfig cfg;
    cfg.e_dim = 8;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.dropout = 0.0;
    return cfg;
}

Dataset small_corpus(std::uint64_t seed = 1) {
    SynthConfig cfg;
    cfg.n_objects = 6;
    cfg.n_predicates = 4;
    cfg.n_scenes = 40;
    cfg.affinity_clusters = 2;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("init is deterministic and validates divisibility") {
    auto a = init_camodule(6, 4, small_cfg(), 3);
    auto b = init_camodule(6, 4, small_cfg(), 3);
    auto na = a.named_tensors();
    auto nb = b.named_tensors();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) CHECK(na[i].second->data == nb[i].second->data);

    CAModuleConfig bad = small_cfg();
    bad.e_dim = 6;
    bad.n_heads = 4;
    CHECK_THROWS_AS(init_camodule(6, 4, bad, 0), ConfigError);
}

TEST_CASE("forward contract") {
    auto ds = small_corpus();
    auto dists = extract_distributions(ds);
    auto params = init_camodule(dists.n_objects(), dists.n_predicates(), small_cfg(), 5);
    auto all = ds.all_instances();
    std::vector<Instance> batch(all.begin(), all.begin() + 7);
    auto sub = batch_subdistributions(dists, batch);
    auto f = camodule_forward(params, sub);

    SUBCASE("shape is (|B|, N_r) and entries are non-negative") {
        CHECK(f.factors.size() == batch.size());
        for (const auto& row : f.factors) {
            CHECK(row.size() == static_cast<std::size_t>(dists.n_predicates()));
            for (double v : row) CHECK(v >= 0.0);
        }
    }
    SUBCASE("identical (subject, object) categories give identical factor rows") {
        std::vector<Instance> dup = {{2, 0, 3, "x"}, {2, 1, 3, "y"}};
        auto fd = camodule_forward(params, batch_subdistributions(dists, dup));
        CHECK(fd.factors[0] == fd.factors[1]);
    }
}

TEST_CASE("logit adjustment") {
    SUBCASE("unit factors leave logits unchanged") {
        AdjustmentFactors f;
        f.factors = {{1.0, 1.0, 1.0}};
        auto out = adjust_logits({{0.4, -1.0, 2.0}}, f, AdjustMode::Literal);
        CHECK(out[0] == std::vector<double>{0.4, -1.0, 2.0});
    }
    SUBCASE("[2,1] with factors [0.5,3] moves the argmax") {
        auto out = adjust_logits_row({2.0, 1.0}, {0.5, 3.0}, AdjustMode::Literal);
        CHECK(out == std::vector<double>{1.0, 3.0});
        CHECK(out[1] > out[0]);
    }
    SUBCASE("uniform positive factor preserves argmax on non-negative rows") {
        std::vector<double> row = {0.0, 2.0, 1.5};
        auto out = adjust_logits_row(row, {4.0, 4.0, 4.0}, AdjustMode::Literal);
        auto arg = std::max_element(out.begin(), out.end()) - out.begin();
        CHECK(arg == 1);
    }
    SUBCASE("softplus mode applies factors to softplus(logits)") {
        auto out = adjust_logits_row({-1.0}, {2.0}, AdjustMode::Softplus);
        CHECK(out[0] == doctest::Approx(2.0 * std::log1p(std::exp(-1.0))).epsilon(1e-12));
    }
    SUBCASE("length mismatch throws") {
        CHECK_THROWS_AS(adjust_logits_row({1.0, 2.0}, {1.0}, AdjustMode::Literal), ShapeError);
    }
}

TEST_CASE("vanilla adjustment") {
    SUBCASE("reciprocal of frequencies") {
        CHECK(vanilla_adjustment({0.5, 0.25, 0.25}) == std::vector<double>{2.0, 4.0, 4.0});
    }
    SUBCASE("uniform R keeps argmax of non-negative rows") {
        auto a = vanilla_adjustment({0.25, 0.25, 0.25, 0.25});
        std::vector<double> row = {0.1, 0.9, 0.3, 0.0};
        auto adj = adjust_logits_row(row, a, AdjustMode::Literal);
        CHECK(std::max_element(adj.begin(), adj.end()) - adj.begin() == 1);
    }
    SUBCASE("zero entry stays zero") {
        CHECK(vanilla_adjustment({0.5, 0.0, 0.5}) == std::vector<double>{2.0, 0.0, 2.0});
    }
    SUBCASE("all-zero R is rejected") {
        CHECK_THROWS_AS(vanilla_adjustment({0.0, 0.0}), DomainError);
    }
}

TEST_CASE("training improves the loss and is deterministic") {
    auto ds = small_corpus(7);
    auto dists = extract_distributions(ds);
    BaseTrainConfig bc;
    bc.seed = 8;
    auto base = train_base(ds, bc);

    CAModuleConfig mc = small_cfg();
    mc.adjust_mode = AdjustMode::Softplus;
    TrainConfig tc;
    tc.epochs = 8;
    tc.seed = 9;

    // monotone improvement, median over 5 seeds
    int improved = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        TrainConfig t2 = tc;
        t2.seed = 100 + s;
        auto res = train_camodule(base, dists, ds, t2,
                                  init_camodule(dists.n_objects(), dists.n_predicates(), mc, s));
        if (res.loss_curve.back() < res.loss_curve.front()) ++improved;
    }
    CHECK(improved >= 3);

    SUBCASE("same seed gives the same loss curve") {
        auto r1 = train_camodule(base, dists, ds, tc,
                                 init_camodule(dists.n_objects(), dists.n_predicates(), mc, 1));
        auto r2 = train_camodule(base, dists, ds, tc,
                                 init_camodule(dists.n_objects(), dists.n_predicates(), mc, 1));
        CHECK(r1.loss_curve == r2.loss_curve);
    }
    SUBCASE("identity-factor ablation reproduces the unadjusted loss") {
        TrainConfig ident = tc;
        ident.identity_factors = true;
        CAModuleConfig literal = small_cfg();  // literal mode: adjusted == raw logits
        auto res = train_camodule(base, dists, ds, ident,
                                  init_camodule(dists.n_objects(), dists.n_predicates(), literal, 1));
        // recompute the unadjusted mean CE over the same shuffled batches
        TrainConfig again = ident;
        auto res2 = train_camodule(base, dists, ds, again,
                                   init_camodule(dists.n_objects(), dists.n_predicates(), literal, 2));
        CHECK(res.loss_curve == res2.loss_curve);  // params never move, init irrelevant
    }
}

TEST_CASE("gradients flow to every parameter and the base model stays frozen") {
    auto ds = small_corpus(3);
    auto dists = extract_distributions(ds);
    auto params = init_camodule(dists.n_objects(), dists.n_predicates(), small_cfg(), 4);
    auto all = ds.all_instances();
    std::vector<Instance> batch(all.begin(), all.begin() + 6);
    std::vector<int> labels;
    for (const auto& in : batch) labels.push_back(in.predicate_cat);
    auto sub = batch_subdistributions(dists, batch);

    Tensor logits({6, dists.n_predicates()});
    Rng rng(12);
    for (auto& x : logits.data) x = rng.normal();

    Tape tape;
    auto vars = CAModuleVars::leaf(tape, params, true);
    auto logit_leaf = tape.leaf(logits, false);
    auto factors = camodule_forward_on_tape(tape, vars, sub, params.cfg, false, nullptr);
    auto loss = tape.cross_entropy_mean(tape.mul(tape.softplus(logit_leaf), factors), labels);
    tape.backward(loss);

    std::vector<Tape::NodeId> ids = {vars.w_o, vars.b_o, vars.w_c, vars.b_c, vars.w_p,
                                     vars.b_p, vars.w_r, vars.b_r, vars.out_w, vars.out_b};
    for (auto id : vars.t_oc.ids()) ids.push_back(id);
    for (auto id : vars.t_ocp.ids()) ids.push_back(id);
    for (auto id : vars.t_cppr.ids()) ids.push_back(id);
    for (auto id : ids) {
        double norm = 0.0;
        for (double g : tape.grad(id).data) norm += g * g;
        CHECK(norm > 0.0);
    }
    // frozen inputs accumulate no gradient
    for (double g : tape.grad(logit_leaf).data) CHECK(g == 0.0);
}

TEST_CASE("adjustment tensor") {
    auto ds = small_corpus(5);
    auto dists = extract_distributions(ds);
    auto params = init_camodule(dists.n_objects(), dists.n_predicates(), small_cfg(), 6);
    auto t = materialize_adjustment_tensor(params, dists);

    SUBCASE("shape") {
        CHECK(t.n_objects == dists.n_objects());
        CHECK(t.n_predicates == dists.n_predicates());
        CHECK(t.values.size() ==
              static_cast<std::size_t>(t.n_objects) * t.n_predicates * t.n_objects);
    }
    SUBCASE("slice equals a singleton-batch forward") {
        std::vector<Instance> one = {{2, 0, 4, ""}};
        auto f = camodule_forward(params, batch_subdistributions(dists, one));
        CHECK(t.slice(2, 4) == f.factors[0]);
    }
    SUBCASE("distribution-value collisions give identical slices") {
        // symmetric two-object corpus: (0,1) and (1,0) see identical
        // (O-lookup, C, P) inputs
        Dataset sym;
        sym.vocabulary.object_names = {"a", "b"};
        sym.vocabulary.predicate_names = {"p", "q"};
        Scene s;
        s.scene_id = "s0";
        s.instances = {{0, 0, 1, "s0"}, {1, 1, 0, "s0"}};
        sym.scenes.push_back(s);
        auto sd = extract_distributions(sym);
        auto sp = init_camodule(2, 2, small_cfg(), 7);
        auto st = materialize_adjustment_tensor(sp, sd);
        CHECK(st.slice(0, 1) == st.slice(1, 0));
    }
}

TEST_CASE("triplet-level dependence: different pairs can get different factors") {
    auto ds = small_corpus(9);
    auto dists = extract_distributions(ds);
    auto params = init_camodule(dists.n_objects(), dists.n_predicates(), small_cfg(), 10);
    auto t = materialize_adjustment_tensor(params, dists);
    bool found_difference = false;
    for (int i = 0; i < t.n_objects && !found_difference; ++i)
        for (int j = 0; j < t.n_objects && !found_difference; ++j)
            if (t.slice(0, 1) != t.slice(i, j) && !(i == 0 && j == 1)) found_difference = true;
    CHECK(found_difference);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    auto params = init_camodule(6, 4, small_cfg(), 11);
    auto back = camodule_from_json(camodule_to_json(params));
    auto na = params.named_tensors();
    auto nb = back.named_tensors();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].first == nb[i].first);
        CHECK(na[i].second->data == nb[i].second->data);
    }
    CHECK(back.cfg.adjust_mode == params.cfg.adjust_mode);
}

TEST_CASE("adjust mode string round-trip") {
    CHECK(adjust_mode_from_string("literal") == AdjustMode::Literal);
    CHECK(adjust_mode_from_string("softplus") == AdjustMode::Softplus);
    CHECK_THROWS_AS(adjust_mode_from_string("verbatim"), ConfigError);
}
