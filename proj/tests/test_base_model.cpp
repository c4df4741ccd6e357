#include <doctest.h>

#include <filesystem>

#include "sgadjust/base_model.hpp"
#include "sgadjust/eval.hpp"
#include "sgadjust/pipeline.hpp"

using namespace sga;

static std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// corpus where the predicate is a deterministic function of the pair
static Dataset separable_corpus() {
    Dataset ds;
    ds.vocabulary.object_names = {"a", "b", "c"};
    ds.vocabulary.predicate_names = {"p", "q"};
    for (int s = 0; s < 30; ++s) {
        Scene scene;
        scene.scene_id = "s" + std::to_string(s);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                // pure, linearly separable function of the pair
                int pred = (i + j >= 3) ? 1 : 0;
                scene.instances.push_back({i, pred, j, scene.scene_id});
            }
        ds.scenes.push_back(std::move(scene));
    }
    ds.validate();
    return ds;
}

TEST_CASE("separable corpus trains to full accuracy with noise off") {
    auto ds = separable_corpus();
    BaseTrainConfig cfg;
    cfg.d_noise = 0;
    cfg.epochs = 2000;
    cfg.lr = 2.0;
    auto m = train_base(ds, cfg);
    std::size_t correct = 0, total = 0;
    for (const auto& s : ds.scenes)
        for (std::size_t i = 0; i < s.instances.size(); ++i) {
            auto z = m.logits_for(s.instances[i], {s.scene_id, static_cast<int>(i)});
            int arg = z[0] >= z[1] ? 0 : 1;
            if (arg == s.instances[i].predicate_cat) ++correct;
            ++total;
        }
    CHECK(correct == total);
}

TEST_CASE("skewed corpus favors head predicates on held-out data") {
    SynthConfig synth;
    synth.seed = 21;
    auto ds = generate_synthetic(synth);
    auto sp = split_train_test(ds, 0.3, 22);
    BaseTrainConfig cfg;
    cfg.seed = 23;
    auto m = train_base(sp.train, cfg);

    auto R = extract_relationship_distribution(sp.train);
    int head = 0;
    for (std::size_t k = 1; k < R.size(); ++k)
        if (R[k] > R[static_cast<std::size_t>(head)]) head = static_cast<int>(k);

    auto scored = score_dataset(sp.test, base_provider(m));
    auto per_pred = per_predicate_recall(scored, 50, static_cast<int>(R.size()));
    double head_recall = per_pred[static_cast<std::size_t>(head)];
    double tail_sum = 0.0;
    int tail_n = 0;
    for (std::size_t k = 0; k < per_pred.size(); ++k)
        if (static_cast<int>(k) != head && per_pred[k] >= 0.0) {
            tail_sum += per_pred[k];
            ++tail_n;
        }
    REQUIRE(tail_n > 0);
    CHECK(head_recall > tail_sum / tail_n);  // direction only
}

TEST_CASE("training is seed-deterministic") {
    auto ds = separable_corpus();
    BaseTrainConfig cfg;
    cfg.epochs = 50;
    cfg.seed = 3;
    auto a = train_base(ds, cfg);
    auto b = train_base(ds, cfg);
    CHECK(a.weight == b.weight);
    CHECK(a.bias == b.bias);
}

TEST_CASE("logits_for") {
    FrozenBaseModel m;
    m.n_objects = 3;
    m.n_predicates = 2;
    m.d_noise = 2;
    m.noise_sigma = 0.5;
    m.feature_seed = 7;
    m.weight.assign(static_cast<std::size_t>(m.feature_dim()), {0.0, 0.0});
    m.bias = {1.5, -0.5};

    SUBCASE("zero weights give the bias for every record") {
        auto z = m.logits_for({0, 0, 1, "sX"}, {"sX", 0});
        CHECK(z == std::vector<double>{1.5, -0.5});
    }
    SUBCASE("dot-product recomputation to 1e-12") {
        Rng rng(11);
        for (auto& row : m.weight)
            for (auto& x : row) x = rng.normal();
        Instance in{2, 1, 0, "sY"};
        InstanceKey key{"sY", 4};
        auto f = m.features(in, key);
        auto z = m.logits_for(in, key);
        CHECK(z.size() == 2);
        for (int k = 0; k < 2; ++k) {
            double expect = m.bias[static_cast<std::size_t>(k)];
            for (std::size_t d = 0; d < f.size(); ++d)
                expect += f[d] * m.weight[d][static_cast<std::size_t>(k)];
            CHECK(z[static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-12));
            CHECK(std::isfinite(z[static_cast<std::size_t>(k)]));
        }
    }
    SUBCASE("noise features are a pure function of (seed, key)") {
        Instance in{0, 0, 1, "sZ"};
        CHECK(m.features(in, {"sZ", 2}) == m.features(in, {"sZ", 2}));
        CHECK(m.features(in, {"sZ", 2}) != m.features(in, {"sZ", 3}));
    }
}

TEST_CASE("model json round-trip") {
    auto ds = separable_corpus();
    BaseTrainConfig cfg;
    cfg.epochs = 20;
    auto m = train_base(ds, cfg);
    auto m2 = base_model_from_json(base_model_to_json(m));
    CHECK(m2.weight == m.weight);
    CHECK(m2.bias == m.bias);
    CHECK(m2.feature_seed == m.feature_seed);
}

TEST_CASE("logits interchange") {
    auto ds = separable_corpus();
    BaseTrainConfig cfg;
    cfg.epochs = 5;
    auto m = train_base(ds, cfg);
    auto records = base_logits(m, ds);
    auto path = temp_path("sga_logits.jsonl");

    SUBCASE("export then import round-trips") {
        export_logits(records, path);
        auto back = import_logits(path, m.n_predicates);
        REQUIRE(back.size() == records.size());
        for (std::size_t i = 0; i < back.size(); ++i) {
            CHECK(back[i].key == records[i].key);
            CHECK(back[i].logits == records[i].logits);
        }
    }
    SUBCASE("wrong-length row names the record") {
        write_file(path, R"({"scene":"s0","pos":1,"logits":[0.5,0.25,0.1]})"
                          "\n");
        CHECK_THROWS_WITH_AS(import_logits(path, 5), doctest::Contains("pos 1"), ValidationError);
    }
    SUBCASE("duplicate record is rejected") {
        write_file(path, R"({"scene":"s0","pos":0,"logits":[1,2]})"
                          "\n"
                          R"({"scene":"s0","pos":0,"logits":[3,4]})"
                          "\n");
        CHECK_THROWS_WITH_AS(import_logits(path, 2), doctest::Contains("duplicate"),
                             ValidationError);
    }
    SUBCASE("hand-written external file is accepted") {
        write_file(path, R"({"scene":"ext","pos":0,"logits":[0.1,-0.2]})"
                          "\n"
                          R"({"scene":"ext","pos":1,"logits":[2.0,0.0]})"
                          "\n");
        auto ext = import_logits(path, 2);
        CHECK(ext.size() == 2);
        CHECK(ext[1].logits[0] == 2.0);
    }
}
