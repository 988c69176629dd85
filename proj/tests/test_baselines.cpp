#include <doctest.h>

#include <cmath>
#include <numeric>

#include "kgllm/baselines.hpp"
#include "kgllm/random.hpp"
#include "support.hpp"

using namespace kgllm;

namespace {

BaselineModel hand_model(ModelKind kind, std::size_t dim) {
    TrainConfig config;
    config.dim = dim;
    auto m = init_model(kind, 3, 2, config);
    // entity i = (i+1, -(i+1), ...); relation j = (j+0.5, ...)
    for (std::size_t e = 0; e < 3; ++e) {
        for (std::size_t i = 0; i < dim; ++i) {
            m.entity_re[e * dim + i] = (i % 2 ? -1.0 : 1.0) * static_cast<double>(e + 1);
            if (!m.entity_im.empty()) m.entity_im[e * dim + i] = 0.25 * static_cast<double>(i);
        }
    }
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t i = 0; i < dim; ++i) {
            m.relation_re[r * dim + i] = static_cast<double>(r) + 0.5;
            if (!m.relation_im.empty()) m.relation_im[r * dim + i] = -0.5;
        }
    }
    return m;
}

double row_norm(std::span<const double> v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

TEST_CASE("model kinds round-trip through their names") {
    for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::complex}) {
        CHECK(parse_model_kind(to_string(kind)) == std::optional<ModelKind>(kind));
    }
    CHECK_FALSE(parse_model_kind("rotate").has_value());
}

TEST_CASE("scores match hand-computed values") {
    const auto transe = hand_model(ModelKind::transe, 2);
    // h=(1,-1), r=(0.5,0.5), t=(2,-2): h+r-t = (-0.5, 1.5)
    CHECK(score_triple(transe, 0, 0, 1) == doctest::Approx(-std::sqrt(0.25 + 2.25)));

    const auto dm = hand_model(ModelKind::distmult, 2);
    // (1*1.5*3) + (-1*1.5*-3) = 9
    CHECK(score_triple(dm, 0, 1, 2) == doctest::Approx(9.0));

    const auto cx = hand_model(ModelKind::complex, 2);
    // h = (1+0i, -1+0.25i), r = (0.5-0.5i, 0.5-0.5i), t = (2+0i, -2+0.25i)
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double hre = i ? -1.0 : 1.0, him = 0.25 * i;
        const double tre = i ? -2.0 : 2.0, tim = 0.25 * i;
        const double rre = 0.5, rim = -0.5;
        // Re(h * r * conj(t))
        const double pre = hre * rre - him * rim;
        const double pim = hre * rim + him * rre;
        expected += pre * tre + pim * tim;
    }
    CHECK(score_triple(cx, 0, 0, 1) == doctest::Approx(expected));
}

TEST_CASE("DistMult is the trilinear product and ComplEx reduces to it on real parts") {
    TrainConfig config;
    config.dim = 16;
    config.seed = 3;
    const auto dm = init_model(ModelKind::distmult, 6, 3, config);
    auto cx = init_model(ModelKind::complex, 6, 3, config);
    cx.entity_re = dm.entity_re;
    cx.relation_re = dm.relation_re;
    std::fill(cx.entity_im.begin(), cx.entity_im.end(), 0.0);
    std::fill(cx.relation_im.begin(), cx.relation_im.end(), 0.0);
    for (NodeId h = 0; h < 6; ++h) {
        for (RelationId r = 0; r < 3; ++r) {
            for (NodeId t = 0; t < 6; ++t) {
                double oracle = 0.0;
                for (std::size_t i = 0; i < 16; ++i) {
                    oracle += dm.entity(h)[i] * dm.relation(r)[i] * dm.entity(t)[i];
                }
                CHECK(std::abs(score_triple(dm, h, r, t) - oracle) < 1e-12);
                CHECK(std::abs(score_triple(cx, h, r, t) - oracle) < 1e-10);
            }
        }
    }
}

TEST_CASE("analytic gradients match central differences") {
    for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::complex}) {
        CAPTURE(to_string(kind));
        CHECK(grad_check(kind, 17) < 1e-4);
    }
}

TEST_CASE("initialization and training are seeded and deterministic") {
    const auto triples = testing::toy_triples(20, 3, 60, 5);
    const auto g = KnowledgeGraph::build(20, 3, triples);
    TrainConfig config;
    config.dim = 8;
    config.epochs = 0;
    config.seed = 11;
    for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::complex}) {
        CHECK(train(g, kind, config).model == init_model(kind, 20, 3, config));
    }
    config.epochs = 3;
    const auto a = train(g, ModelKind::complex, config);
    const auto b = train(g, ModelKind::complex, config);
    CHECK(a.model == b.model);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.epoch_loss.size() == 3);
    config.seed = 12;
    CHECK_FALSE(train(g, ModelKind::complex, config).model == a.model);
}

TEST_CASE("TransE entity embeddings stay on the unit sphere") {
    const auto g = KnowledgeGraph::build(20, 3, testing::toy_triples(20, 3, 60, 9));
    TrainConfig config;
    config.dim = 10;
    config.epochs = 5;
    config.learning_rate = 0.1;
    const auto result = train(g, ModelKind::transe, config);
    for (NodeId e = 0; e < 20; ++e) {
        CHECK(std::abs(row_norm(result.model.entity(e)) - 1.0) < 1e-6);
    }
}

TEST_CASE("training separates true triples from corruptions on a matching") {
    // i -> i+3 under one relation; every kind can represent this exactly
    // (a single relation chain cannot be fit by unit-norm TransE entities)
    const std::vector<Triple> matching{{0, 0, 3}, {1, 0, 4}, {2, 0, 5}};
    const auto g = KnowledgeGraph::build(6, 1, matching);
    for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::complex}) {
        CAPTURE(to_string(kind));
        TrainConfig config;
        config.dim = 16;
        config.epochs = 300;
        config.learning_rate = 0.05;
        config.negatives_per_positive = 4;
        config.seed = 2;
        const auto result = train(g, kind, config);
        CHECK(result.epoch_loss.back() < result.epoch_loss.front());
        const auto& m = result.model;
        for (const auto& t : matching) {
            for (NodeId e = 0; e < 6; ++e) {
                const Triple corrupted{t.head, t.relation, e};
                if (g.contains(corrupted)) continue;
                // DistMult is symmetric, so reversed edges are not negatives for it
                if (kind == ModelKind::distmult && g.contains({e, t.relation, t.head})) continue;
                CHECK(score_triple(m, t.head, t.relation, t.tail) >
                      score_triple(m, corrupted.head, corrupted.relation, corrupted.tail));
            }
        }
    }
}

TEST_CASE("training rejects empty graphs and bad settings") {
    const auto empty = KnowledgeGraph::build(3, 1, {});
    CHECK_THROWS_AS((void)train(empty, ModelKind::transe, {}), std::invalid_argument);
    const auto g = KnowledgeGraph::build(3, 1, std::vector<Triple>{{0, 0, 1}});
    TrainConfig config;
    config.batch_size = 0;
    CHECK_THROWS_AS((void)train(g, ModelKind::transe, config), std::invalid_argument);
    config = {};
    config.dim = 0;
    CHECK_THROWS_AS((void)train(g, ModelKind::transe, config), std::invalid_argument);
}

TEST_CASE("endpoint score is the best relation between the endpoints") {
    const auto m = hand_model(ModelKind::distmult, 2);
    PathInstance inst;
    inst.nodes = {0, 2, 1};
    inst.relations = {0, 1};
    const double best = std::max(score_triple(m, 0, 0, 1), score_triple(m, 0, 1, 1));
    CHECK(endpoint_score(m, inst) == best);
    CHECK(predict_link(m, inst, best));
    CHECK_FALSE(predict_link(m, inst, std::nextafter(best, INFINITY)));
    CHECK(predict_link(m, inst, -INFINITY));
    CHECK_FALSE(predict_link(m, inst, INFINITY));
}

TEST_CASE("calibrated threshold reaches the best F1 over all cut points") {
    Rng rng(31);
    for (int round = 0; round < 200; ++round) {
        const std::size_t n = 1 + rng.uniform_index(30);
        std::vector<double> scores(n);
        std::vector<Label> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            // coarse grid forces ties
            scores[i] = static_cast<double>(rng.uniform_index(8)) - 4.0;
            labels[i] = rng.uniform_index(2) ? Label::positive : Label::negative;
        }
        const double threshold = calibrate_threshold(scores, labels);
        double tp = 0, fp = 0, fn = 0;
        std::size_t yes = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool p = scores[i] >= threshold;
            const bool gold = labels[i] == Label::positive;
            yes += p;
            tp += p && gold;
            fp += p && !gold;
            fn += !p && gold;
        }
        const auto [oracle_yes, oracle_f1] = testing::oracle_best_threshold_set(scores, labels);
        CHECK(testing::oracle_f1(tp, fp, 0, fn) == doctest::Approx(oracle_f1).epsilon(1e-12));
        CHECK(yes == oracle_yes);
    }
    CHECK_THROWS_AS((void)calibrate_threshold(std::vector<double>{}, std::vector<Label>{}),
                    std::invalid_argument);
}

TEST_CASE("checkpoints round-trip exactly") {
    testing::TempDir dir("ckpt");
    for (auto kind : {ModelKind::transe, ModelKind::distmult, ModelKind::complex}) {
        TrainConfig config;
        config.dim = 7;
        config.seed = 99;
        config.learning_rate = 0.0123456789;
        const auto m = init_model(kind, 5, 2, config);
        const auto prefix = dir.path() / std::string(to_string(kind));
        save_checkpoint(m, prefix);
        CHECK(load_checkpoint(prefix) == m);
    }
    CHECK_THROWS_AS((void)load_checkpoint(dir.path() / "absent"), CheckpointError);
}
