#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>

#include "kgllm/graph.hpp"
#include "kgllm/lexicon.hpp"
#include "kgllm/random.hpp"
#include "support.hpp"

using namespace kgllm;

TEST_CASE("build sorts triples and collapses duplicates") {
    const std::vector<Triple> raw{{2, 0, 1}, {0, 1, 2}, {0, 0, 1}, {0, 1, 2}, {1, 0, 0}};
    const auto g = KnowledgeGraph::build(3, 2, raw);
    CHECK(g.triples().size() == 4);
    CHECK(g.duplicates_collapsed() == 1);
    CHECK(std::is_sorted(g.triples().begin(), g.triples().end(),
                         [](const Triple& a, const Triple& b) {
                             return std::tie(a.head, a.tail, a.relation) <
                                    std::tie(b.head, b.tail, b.relation);
                         }));
}

TEST_CASE("outgoing edges of a node come in (tail, relation) order") {
    const std::vector<Triple> raw{{0, 1, 2}, {0, 0, 2}, {0, 1, 1}, {1, 0, 0}};
    const auto g = KnowledgeGraph::build(3, 2, raw);
    const auto out = g.outgoing(0);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == Triple{0, 1, 1});
    CHECK(out[1] == Triple{0, 0, 2});
    CHECK(out[2] == Triple{0, 1, 2});
    CHECK(g.outgoing(2).empty());
}

TEST_CASE("edge queries") {
    const std::vector<Triple> raw{{0, 2, 1}, {0, 0, 1}, {1, 1, 2}};
    const auto g = KnowledgeGraph::build(3, 3, raw);
    CHECK(g.has_edge(0, 1));
    CHECK_FALSE(g.has_edge(1, 0));
    CHECK(g.direct_relations(0, 1) == std::vector<RelationId>{0, 2});
    CHECK(g.direct_relations(2, 0).empty());
    CHECK(g.contains({1, 1, 2}));
    CHECK_FALSE(g.contains({1, 0, 2}));
}

TEST_CASE("out-of-range ids are rejected with the triple position") {
    const std::vector<Triple> bad_node{{0, 0, 1}, {0, 0, 5}};
    try {
        (void)KnowledgeGraph::build(3, 1, bad_node);
        FAIL("expected BoundsError");
    } catch (const BoundsError& e) {
        CHECK(std::string(e.what()).find('1') != std::string::npos);
    }
    const std::vector<Triple> bad_rel{{0, 4, 1}};
    CHECK_THROWS_AS((void)KnowledgeGraph::build(3, 2, bad_rel), BoundsError);

    const auto g = KnowledgeGraph::build(3, 1, std::vector<Triple>{{0, 0, 1}});
    CHECK_THROWS_AS((void)g.outgoing(3), BoundsError);
    CHECK_THROWS_AS((void)g.direct_relations(0, 7), BoundsError);
}

TEST_CASE("empty graph is valid") {
    const auto g = KnowledgeGraph::build(4, 1, {});
    CHECK(g.triples().empty());
    CHECK(g.entity_count() == 4);
    for (NodeId v = 0; v < 4; ++v) CHECK(g.outgoing(v).empty());
}

TEST_CASE("induced subgraph equals a brute-force filter") {
    Rng rng(11);
    for (int round = 0; round < 100; ++round) {
        const auto rg = testing::random_graph(rng, 12, 40, 3);
        const auto g = KnowledgeGraph::build(rg.entities, rg.relations, rg.triples);
        std::vector<NodeId> keep;
        for (NodeId v = 0; v < rg.entities; ++v) {
            if (rng.uniform_unit() < 0.5) keep.push_back(v);
        }
        const auto sub = g.induced_subgraph(keep);
        CHECK(sub.entity_count() == g.entity_count());
        const std::set<Triple> got(sub.triples().begin(), sub.triples().end());
        CHECK(got == testing::brute_force_induced(g.triples(), keep));
    }
}

TEST_CASE("rng draws are reproducible and in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        const auto x = a.uniform_index(7);
        CHECK(x == b.uniform_index(7));
        CHECK(x < 7);
        const double u = a.uniform_unit();
        CHECK(u == b.uniform_unit());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(derive_seed(1, 1) != derive_seed(1, 2));
    CHECK(derive_seed(1, 1) != derive_seed(2, 1));
    CHECK(derive_seed(9, 3) == derive_seed(9, 3));
}

TEST_CASE("uniform_index is close to uniform") {
    Rng rng(3);
    std::array<int, 6> counts{};
    constexpr int kDraws = 60'000;
    for (int i = 0; i < kDraws; ++i) ++counts[rng.uniform_index(6)];
    for (int c : counts) CHECK(std::abs(c - kDraws / 6) < 600);  // about 6 sigma
}

TEST_CASE("shuffle permutes and sample_indices returns sorted distinct indices") {
    Rng rng(5);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    rng.shuffle(w);
    CHECK(w != v);
    std::sort(w.begin(), w.end());
    CHECK(w == v);

    for (std::size_t k : {0u, 1u, 10u, 50u}) {
        const auto idx = rng.sample_indices(50, k);
        CHECK(idx.size() == k);
        CHECK(std::is_sorted(idx.begin(), idx.end()));
        CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
        if (!idx.empty()) CHECK(idx.back() < 50);
    }
}

TEST_CASE("lexicon stores trimmed text and looks relations up case-insensitively") {
    Lexicon lex(3, 2);
    lex.set_entity_name(0, "  Miles Davis ");
    CHECK(lex.entity_name(0) == std::optional<std::string_view>("Miles Davis"));
    CHECK_FALSE(lex.entity_name(1).has_value());
    CHECK_FALSE(lex.entities_complete());
    CHECK_THROWS_AS(lex.set_entity_name(1, "   "), std::invalid_argument);
    CHECK_THROWS_AS((void)lex.entity_name(3), BoundsError);

    lex.set_relation_name(1, "music_artist_genre");
    lex.set_relation_phrase(0, "is under the broader genre");
    CHECK(lex.find_relation("MUSIC_ARTIST_GENRE") == std::optional<RelationId>(1));
    CHECK(lex.find_relation("is under the broader genre") == std::optional<RelationId>(0));
    CHECK_FALSE(lex.find_relation("unrelated").has_value());
    CHECK(trim("\t a b \n") == "a b");
}
