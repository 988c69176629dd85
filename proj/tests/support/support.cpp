#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <unistd.h>

#ifndef KGLLM_TEST_DATA_DIR
#error "KGLLM_TEST_DATA_DIR must point at tests/data"
#endif

namespace kgllm::testing {

namespace fs = std::filesystem;

namespace {

void extend_tuples(std::size_t n, std::size_t length, std::vector<NodeId>& prefix,
                   std::vector<bool>& used, std::vector<std::vector<NodeId>>& out) {
    if (prefix.size() == length) {
        out.push_back(prefix);
        return;
    }
    for (NodeId v = 0; v < n; ++v) {
        if (used[v]) continue;
        used[v] = true;
        prefix.push_back(v);
        extend_tuples(n, length, prefix, used, out);
        prefix.pop_back();
        used[v] = false;
    }
}

}  // namespace

std::set<PathKey> brute_force_paths(std::size_t entity_count, std::span<const Triple> triples,
                                    std::size_t min_nodes, std::size_t max_nodes) {
    // relations[h][t] = sorted distinct relations with an (h, r, t) triple
    std::vector<std::vector<std::set<RelationId>>> rel(
        entity_count, std::vector<std::set<RelationId>>(entity_count));
    for (const auto& t : triples) rel[t.head][t.tail].insert(t.relation);

    std::set<PathKey> out;
    for (std::size_t length = min_nodes; length <= std::min(max_nodes, entity_count); ++length) {
        std::vector<std::vector<NodeId>> tuples;
        std::vector<NodeId> prefix;
        std::vector<bool> used(entity_count, false);
        extend_tuples(entity_count, length, prefix, used, tuples);
        for (const auto& nodes : tuples) {
            // Cartesian product of relation choices along the tuple.
            std::vector<std::vector<RelationId>> partial{{}};
            for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
                const auto& choices = rel[nodes[i]][nodes[i + 1]];
                std::vector<std::vector<RelationId>> next;
                for (const auto& p : partial) {
                    for (RelationId r : choices) {
                        auto q = p;
                        q.push_back(r);
                        next.push_back(std::move(q));
                    }
                }
                partial = std::move(next);
                if (partial.empty()) break;
            }
            for (auto& rels : partial) out.emplace(nodes, std::move(rels));
        }
    }
    return out;
}

std::set<Triple> brute_force_induced(std::span<const Triple> triples,
                                     std::span<const NodeId> nodes) {
    std::set<Triple> out;
    for (const auto& t : triples) {
        const bool h = std::find(nodes.begin(), nodes.end(), t.head) != nodes.end();
        const bool tl = std::find(nodes.begin(), nodes.end(), t.tail) != nodes.end();
        if (h && tl) out.insert(t);
    }
    return out;
}

RandomGraph random_graph(Rng& rng, std::size_t max_nodes, std::size_t max_edges,
                         std::size_t relations) {
    RandomGraph g;
    g.entities = 1 + rng.uniform_index(max_nodes);
    g.relations = relations;
    const std::size_t edges = rng.uniform_index(max_edges + 1);
    for (std::size_t i = 0; i < edges; ++i) {
        const auto h = static_cast<NodeId>(rng.uniform_index(g.entities));
        const auto t = static_cast<NodeId>(rng.uniform_index(g.entities));
        const auto r = static_cast<RelationId>(rng.uniform_index(relations));
        g.triples.push_back({h, r, t});
    }
    return g;
}

GoldenFixture golden_fixture() {
    constexpr NodeId kMiles = 47405, kBebop = 46497, kJazz = 46501;
    constexpr RelationId kGenre = 179, kBroader = 180;
    GoldenFixture f;
    const std::vector<Triple> triples{
        {kMiles, kGenre, kBebop}, {kBebop, kBroader, kJazz}, {kMiles, kGenre, kJazz}};
    f.graph = KnowledgeGraph::build(47406, 181, triples);
    f.lexicon = Lexicon(47406, 181);
    f.lexicon.set_entity_name(kMiles, "Miles Davis");
    f.lexicon.set_entity_descriptor(kMiles, "music artist");
    f.lexicon.set_entity_name(kBebop, "Bebop");
    f.lexicon.set_entity_descriptor(kBebop, "genre");
    f.lexicon.set_entity_name(kJazz, "Jazz");
    f.lexicon.set_relation_name(kGenre, "music_artist_genre");
    f.lexicon.set_relation_phrase(kGenre, "is associated with genre");
    f.lexicon.set_relation_name(kBroader, "parent_genre");
    f.lexicon.set_relation_phrase(kBroader, "is under the broader genre");
    f.instance = label_instance(f.graph, Path{{kMiles, kBebop, kJazz}, {kGenre, kBroader}});
    f.instance.id = 1;
    return f;
}

std::string read_test_data(const std::string& relative) {
    const fs::path path = fs::path(KGLLM_TEST_DATA_DIR) / relative;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

TempDir::TempDir(std::string_view tag) {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            fmt::format("kgllm-{}-{}-{}", tag, static_cast<long>(::getpid()), counter++);
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_openke_dataset(const fs::path& dir, std::size_t entities, std::size_t relations,
                          std::span<const Triple> triples) {
    fs::create_directories(dir);
    std::ofstream e(dir / "entity2id.txt", std::ios::binary);
    e << entities << '\n';
    for (std::size_t i = 0; i < entities; ++i) e << fmt::format("/m/{:05d}\t{}\n", i, i);
    std::ofstream r(dir / "relation2id.txt", std::ios::binary);
    r << relations << '\n';
    for (std::size_t i = 0; i < relations; ++i) r << fmt::format("/rel/r{}\t{}\n", i, i);
    std::ofstream t(dir / "train2id.txt", std::ios::binary);
    t << triples.size() << '\n';
    for (const auto& x : triples) t << fmt::format("{} {} {}\n", x.head, x.tail, x.relation);
}

std::vector<Triple> toy_triples(std::size_t entities, std::size_t relations, std::size_t edges,
                                std::uint64_t seed) {
    Rng rng(seed);
    std::set<Triple> out;
    for (NodeId h = 0; h < entities; ++h) {
        NodeId t = static_cast<NodeId>(rng.uniform_index(entities - 1));
        if (t >= h) ++t;
        out.insert({h, static_cast<RelationId>(rng.uniform_index(relations)), t});
    }
    while (out.size() < edges) {
        const auto h = static_cast<NodeId>(rng.uniform_index(entities));
        const auto t = static_cast<NodeId>(rng.uniform_index(entities));
        if (h == t) continue;
        out.insert({h, static_cast<RelationId>(rng.uniform_index(relations)), t});
    }
    return {out.begin(), out.end()};
}

std::vector<EvalOutcome> outcomes_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                              std::size_t fn, Rng& rng) {
    std::vector<EvalOutcome> out;
    auto push = [&](std::size_t n, Label gold, LinkAnswer answer) {
        for (std::size_t i = 0; i < n; ++i) {
            EvalOutcome o;
            o.record_id = out.size();
            o.task = Task::link;
            o.hops = 1 + rng.uniform_index(5);
            o.gold_label = gold;
            o.predicted_link = answer;
            o.parsed = true;
            out.push_back(o);
        }
    };
    push(tp, Label::positive, LinkAnswer::yes);
    push(fp, Label::negative, LinkAnswer::yes);
    push(tn, Label::negative, LinkAnswer::no);
    push(fn, Label::positive, LinkAnswer::no);
    rng.shuffle(out);
    return out;
}

double oracle_f1(double tp, double fp, double, double fn) {
    if (tp == 0) return 0.0;
    const double precision = tp / (tp + fp);
    const double recall = tp / (tp + fn);
    return 2 * precision * recall / (precision + recall);
}

double oracle_balanced_accuracy(double tp, double fp, double tn, double fn) {
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp));
}

double oracle_accuracy(double tp, double fp, double tn, double fn) {
    return (tp + tn) / (tp + fp + tn + fn);
}

std::pair<std::size_t, double> oracle_best_threshold_set(std::span<const double> scores,
                                                         std::span<const Label> labels) {
    std::vector<double> cuts(scores.begin(), scores.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto evaluate = [&](std::optional<double> cut) {
        double tp = 0, fp = 0, tn = 0, fn = 0;
        std::size_t yes = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool predict = cut && scores[i] >= *cut;
            const bool gold = labels[i] == Label::positive;
            yes += predict;
            tp += predict && gold;
            fp += predict && !gold;
            tn += !predict && !gold;
            fn += !predict && gold;
        }
        return std::pair{yes, oracle_f1(tp, fp, tn, fn)};
    };

    std::pair<std::size_t, double> best = evaluate(std::nullopt);
    for (double c : cuts) {
        const auto candidate = evaluate(c);
        if (candidate.second > best.second ||
            (candidate.second == best.second && candidate.first > best.first)) {
            best = candidate;
        }
    }
    return best;
}

}  // namespace kgllm::testing
