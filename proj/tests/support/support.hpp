#pragma once

// Test-only oracles and fixtures. The oracles deliberately avoid the library
// code they check: brute-force enumeration instead of DFS, direct formula
// evaluation instead of the metric helpers.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kgllm/eval.hpp"
#include "kgllm/graph.hpp"
#include "kgllm/lexicon.hpp"
#include "kgllm/random.hpp"
#include "kgllm/sampler.hpp"

namespace kgllm::testing {

using PathKey = std::pair<std::vector<NodeId>, std::vector<RelationId>>;

/// Every simple directed path with min_nodes..max_nodes nodes, found by
/// trying each ordered tuple of distinct nodes and each relation choice per
/// hop. Exponential; meant for graphs with at most ~8 nodes.
std::set<PathKey> brute_force_paths(std::size_t entity_count, std::span<const Triple> triples,
                                    std::size_t min_nodes, std::size_t max_nodes);

/// Triples whose endpoints both lie in `nodes`, by linear scan.
std::set<Triple> brute_force_induced(std::span<const Triple> triples,
                                     std::span<const NodeId> nodes);

struct RandomGraph {
    std::size_t entities = 0;
    std::size_t relations = 0;
    std::vector<Triple> triples;  // may repeat; build() collapses
};

/// Up to max_nodes nodes, up to max_edges triples over `relations` relations.
RandomGraph random_graph(Rng& rng, std::size_t max_nodes, std::size_t max_edges,
                         std::size_t relations);

/// Graph, lexicon and instance of the Miles Davis / Bebop / Jazz exemplar.
struct GoldenFixture {
    KnowledgeGraph graph;
    Lexicon lexicon;
    PathInstance instance;
};
GoldenFixture golden_fixture();

/// Reads a file under tests/data verbatim.
std::string read_test_data(const std::string& relative);

/// Fresh directory removed on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

/// Writes entity2id / relation2id / train2id in OpenKE layout.
void write_openke_dataset(const std::filesystem::path& dir, std::size_t entities,
                          std::size_t relations, std::span<const Triple> triples);

/// Dense random toy KG without self loops; every node has out-degree >= 1.
std::vector<Triple> toy_triples(std::size_t entities, std::size_t relations, std::size_t edges,
                                std::uint64_t seed);

/// Outcomes realizing exactly the given confusion counts, in shuffled order.
std::vector<EvalOutcome> outcomes_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                              std::size_t fn, Rng& rng);

// Metric oracles written directly from the definitions.
double oracle_f1(double tp, double fp, double tn, double fn);
double oracle_balanced_accuracy(double tp, double fp, double tn, double fn);
double oracle_accuracy(double tp, double fp, double tn, double fn);

/// Exhaustive threshold scan: returns the number of items predicted "yes"
/// by the best prediction set {score >= s_i} (or the empty set), preferring
/// the largest set among ties, and the F1 it attains.
std::pair<std::size_t, double> oracle_best_threshold_set(std::span<const double> scores,
                                                         std::span<const Label> labels);

}  // namespace kgllm::testing
