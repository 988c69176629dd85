#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "kgllm/graph.hpp"

namespace kgllm {

enum class Label : std::uint8_t { negative, positive };
enum class Split : std::uint8_t { train, validation, test };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
std::optional<Label> parse_label(std::string_view text);
std::optional<Split> parse_split(std::string_view text);

/// Hard ceiling on path length; the configurable limit must stay below it.
inline constexpr std::size_t kMaxPathNodes = 8;

/// A simple directed path: nodes[i] --relations[i]--> nodes[i + 1].
struct Path {
    std::vector<NodeId> nodes;
    std::vector<RelationId> relations;

    std::size_t hops() const noexcept { return relations.size(); }
    friend auto operator<=>(const Path&, const Path&) = default;
};

struct PathInstance {
    std::uint64_t id = 0;
    std::vector<NodeId> nodes;
    std::vector<RelationId> relations;
    Label label = Label::negative;
    std::optional<RelationId> gold_relation;  // present iff label == positive
    Split split = Split::train;

    std::size_t hops() const noexcept { return relations.size(); }
    NodeId first() const { return nodes.front(); }
    NodeId last() const { return nodes.back(); }
    friend bool operator==(const PathInstance&, const PathInstance&) = default;
};

struct SplitSpec {
    std::uint64_t seed = 0;
    double train_node_fraction = 0.80;
    double validation_fraction = 0.20;
};

struct NodeSplit {
    std::vector<NodeId> train;  // ascending
    std::vector<NodeId> test;   // ascending
};

/// Seeded partition of all node ids; |train| = round(fraction * entity_count).
NodeSplit node_split(const KnowledgeGraph& g, const SplitSpec& spec);

struct PathLimits {
    std::size_t min_nodes = 2;
    std::size_t max_nodes = 6;
    std::size_t per_root_cap = 10'000;  // 0 disables the cap
};

struct EnumerationStats {
    std::size_t roots_visited = 0;
    std::size_t roots_truncated = 0;  // roots that hit per_root_cap
    std::size_t paths_emitted = 0;
};

/// Depth-first enumeration of every simple directed path with
/// min_nodes..max_nodes nodes starting at `root`, children visited in
/// (tail, relation) order. Stops after per_root_cap paths; returns whether
/// the cap cut the traversal short.
bool enumerate_paths_from(const KnowledgeGraph& g, NodeId root, const PathLimits& limits,
                          const std::function<void(const Path&)>& emit);

/// All paths of the graph, each node serving as root once in id order.
std::vector<Path> enumerate_paths(const KnowledgeGraph& g, const PathLimits& limits = {},
                                  EnumerationStats* stats = nullptr);

/// Labels a path against the graph it was enumerated from: positive iff the
/// endpoints share a direct edge; the gold relation is the lowest such id.
PathInstance label_instance(const KnowledgeGraph& g_enum, const Path& path,
                            Split split = Split::train);

/// Downsamples negatives to the positive count (never upsamples). Input
/// order is preserved among retained items.
std::vector<PathInstance> balance_negatives(std::span<const PathInstance> instances,
                                            std::uint64_t seed);

/// Moves round(validation_fraction * n) positives and negatives
/// (independently) into the validation set.
std::pair<std::vector<PathInstance>, std::vector<PathInstance>> make_validation_split(
    std::span<const PathInstance> train, const SplitSpec& spec);

struct SamplerConfig {
    SplitSpec split;
    PathLimits limits;
    std::size_t cell_cap = 20'000;  // per (hops, label) cell; 0 disables the cap
    unsigned threads = 0;           // 0 = hardware concurrency
};

struct SamplingStats {
    EnumerationStats enumeration;
    std::size_t dropped_by_cell_cap = 0;
    bool stopped_early = false;  // every cell filled before all roots ran
    // counts[hops][label] before balancing
    std::array<std::array<std::size_t, 2>, kMaxPathNodes> cell_counts{};
};

/// Enumerates, labels and cell-caps the paths of one split graph. Roots run
/// in a seeded order; workers process roots in parallel but results merge in
/// root order, so the output does not depend on the thread count.
std::vector<PathInstance> sample_split(const KnowledgeGraph& g_enum, const SamplerConfig& config,
                                       Split split, std::uint64_t seed,
                                       SamplingStats* stats = nullptr);

struct SampleResult {
    NodeSplit nodes;
    std::vector<PathInstance> train;
    std::vector<PathInstance> validation;
    std::vector<PathInstance> test;
    SamplingStats train_stats;
    SamplingStats test_stats;
};

/// Node split, per-split enumeration on the induced subgraphs, balancing,
/// validation split and sequential id assignment (train, validation, test).
SampleResult run_sampling(const KnowledgeGraph& g, const SamplerConfig& config);

}  // namespace kgllm
