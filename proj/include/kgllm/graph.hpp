#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgllm {

using NodeId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
    NodeId head = 0;
    RelationId relation = 0;
    NodeId tail = 0;

    friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Raised when an entity or relation id falls outside the graph's id space.
class BoundsError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Immutable directed multi-relational graph over dense integer ids.
///
/// Triples are stored once, sorted by (head, tail, relation). The outgoing
/// edges of a node are therefore a contiguous slice of the triple array, and
/// the relations joining a fixed (head, tail) pair are a contiguous run inside
/// that slice. Both the adjacency index and the endpoint index are views over
/// the same storage, so they cannot drift from the triple set.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Validates ids, collapses duplicate triples and builds the indices.
    /// Throws BoundsError naming the offending input position.
    static KnowledgeGraph build(std::size_t entity_count, std::size_t relation_count,
                                std::span<const Triple> triples);

    std::size_t entity_count() const noexcept { return entity_count_; }
    std::size_t relation_count() const noexcept { return relation_count_; }
    std::size_t triple_count() const noexcept { return triples_.size(); }
    bool empty() const noexcept { return triples_.empty(); }

    /// Number of input triples dropped as duplicates during build().
    std::size_t duplicates_collapsed() const noexcept { return duplicates_; }

    /// All triples, ordered by (head, tail, relation).
    std::span<const Triple> triples() const noexcept { return triples_; }

    /// Outgoing edges of `head`, ordered by (tail, relation).
    std::span<const Triple> outgoing(NodeId head) const;

    /// Ascending relation ids r with (head, r, tail) in the graph.
    std::vector<RelationId> direct_relations(NodeId head, NodeId tail) const;

    bool has_edge(NodeId head, NodeId tail) const;
    bool contains(const Triple& triple) const;

    /// Keeps the triples whose head and tail both lie in `nodes`. Id spaces
    /// are unchanged.
    KnowledgeGraph induced_subgraph(std::span<const NodeId> nodes) const;

    void check_node(NodeId id) const;
    void check_relation(RelationId id) const;

private:
    std::span<const Triple> endpoint_run(NodeId head, NodeId tail) const;

    std::size_t entity_count_ = 0;
    std::size_t relation_count_ = 0;
    std::size_t duplicates_ = 0;
    std::vector<Triple> triples_;
    std::vector<std::size_t> offsets_;  // entity_count_ + 1 entries
};

}  // namespace kgllm
