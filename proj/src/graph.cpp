#include "kgllm/graph.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace kgllm {

namespace {

bool head_tail_relation_less(const Triple& a, const Triple& b) {
    if (a.head != b.head) return a.head < b.head;
    if (a.tail != b.tail) return a.tail < b.tail;
    return a.relation < b.relation;
}

}  // namespace

KnowledgeGraph KnowledgeGraph::build(std::size_t entity_count, std::size_t relation_count,
                                     std::span<const Triple> triples) {
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const Triple& t = triples[i];
        if (t.head >= entity_count || t.tail >= entity_count || t.relation >= relation_count) {
            throw BoundsError(fmt::format(
                "triple #{} ({}, {}, {}) is out of range for {} entities / {} relations", i, t.head,
                t.relation, t.tail, entity_count, relation_count));
        }
    }

    KnowledgeGraph g;
    g.entity_count_ = entity_count;
    g.relation_count_ = relation_count;
    g.triples_.assign(triples.begin(), triples.end());
    std::sort(g.triples_.begin(), g.triples_.end(), head_tail_relation_less);
    auto last = std::unique(g.triples_.begin(), g.triples_.end());
    g.duplicates_ = static_cast<std::size_t>(g.triples_.end() - last);
    g.triples_.erase(last, g.triples_.end());
    g.triples_.shrink_to_fit();

    g.offsets_.assign(entity_count + 1, 0);
    for (const Triple& t : g.triples_) ++g.offsets_[t.head + 1];
    for (std::size_t i = 1; i < g.offsets_.size(); ++i) g.offsets_[i] += g.offsets_[i - 1];
    return g;
}

void KnowledgeGraph::check_node(NodeId id) const {
    if (id >= entity_count_) {
        throw BoundsError(fmt::format("node id {} out of range ({} entities)", id, entity_count_));
    }
}

void KnowledgeGraph::check_relation(RelationId id) const {
    if (id >= relation_count_) {
        throw BoundsError(
            fmt::format("relation id {} out of range ({} relations)", id, relation_count_));
    }
}

std::span<const Triple> KnowledgeGraph::outgoing(NodeId head) const {
    check_node(head);
    return std::span<const Triple>(triples_).subspan(offsets_[head],
                                                      offsets_[head + 1] - offsets_[head]);
}

std::span<const Triple> KnowledgeGraph::endpoint_run(NodeId head, NodeId tail) const {
    auto out = outgoing(head);
    check_node(tail);
    auto lo = std::lower_bound(out.begin(), out.end(), tail,
                               [](const Triple& t, NodeId v) { return t.tail < v; });
    auto hi = std::upper_bound(lo, out.end(), tail,
                               [](NodeId v, const Triple& t) { return v < t.tail; });
    return {lo, hi};
}

std::vector<RelationId> KnowledgeGraph::direct_relations(NodeId head, NodeId tail) const {
    std::vector<RelationId> out;
    for (const Triple& t : endpoint_run(head, tail)) out.push_back(t.relation);
    return out;
}

bool KnowledgeGraph::has_edge(NodeId head, NodeId tail) const {
    return !endpoint_run(head, tail).empty();
}

bool KnowledgeGraph::contains(const Triple& triple) const {
    check_relation(triple.relation);
    auto run = endpoint_run(triple.head, triple.tail);
    return std::any_of(run.begin(), run.end(),
                       [&](const Triple& t) { return t.relation == triple.relation; });
}

KnowledgeGraph KnowledgeGraph::induced_subgraph(std::span<const NodeId> nodes) const {
    std::vector<bool> keep(entity_count_, false);
    for (NodeId n : nodes) {
        check_node(n);
        keep[n] = true;
    }
    std::vector<Triple> kept;
    for (const Triple& t : triples_) {
        if (keep[t.head] && keep[t.tail]) kept.push_back(t);
    }
    return build(entity_count_, relation_count_, kept);
}

}  // namespace kgllm
