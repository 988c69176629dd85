#include "kgllm/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "kgllm/random.hpp"

namespace kgllm {

std::string_view to_string(Label label) {
    return label == Label::positive ? "positive" : "negative";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

std::optional<Label> parse_label(std::string_view text) {
    if (text == "positive") return Label::positive;
    if (text == "negative") return Label::negative;
    return std::nullopt;
}

std::optional<Split> parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "validation") return Split::validation;
    if (text == "test") return Split::test;
    return std::nullopt;
}

namespace {

void check_fraction(double f, const char* what) {
    if (!(f > 0.0 && f < 1.0)) {
        throw std::invalid_argument(fmt::format("{} must lie in (0, 1), got {}", what, f));
    }
}

void check_limits(const PathLimits& limits) {
    if (limits.min_nodes < 2 || limits.min_nodes > limits.max_nodes ||
        limits.max_nodes > kMaxPathNodes) {
        throw std::invalid_argument(fmt::format("path node limits must satisfy 2 <= {} <= {} <= {}",
                                                limits.min_nodes, limits.max_nodes,
                                                kMaxPathNodes));
    }
}

class PathWalker {
public:
    PathWalker(const KnowledgeGraph& g, const PathLimits& limits,
               const std::function<void(const Path&)>& emit)
        : g_(g), limits_(limits), emit_(emit) {}

    bool run(NodeId root) {
        path_.nodes.assign(1, root);
        path_.relations.clear();
        extend();
        return truncated_;
    }

private:
    bool on_path(NodeId n) const {
        return std::find(path_.nodes.begin(), path_.nodes.end(), n) != path_.nodes.end();
    }

    void extend() {
        if (truncated_ || path_.nodes.size() >= limits_.max_nodes) return;
        for (const Triple& edge : g_.outgoing(path_.nodes.back())) {
            if (on_path(edge.tail)) continue;
            path_.nodes.push_back(edge.tail);
            path_.relations.push_back(edge.relation);
            if (path_.nodes.size() >= limits_.min_nodes) {
                if (limits_.per_root_cap != 0 && emitted_ == limits_.per_root_cap) {
                    truncated_ = true;
                } else {
                    ++emitted_;
                    emit_(path_);
                }
            }
            extend();
            path_.nodes.pop_back();
            path_.relations.pop_back();
            if (truncated_) return;
        }
    }

    const KnowledgeGraph& g_;
    const PathLimits& limits_;
    const std::function<void(const Path&)>& emit_;
    Path path_;
    std::size_t emitted_ = 0;
    bool truncated_ = false;
};

}  // namespace

NodeSplit node_split(const KnowledgeGraph& g, const SplitSpec& spec) {
    check_fraction(spec.train_node_fraction, "train_node_fraction");
    const std::size_t n = g.entity_count();
    if (n < 2) throw std::invalid_argument("node_split needs at least two entities");

    std::vector<NodeId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<NodeId>(i);
    Rng rng(derive_seed(spec.seed, 0));
    rng.shuffle(ids);

    const auto n_train = static_cast<std::size_t>(
        std::llround(spec.train_node_fraction * static_cast<double>(n)));
    NodeSplit out;
    out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

bool enumerate_paths_from(const KnowledgeGraph& g, NodeId root, const PathLimits& limits,
                          const std::function<void(const Path&)>& emit) {
    check_limits(limits);
    g.check_node(root);
    PathWalker walker(g, limits, emit);
    return walker.run(root);
}

std::vector<Path> enumerate_paths(const KnowledgeGraph& g, const PathLimits& limits,
                                  EnumerationStats* stats) {
    check_limits(limits);
    std::vector<Path> paths;
    EnumerationStats local;
    std::function<void(const Path&)> emit = [&](const Path& p) { paths.push_back(p); };
    for (std::size_t root = 0; root < g.entity_count(); ++root) {
        PathWalker walker(g, limits, emit);
        if (walker.run(static_cast<NodeId>(root))) ++local.roots_truncated;
        ++local.roots_visited;
    }
    local.paths_emitted = paths.size();
    if (stats) *stats = local;
    return paths;
}

PathInstance label_instance(const KnowledgeGraph& g_enum, const Path& path, Split split) {
    if (path.nodes.size() < 2 || path.relations.size() + 1 != path.nodes.size()) {
        throw std::invalid_argument("path must have at least two nodes and one relation per hop");
    }
    PathInstance inst;
    inst.nodes = path.nodes;
    inst.relations = path.relations;
    inst.split = split;
    auto direct = g_enum.direct_relations(path.nodes.front(), path.nodes.back());
    if (!direct.empty()) {
        inst.label = Label::positive;
        inst.gold_relation = direct.front();
    }
    return inst;
}

std::vector<PathInstance> balance_negatives(std::span<const PathInstance> instances,
                                            std::uint64_t seed) {
    std::size_t positives = 0;
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].label == Label::positive) {
            ++positives;
        } else {
            negatives.push_back(i);
        }
    }
    if (negatives.size() <= positives) return {instances.begin(), instances.end()};

    Rng rng(seed);
    std::vector<bool> keep(instances.size(), true);
    for (std::size_t i : negatives) keep[i] = false;
    for (std::size_t k : rng.sample_indices(negatives.size(), positives)) keep[negatives[k]] = true;

    std::vector<PathInstance> out;
    out.reserve(2 * positives);
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (keep[i]) out.push_back(instances[i]);
    }
    return out;
}

std::pair<std::vector<PathInstance>, std::vector<PathInstance>> make_validation_split(
    std::span<const PathInstance> train, const SplitSpec& spec) {
    check_fraction(spec.validation_fraction, "validation_fraction");
    std::vector<std::size_t> by_label[2];
    for (std::size_t i = 0; i < train.size(); ++i) {
        by_label[static_cast<int>(train[i].label)].push_back(i);
    }
    std::vector<bool> to_validation(train.size(), false);
    for (int label = 0; label < 2; ++label) {
        const auto& members = by_label[label];
        const auto k = static_cast<std::size_t>(
            std::llround(spec.validation_fraction * static_cast<double>(members.size())));
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(label)));
        for (std::size_t j : rng.sample_indices(members.size(), k)) {
            to_validation[members[j]] = true;
        }
    }
    std::pair<std::vector<PathInstance>, std::vector<PathInstance>> out;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (to_validation[i]) {
            out.second.push_back(train[i]);
            out.second.back().split = Split::validation;
        } else {
            out.first.push_back(train[i]);
        }
    }
    return out;
}

namespace {

struct RootResult {
    std::vector<PathInstance> instances;
    bool truncated = false;
};

RootResult walk_root(const KnowledgeGraph& g, NodeId root, const PathLimits& limits,
                     Split split) {
    RootResult result;
    std::function<void(const Path&)> emit = [&](const Path& p) {
        result.instances.push_back(label_instance(g, p, split));
    };
    PathWalker walker(g, limits, emit);
    result.truncated = walker.run(root);
    return result;
}

}  // namespace

std::vector<PathInstance> sample_split(const KnowledgeGraph& g_enum, const SamplerConfig& config,
                                       Split split, std::uint64_t seed, SamplingStats* stats) {
    check_limits(config.limits);
    SamplingStats local;

    std::vector<NodeId> roots;
    for (std::size_t n = 0; n < g_enum.entity_count(); ++n) {
        if (!g_enum.outgoing(static_cast<NodeId>(n)).empty()) roots.push_back(static_cast<NodeId>(n));
    }
    Rng rng(seed);
    rng.shuffle(roots);

    const std::size_t min_hops = config.limits.min_nodes - 1;
    const std::size_t max_hops = config.limits.max_nodes - 1;
    auto all_cells_full = [&] {
        if (config.cell_cap == 0) return false;
        for (std::size_t h = min_hops; h <= max_hops; ++h) {
            if (local.cell_counts[h][1] < config.cell_cap) return false;
            // A one-hop path is its own endpoint edge, so that negative cell stays empty.
            if (h > 1 && local.cell_counts[h][0] < config.cell_cap) return false;
        }
        return true;
    };

    unsigned threads = config.threads != 0 ? config.threads
                                           : std::max(1u, std::thread::hardware_concurrency());
    const std::size_t window = std::max<std::size_t>(64, std::size_t{threads} * 16);

    std::vector<PathInstance> out;
    std::size_t next_root = 0;
    while (next_root < roots.size() && !all_cells_full()) {
        const std::size_t count = std::min(window, roots.size() - next_root);
        std::vector<RootResult> results(count);
        auto work = [&](std::atomic<std::size_t>& cursor) {
            for (std::size_t i = cursor++; i < count; i = cursor++) {
                results[i] = walk_root(g_enum, roots[next_root + i], config.limits, split);
            }
        };
        std::atomic<std::size_t> cursor{0};
        if (threads <= 1 || count == 1) {
            work(cursor);
        } else {
            std::vector<std::jthread> pool;
            const unsigned n = static_cast<unsigned>(std::min<std::size_t>(threads, count));
            for (unsigned t = 0; t < n; ++t) pool.emplace_back([&] { work(cursor); });
        }

        for (std::size_t i = 0; i < count; ++i) {
            if (all_cells_full()) {
                local.stopped_early = true;
                break;
            }
            ++local.enumeration.roots_visited;
            if (results[i].truncated) ++local.enumeration.roots_truncated;
            local.enumeration.paths_emitted += results[i].instances.size();
            for (auto& inst : results[i].instances) {
                auto& cell = local.cell_counts[inst.hops()][static_cast<int>(inst.label)];
                if (config.cell_cap != 0 && cell >= config.cell_cap) {
                    ++local.dropped_by_cell_cap;
                    continue;
                }
                ++cell;
                out.push_back(std::move(inst));
            }
        }
        next_root += count;
    }
    if (next_root < roots.size()) local.stopped_early = true;
    if (stats) *stats = local;
    return out;
}

SampleResult run_sampling(const KnowledgeGraph& g, const SamplerConfig& config) {
    const std::uint64_t seed = config.split.seed;
    SampleResult result;
    result.nodes = node_split(g, config.split);

    const KnowledgeGraph g_train = g.induced_subgraph(result.nodes.train);
    const KnowledgeGraph g_test = g.induced_subgraph(result.nodes.test);

    auto train_raw =
        sample_split(g_train, config, Split::train, derive_seed(seed, 1), &result.train_stats);
    auto test_raw =
        sample_split(g_test, config, Split::test, derive_seed(seed, 2), &result.test_stats);

    auto train_balanced = balance_negatives(train_raw, derive_seed(seed, 3));
    result.test = balance_negatives(test_raw, derive_seed(seed, 4));

    SplitSpec validation_spec = config.split;
    validation_spec.seed = derive_seed(seed, 5);
    std::tie(result.train, result.validation) =
        make_validation_split(train_balanced, validation_spec);

    std::uint64_t next_id = 0;
    for (auto* part : {&result.train, &result.validation, &result.test}) {
        for (auto& inst : *part) inst.id = next_id++;
    }
    return result;
}

}  // namespace kgllm
