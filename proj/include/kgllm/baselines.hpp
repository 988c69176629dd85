#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "kgllm/graph.hpp"
#include "kgllm/sampler.hpp"

namespace kgllm {

enum class ModelKind : std::uint8_t { transe, distmult, complex };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct TrainConfig {
    std::size_t dim = 100;
    std::size_t epochs = 5;
    double learning_rate = 0.01;
    double margin = 1.0;  // TransE only
    double l2 = 0.03;     // DistMult / ComplEx only: weight of the squared norms of touched rows
    std::size_t negatives_per_positive = 1;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Entity and relation embedding tables, row-major. ComplEx keeps imaginary
/// parts in the *_im tables; the other kinds leave them empty.
struct BaselineModel {
    ModelKind kind = ModelKind::transe;
    std::size_t entity_count = 0;
    std::size_t relation_count = 0;
    std::size_t dim = 0;
    TrainConfig config;
    std::vector<double> entity_re;
    std::vector<double> entity_im;
    std::vector<double> relation_re;
    std::vector<double> relation_im;

    std::span<const double> entity(NodeId id) const;
    std::span<const double> entity_imag(NodeId id) const;
    std::span<const double> relation(RelationId id) const;
    std::span<const double> relation_imag(RelationId id) const;

    friend bool operator==(const BaselineModel&, const BaselineModel&) = default;
};

/// Seeded initialization (uniform in +-6/sqrt(d); TransE entities unit norm).
BaselineModel init_model(ModelKind kind, std::size_t entity_count, std::size_t relation_count,
                         const TrainConfig& config);

/// Higher is more plausible.
///   TransE:   -||e_h + w_r - e_t||_2
///   DistMult: sum_i e_h[i] w_r[i] e_t[i]
///   ComplEx:  Re(sum_i e_h[i] w_r[i] conj(e_t[i]))
double score_triple(const BaselineModel& model, NodeId head, RelationId relation, NodeId tail);

/// Loss of one (positive, corrupted) pair: margin ranking for TransE,
/// logistic loss on both triples plus l2 * squared norms of their rows for
/// DistMult / ComplEx.
double pair_loss(const BaselineModel& model, const Triple& positive, const Triple& negative);

/// Sparse gradient of pair_loss, keyed by parameter table and row.
struct Gradient {
    // key: (table, row) with table 0 = entity_re, 1 = entity_im,
    // 2 = relation_re, 3 = relation_im
    std::map<std::pair<int, std::uint32_t>, std::vector<double>> rows;

    void add(int table, std::uint32_t row, std::span<const double> values, double scale);
};

void accumulate_pair_gradient(const BaselineModel& model, const Triple& positive,
                              const Triple& negative, Gradient& out);

struct TrainResult {
    BaselineModel model;
    std::vector<double> epoch_loss;  // mean pair loss per epoch
};

/// Mini-batch SGD (gradients summed over the batch) over the graph's triples
/// with filtered uniform head/tail corruption. Deterministic for a fixed seed.
TrainResult train(const KnowledgeGraph& g_train, ModelKind kind, const TrainConfig& config);

/// Central-difference check of accumulate_pair_gradient on random small
/// models; returns the largest relative error over `probes` probes.
double grad_check(ModelKind kind, std::uint64_t seed, std::size_t probes = 100,
                  double epsilon = 1e-5);

/// max over relations of score_triple(first, r, last).
double endpoint_score(const BaselineModel& model, const PathInstance& instance);

bool predict_link(const BaselineModel& model, const PathInstance& instance, double threshold);

/// Threshold maximizing F1 of "score >= threshold" over the validation
/// instances, ties resolved toward the lower threshold. Candidate thresholds
/// are the minimum score and the next representable value above each
/// distinct score.
double calibrate_threshold(std::span<const double> scores, std::span<const Label> labels);
double calibrate_threshold(const BaselineModel& model, std::span<const PathInstance> validation);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes <prefix>.header (text: kind, entities, relations, dim, seed, ...)
/// and <prefix>.bin (little-endian float64 tables, row-major).
void save_checkpoint(const BaselineModel& model, const std::filesystem::path& prefix);
BaselineModel load_checkpoint(const std::filesystem::path& prefix);

}  // namespace kgllm
