#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgllm/baselines.hpp"
#include "kgllm/eval.hpp"
#include "kgllm/ingest.hpp"
#include "kgllm/llm_client.hpp"
#include "kgllm/prompt.hpp"
#include "kgllm/sampler.hpp"

namespace kgllm {

/// Inputs or upstream artifacts are unusable; maps to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An upstream stage has not produced the file this stage reads.
class MissingArtifact : public DataError {
public:
    explicit MissingArtifact(const std::filesystem::path& expected, std::string_view producer);

    const std::filesystem::path& expected() const noexcept { return expected_; }

private:
    std::filesystem::path expected_;
};

struct DatasetOptions {
    std::filesystem::path dir;
    std::string name;  // defaults to the directory name
    bool merge_splits = true;
};

/// Stable hash of the entity/relation counts and the sorted triple list.
std::string dataset_fingerprint(const KnowledgeGraph& g);

// Artifact layout below an output directory.
std::filesystem::path instances_dir(const std::filesystem::path& out);
std::filesystem::path prompts_dir(const std::filesystem::path& out, Task task, Style style,
                                  IclMode icl);
std::filesystem::path eval_dir(const std::filesystem::path& out, Task task, Style style,
                               IclMode icl, std::string_view system);
std::filesystem::path baseline_dir(const std::filesystem::path& out, ModelKind kind);

// ---- ingest ---------------------------------------------------------------

struct IngestResult {
    DatasetManifest manifest;
    std::size_t duplicates_collapsed = 0;
    std::optional<ReferenceCheck> reference;
};

IngestResult run_ingest(const DatasetOptions& dataset);

/// Human-readable manifest with the reference comparison, if any.
std::string describe_ingest(const IngestResult& result);

// ---- sample ---------------------------------------------------------------

struct SampleStageOptions {
    DatasetOptions dataset;
    SamplerConfig sampler;
    std::filesystem::path out;
};

struct SampleStageResult {
    std::string config_hash;
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
};

/// Writes instances/{train,validation,test}.jsonl, split.json and stats.json.
SampleStageResult run_sample_stage(const SampleStageOptions& options);

// ---- genprompts -----------------------------------------------------------

struct PromptStageOptions {
    DatasetOptions dataset;
    Task task = Task::link;
    Style style = Style::kgllm;
    IclMode icl = IclMode::none;
    std::size_t token_limit = 512;
    std::optional<std::size_t> max_options;
    std::filesystem::path out;
};

struct PromptStageResult {
    std::string config_hash;
    std::size_t kept[3] = {0, 0, 0};     // train, validation, test
    std::size_t dropped[3] = {0, 0, 0};  // over the token limit
    std::optional<std::uint64_t> icl_example_id;
};

/// Writes prompts/<task>_<style>_<icl>/{train,validation,test}.jsonl plus
/// icl_example.json, special_tokens.txt and provenance.json.
PromptStageResult run_prompt_stage(const PromptStageOptions& options);

// ---- eval -----------------------------------------------------------------

struct EvalStageOptions {
    DatasetOptions dataset;
    Task task = Task::link;
    Style style = Style::kgllm;
    IclMode icl = IclMode::none;
    std::filesystem::path out;
    std::optional<StubPolicy> stub;  // replaces the HTTP backend when set
    ClientConfig client;
    std::string system;                 // row label; derived from the backend when empty
    double parse_failure_ceiling = 1.0;  // fraction of unparseable responses tolerated
};

struct EvalStageResult {
    Report report;
    std::size_t requests = 0;
    std::size_t failed_requests = 0;
    bool ceiling_exceeded = false;
    std::filesystem::path directory;
};

/// Completes every test prompt and writes outcomes.jsonl, report.txt and
/// report.jsonl under eval/<task>_<style>_<icl>/<system>/.
EvalStageResult run_eval_stage(const EvalStageOptions& options);

// ---- baselines ------------------------------------------------------------

struct BaselineTrainOptions {
    DatasetOptions dataset;
    ModelKind kind = ModelKind::transe;
    TrainConfig train;
    std::filesystem::path out;
};

struct BaselineTrainResult {
    std::filesystem::path checkpoint;
    std::vector<double> epoch_loss;
    std::string config_hash;
};

/// Trains on the subgraph induced by the training nodes of the sample stage.
BaselineTrainResult run_baseline_train(const BaselineTrainOptions& options);

struct BaselineEvalOptions {
    DatasetOptions dataset;
    ModelKind kind = ModelKind::transe;
    std::optional<std::filesystem::path> checkpoint;  // defaults to the train output
    std::filesystem::path out;
};

struct BaselineEvalResult {
    Report report;
    double threshold = 0.0;
    std::filesystem::path directory;
};

/// Calibrates on the validation instances, predicts the test instances.
BaselineEvalResult run_baseline_eval(const BaselineEvalOptions& options);

// ---- report ---------------------------------------------------------------

struct ComparisonCell {
    std::optional<double> f1;
    std::optional<double> auc;
    std::optional<double> accuracy;
    std::size_t n = 0;
};

struct ComparisonTable {
    Task task = Task::link;
    std::vector<std::string> systems;   // rows, first-seen order
    std::vector<std::string> datasets;  // columns, first-seen order
    std::vector<std::vector<std::optional<ComparisonCell>>> cells;  // [system][dataset]
};

/// Merges outcome files into one table. Throws DataError when files for the
/// same dataset were scored on different instance sets, when tasks differ,
/// or when a (system, dataset) pair appears twice.
ComparisonTable merge_outcomes(const std::vector<std::filesystem::path>& outcome_files);

std::string render_comparison(const ComparisonTable& table);
void write_comparison_records(std::ostream& out, const ComparisonTable& table);

}  // namespace kgllm
