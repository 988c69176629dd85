#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kgllm/lexicon.hpp"
#include "kgllm/sampler.hpp"

namespace kgllm {

enum class Task : std::uint8_t { link, relation };
enum class Style : std::uint8_t { ablation, kgllm };
enum class IclMode : std::uint8_t { none, one_shot };

std::string_view to_string(Task task);
std::string_view to_string(Style style);
std::string_view to_string(IclMode icl);
std::optional<Task> parse_task(std::string_view text);
std::optional<Style> parse_style(std::string_view text);
std::optional<IclMode> parse_icl(std::string_view text);

/// Caller asked for something the prompt templates cannot express, such as a
/// relation question about an unconnected pair.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Run configuration cannot be satisfied by the data (e.g. no exemplar).
class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RecordMeta {
    std::uint64_t id = 0;
    std::size_t hops = 0;
    Label label = Label::negative;
    std::optional<RelationId> gold_relation;
    Split split = Split::train;
    std::optional<std::uint64_t> icl_example_id;
    std::string config_hash;

    friend bool operator==(const RecordMeta&, const RecordMeta&) = default;
};

struct PromptRecord {
    Task task = Task::link;
    Style style = Style::ablation;
    IclMode icl = IclMode::none;
    std::string instruction;  // empty for the ablation style
    std::string input;        // context sentences followed by the question
    std::string output;       // expected response
    RecordMeta meta;

    friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

std::string node_token(NodeId id);
std::string relation_token(RelationId id);

/// Lexicon surface name, or the Node_<id> / relation_<id> token.
std::string textualize_node(NodeId id, const Lexicon& lexicon);
std::string textualize_relation(RelationId id, const Lexicon& lexicon);

/// "Node_a has relation_r with Node_b." per hop, single-space separated.
std::string render_context(const PathInstance& instance);
std::string render_question(const PathInstance& instance, Task task);
std::string render_expected_output(const PathInstance& instance, Task task, Style style,
                                   const Lexicon& lexicon);

/// Relation ids offered as answer options. Without a cap every id is listed
/// in ascending order; with a cap the most frequent gold relations of
/// `frequency_source` come first (ties by id).
std::vector<RelationId> relation_options(const Lexicon& lexicon,
                                         std::span<const PathInstance> frequency_source = {},
                                         std::optional<std::size_t> max_options = std::nullopt);

/// Task instruction listing the answer options; empty for the ablation style.
std::string render_instruction(Task task, Style style, const Lexicon& lexicon,
                               std::span<const RelationId> options = {});

class PromptBuilder {
public:
    PromptBuilder(Task task, Style style, IclMode icl, const Lexicon& lexicon,
                  std::span<const RelationId> options = {});

    /// Throws ContractViolation for a relation task on a negative instance.
    PromptRecord render(const PathInstance& instance) const;

    /// Renders every instance the task admits; negatives are skipped for the
    /// relation task.
    std::vector<PromptRecord> render_all(std::span<const PathInstance> instances) const;

    const std::string& instruction() const noexcept { return instruction_; }

private:
    Task task_;
    Style style_;
    IclMode icl_;
    const Lexicon& lexicon_;
    std::string instruction_;
};

/// Seeded pick of a positive two-hop training record of the given task and
/// style. Throws ConfigurationError when none exists.
PromptRecord select_icl_example(std::span<const PromptRecord> train_records, Task task,
                                Style style, std::uint64_t seed);

/// "### Context:\n<input>\nAnswer:\n<output>"
std::string render_block(const PromptRecord& record);

/// Final prompt text: exemplar block, instruction, then the query context
/// ending in "Answer:\n". Rejects an exemplar that is the query itself.
std::string assemble(const PromptRecord& record, const PromptRecord* icl_example = nullptr);

/// ceil(1.3 * whitespace-delimited words).
std::size_t estimate_tokens(std::string_view text);

struct BudgetResult {
    std::vector<PromptRecord> kept;
    std::size_t dropped = 0;
};

/// Drops records whose assembled prompt is estimated above `limit` tokens.
BudgetResult token_budget_filter(std::span<const PromptRecord> records, std::size_t limit = 512,
                                 const PromptRecord* icl_example = nullptr);

std::string record_to_json(const PromptRecord& record);
PromptRecord record_from_json(std::string_view line);

void export_jsonl(std::ostream& out, std::span<const PromptRecord> records);
std::vector<PromptRecord> import_jsonl(std::istream& in);

/// Node_0..Node_<E-1> then relation_0..relation_<R-1>, one per line.
void emit_special_tokens_manifest(std::ostream& out, std::size_t entity_count,
                                  std::size_t relation_count);

}  // namespace kgllm
