#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgllm/lexicon.hpp"
#include "kgllm/prompt.hpp"
#include "kgllm/provenance.hpp"

namespace kgllm {

enum class LinkAnswer : std::uint8_t { no, yes, unparseable };

std::string_view to_string(LinkAnswer answer);

/// Last "the answer is yes|no" wins (case-insensitive); a bare trailing
/// yes/no is the fallback.
LinkAnswer parse_link_answer(std::string_view text);

/// Reads the answer of the last "relationship between ... is X" clause,
/// trying splits at " is " from the right,
/// where X is a relation_<k> token or a lexicon relation name or phrase.
/// Without such a clause the last relation_<k> token with k < R is used.
std::optional<RelationId> parse_relation_answer(std::string_view text, const Lexicon& lexicon);

struct EvalOutcome {
    std::uint64_t record_id = 0;
    Task task = Task::link;
    std::size_t hops = 0;
    Label gold_label = Label::negative;
    std::optional<RelationId> gold_relation;
    LinkAnswer predicted_link = LinkAnswer::unparseable;  // link task
    std::optional<RelationId> predicted_relation;         // relation task
    bool parsed = false;
    std::string raw_response;  // kept for audit

    bool correct() const;
    friend bool operator==(const EvalOutcome&, const EvalOutcome&) = default;
};

/// Scores a raw response against the record's gold answer.
EvalOutcome make_outcome(const PromptRecord& record, std::string_view response,
                         const Lexicon& lexicon);

/// An outcome for a record whose request failed outright.
EvalOutcome failed_outcome(const PromptRecord& record, std::string_view error);

/// Link-task confusion counts; unparseable answers count as "no".
struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Confusion confusion(std::span<const EvalOutcome> outcomes);

/// F1 with "yes" as the positive class; 0 when precision + recall is 0.
double f1(std::span<const EvalOutcome> outcomes);
double f1(const Confusion& c);

/// (TPR + TNR) / 2, the ROC area of a hard yes/no predictor. Empty when a
/// class is absent.
std::optional<double> auc_binary(std::span<const EvalOutcome> outcomes);
std::optional<double> auc_binary(const Confusion& c);

/// correct / total with unparseable counted wrong; empty for no outcomes.
std::optional<double> accuracy(std::span<const EvalOutcome> outcomes);

struct MetricRow {
    std::size_t n = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t unparseable = 0;
    std::optional<double> f1;  // link task only
    std::optional<double> auc;
    std::optional<double> accuracy;
};

struct Report {
    Task task = Task::link;
    MetricRow overall;
    std::size_t max_hops = 5;
    std::vector<MetricRow> per_hop;  // index h-1 for hops 1..max_hops

    double parse_failure_rate() const;
};

MetricRow compute_metrics(std::span<const EvalOutcome> outcomes, Task task);
Report per_hop_report(std::span<const EvalOutcome> outcomes, Task task, std::size_t max_hops = 5);

/// Fixed-width text table.
std::string render_report_table(const Report& report);

/// {"metric":..,"hop":..,"value":..,"n":..} per line; hop is null for the
/// overall rows and value is null for metrics undefined on a bucket.
void write_report_records(std::ostream& out, const Report& report,
                          const Provenance* provenance = nullptr);

std::string outcome_to_json(const EvalOutcome& outcome);
EvalOutcome outcome_from_json(std::string_view line);
void write_outcomes(std::ostream& out, std::span<const EvalOutcome> outcomes,
                    const Provenance* provenance = nullptr);
std::vector<EvalOutcome> read_outcomes(std::istream& in, Provenance* provenance = nullptr);

}  // namespace kgllm
