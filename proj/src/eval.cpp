#include "kgllm/eval.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <fmt/format.h>
#include <json.hpp>

#include "kgllm/instance_io.hpp"

namespace kgllm {

std::string_view to_string(LinkAnswer answer) {
    switch (answer) {
        case LinkAnswer::no: return "no";
        case LinkAnswer::yes: return "yes";
        case LinkAnswer::unparseable: return "unparseable";
    }
    return "unparseable";
}

namespace {

std::string lowercase(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool word_at(std::string_view text, std::size_t pos, std::string_view word) {
    if (text.substr(pos, word.size()) != word) return false;
    const std::size_t end = pos + word.size();
    return end == text.size() || !is_word_char(text[end]);
}

/// Last "relation_<k>" token with k < relation_count, scanning `text`.
std::optional<RelationId> last_relation_token(std::string_view text, std::size_t relation_count) {
    constexpr std::string_view kPrefix = "relation_";
    std::optional<RelationId> found;
    for (std::size_t pos = text.find(kPrefix); pos != std::string_view::npos;
         pos = text.find(kPrefix, pos + 1)) {
        if (pos > 0 && is_word_char(text[pos - 1])) continue;
        std::size_t digits_begin = pos + kPrefix.size();
        std::size_t digits_end = digits_begin;
        while (digits_end < text.size() && std::isdigit(static_cast<unsigned char>(text[digits_end]))) {
            ++digits_end;
        }
        if (digits_end == digits_begin) continue;
        if (digits_end < text.size() && is_word_char(text[digits_end])) continue;
        RelationId k = 0;
        auto [ptr, ec] = std::from_chars(text.data() + digits_begin, text.data() + digits_end, k);
        if (ec == std::errc{} && k < relation_count) found = k;
    }
    return found;
}

}  // namespace

LinkAnswer parse_link_answer(std::string_view text) {
    const std::string lower = lowercase(text);
    constexpr std::string_view kPhrase = "the answer is ";
    LinkAnswer result = LinkAnswer::unparseable;
    for (std::size_t pos = lower.find(kPhrase); pos != std::string::npos;
         pos = lower.find(kPhrase, pos + 1)) {
        const std::size_t at = pos + kPhrase.size();
        if (word_at(lower, at, "yes")) {
            result = LinkAnswer::yes;
        } else if (word_at(lower, at, "no")) {
            result = LinkAnswer::no;
        }
    }
    if (result != LinkAnswer::unparseable) return result;

    std::string_view tail = lower;
    while (!tail.empty() && !is_word_char(tail.back())) tail.remove_suffix(1);
    std::size_t start = tail.size();
    while (start > 0 && is_word_char(tail[start - 1])) --start;
    const std::string_view last_word = tail.substr(start);
    if (last_word == "yes") return LinkAnswer::yes;
    if (last_word == "no") return LinkAnswer::no;
    return LinkAnswer::unparseable;
}

std::optional<RelationId> parse_relation_answer(std::string_view text, const Lexicon& lexicon) {
    const std::string lower = lowercase(text);
    const std::size_t clause = lower.rfind("relationship between");
    if (clause == std::string::npos) return last_relation_token(lower, lexicon.relation_count());

    std::size_t line_end = lower.find('\n', clause);
    if (line_end == std::string::npos) line_end = lower.size();

    // Relation phrases may themselves contain " is ", so each candidate split
    // is tried from the right and the first that resolves wins.
    const auto resolve = [&](std::size_t is_pos) -> std::optional<RelationId> {
        std::string_view answer =
            trim(std::string_view(text).substr(is_pos + 4, line_end - is_pos - 4));
        while (!answer.empty() && (answer.back() == '.' || answer.back() == '!')) {
            answer.remove_suffix(1);
        }
        answer = trim(answer);
        if (answer.empty()) return std::nullopt;
        const std::string answer_lower = lowercase(answer);
        if (auto token = last_relation_token(answer_lower, lexicon.relation_count());
            token && answer_lower == fmt::format("relation_{}", *token)) {
            return token;
        }
        return lexicon.find_relation(answer);
    };
    for (std::size_t is_pos = lower.rfind(" is ", line_end);
         is_pos != std::string::npos && is_pos > clause; is_pos = lower.rfind(" is ", is_pos - 1)) {
        if (is_pos + 4 > line_end) continue;
        if (auto found = resolve(is_pos)) return found;
    }
    return std::nullopt;
}

bool EvalOutcome::correct() const {
    if (task == Task::link) {
        return predicted_link == (gold_label == Label::positive ? LinkAnswer::yes : LinkAnswer::no);
    }
    return predicted_relation.has_value() && predicted_relation == gold_relation;
}

EvalOutcome make_outcome(const PromptRecord& record, std::string_view response,
                         const Lexicon& lexicon) {
    EvalOutcome o;
    o.record_id = record.meta.id;
    o.task = record.task;
    o.hops = record.meta.hops;
    o.gold_label = record.meta.label;
    o.gold_relation = record.meta.gold_relation;
    o.raw_response = std::string(response);
    if (record.task == Task::link) {
        o.predicted_link = parse_link_answer(response);
        o.parsed = o.predicted_link != LinkAnswer::unparseable;
    } else {
        o.predicted_relation = parse_relation_answer(response, lexicon);
        o.parsed = o.predicted_relation.has_value();
    }
    return o;
}

EvalOutcome failed_outcome(const PromptRecord& record, std::string_view error) {
    EvalOutcome o;
    o.record_id = record.meta.id;
    o.task = record.task;
    o.hops = record.meta.hops;
    o.gold_label = record.meta.label;
    o.gold_relation = record.meta.gold_relation;
    o.raw_response = fmt::format("[request failed] {}", error);
    return o;
}

Confusion confusion(std::span<const EvalOutcome> outcomes) {
    Confusion c;
    for (const auto& o : outcomes) {
        const bool gold_yes = o.gold_label == Label::positive;
        const bool said_yes = o.predicted_link == LinkAnswer::yes;
        if (gold_yes) {
            ++(said_yes ? c.tp : c.fn);
        } else {
            ++(said_yes ? c.fp : c.tn);
        }
    }
    return c;
}

double f1(const Confusion& c) {
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    if (c.tp == 0 || denom == 0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double f1(std::span<const EvalOutcome> outcomes) { return f1(confusion(outcomes)); }

std::optional<double> auc_binary(const Confusion& c) {
    const std::size_t p = c.tp + c.fn;
    const std::size_t n = c.tn + c.fp;
    if (p == 0 || n == 0) return std::nullopt;
    const double tpr = static_cast<double>(c.tp) / static_cast<double>(p);
    const double tnr = static_cast<double>(c.tn) / static_cast<double>(n);
    return (tpr + tnr) / 2.0;
}

std::optional<double> auc_binary(std::span<const EvalOutcome> outcomes) {
    return auc_binary(confusion(outcomes));
}

std::optional<double> accuracy(std::span<const EvalOutcome> outcomes) {
    if (outcomes.empty()) return std::nullopt;
    const auto correct = std::count_if(outcomes.begin(), outcomes.end(),
                                       [](const EvalOutcome& o) { return o.correct(); });
    return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

MetricRow compute_metrics(std::span<const EvalOutcome> outcomes, Task task) {
    MetricRow row;
    row.n = outcomes.size();
    for (const auto& o : outcomes) {
        ++(o.gold_label == Label::positive ? row.positives : row.negatives);
        if (!o.parsed) ++row.unparseable;
    }
    if (row.n == 0) return row;
    if (task == Task::link) {
        const Confusion c = confusion(outcomes);
        row.f1 = f1(c);
        row.auc = auc_binary(c);
    }
    row.accuracy = accuracy(outcomes);
    return row;
}

double Report::parse_failure_rate() const {
    return overall.n == 0 ? 0.0
                          : static_cast<double>(overall.unparseable) / static_cast<double>(overall.n);
}

Report per_hop_report(std::span<const EvalOutcome> outcomes, Task task, std::size_t max_hops) {
    Report report;
    report.task = task;
    for (const auto& o : outcomes) max_hops = std::max(max_hops, o.hops);
    report.max_hops = max_hops;
    report.overall = compute_metrics(outcomes, task);
    for (std::size_t h = 1; h <= max_hops; ++h) {
        std::vector<EvalOutcome> bucket;
        for (const auto& o : outcomes) {
            if (o.hops == h) bucket.push_back(o);
        }
        report.per_hop.push_back(compute_metrics(bucket, task));
    }
    return report;
}

namespace {

std::string cell(const std::optional<double>& v) {
    return v ? fmt::format("{:.4f}", *v) : std::string("n/a");
}

void table_row(std::string& out, std::string_view label, const MetricRow& row, Task task) {
    out += fmt::format("{:<6}{:>8}{:>8}{:>8}{:>10}", label, row.n, row.positives, row.negatives,
                       row.unparseable);
    if (task == Task::link) out += fmt::format("{:>9}{:>9}", cell(row.f1), cell(row.auc));
    out += fmt::format("{:>9}", cell(row.accuracy));
    if (row.n == 0) out += "  (empty)";
    out += '\n';
}

}  // namespace

std::string render_report_table(const Report& report) {
    std::string out = fmt::format("task: {}\n", to_string(report.task));
    out += fmt::format("{:<6}{:>8}{:>8}{:>8}{:>10}", "hops", "n", "pos", "neg", "unparsed");
    if (report.task == Task::link) out += fmt::format("{:>9}{:>9}", "F1", "AUC");
    out += fmt::format("{:>9}\n", "ACC");
    table_row(out, "all", report.overall, report.task);
    for (std::size_t h = 0; h < report.per_hop.size(); ++h) {
        table_row(out, std::to_string(h + 1), report.per_hop[h], report.task);
    }
    out += fmt::format("parse failure rate: {:.4f}\n", report.parse_failure_rate());
    return out;
}

void write_report_records(std::ostream& out, const Report& report, const Provenance* provenance) {
    if (provenance) out << provenance_line(*provenance) << '\n';
    auto emit = [&](std::string_view metric, std::optional<std::size_t> hop,
                    std::optional<double> value, std::size_t n) {
        nlohmann::ordered_json j;
        j["metric"] = metric;
        j["hop"] = hop ? nlohmann::ordered_json(*hop) : nlohmann::ordered_json(nullptr);
        j["value"] = value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
        j["n"] = n;
        out << j.dump() << '\n';
    };
    auto emit_row = [&](const MetricRow& row, std::optional<std::size_t> hop) {
        if (report.task == Task::link) {
            emit("f1", hop, row.f1, row.n);
            emit("auc", hop, row.auc, row.n);
        }
        emit("accuracy", hop, row.accuracy, row.n);
        emit("parse_failure_rate", hop,
             row.n ? std::optional<double>(static_cast<double>(row.unparseable) /
                                           static_cast<double>(row.n))
                   : std::nullopt,
             row.n);
    };
    emit_row(report.overall, std::nullopt);
    for (std::size_t h = 0; h < report.per_hop.size(); ++h) emit_row(report.per_hop[h], h + 1);
}

std::string outcome_to_json(const EvalOutcome& o) {
    nlohmann::ordered_json j;
    j["record_id"] = o.record_id;
    j["task"] = to_string(o.task);
    j["hops"] = o.hops;
    j["gold_label"] = to_string(o.gold_label);
    if (o.gold_relation) j["gold_relation"] = *o.gold_relation;
    if (o.task == Task::link) {
        j["predicted"] = to_string(o.predicted_link);
    } else {
        j["predicted"] = o.predicted_relation ? nlohmann::ordered_json(*o.predicted_relation)
                                              : nlohmann::ordered_json("unparseable");
    }
    j["parsed"] = o.parsed;
    j["raw_response"] = o.raw_response;
    return j.dump();
}

EvalOutcome outcome_from_json(std::string_view line) {
    auto j = nlohmann::ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw RecordError("outcome line is not a JSON object");
    try {
        EvalOutcome o;
        o.record_id = j.at("record_id").get<std::uint64_t>();
        auto task = parse_task(j.at("task").get<std::string>());
        auto label = parse_label(j.at("gold_label").get<std::string>());
        if (!task || !label) throw RecordError("unknown task or label in outcome");
        o.task = *task;
        o.gold_label = *label;
        o.hops = j.at("hops").get<std::size_t>();
        if (j.contains("gold_relation")) o.gold_relation = j["gold_relation"].get<RelationId>();
        const auto& predicted = j.at("predicted");
        if (o.task == Task::link) {
            const auto p = predicted.get<std::string>();
            o.predicted_link = p == "yes" ? LinkAnswer::yes
                               : p == "no" ? LinkAnswer::no
                                           : LinkAnswer::unparseable;
        } else if (predicted.is_number_unsigned()) {
            o.predicted_relation = predicted.get<RelationId>();
        }
        o.parsed = j.at("parsed").get<bool>();
        o.raw_response = j.at("raw_response").get<std::string>();
        return o;
    } catch (const nlohmann::json::exception& e) {
        throw RecordError(fmt::format("malformed outcome record: {}", e.what()));
    }
}

void write_outcomes(std::ostream& out, std::span<const EvalOutcome> outcomes,
                    const Provenance* provenance) {
    if (provenance) out << provenance_line(*provenance) << '\n';
    for (const auto& o : outcomes) out << outcome_to_json(o) << '\n';
}

std::vector<EvalOutcome> read_outcomes(std::istream& in, Provenance* provenance) {
    std::vector<EvalOutcome> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1) {
            if (auto p = parse_provenance_line(line)) {
                if (provenance) *provenance = std::move(*p);
                continue;
            }
        }
        try {
            out.push_back(outcome_from_json(line));
        } catch (const RecordError& e) {
            throw RecordError(fmt::format("line {}: {}", line_no, e.what()));
        }
    }
    return out;
}

}  // namespace kgllm
