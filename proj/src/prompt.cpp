#include "kgllm/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <fmt/format.h>
#include <json.hpp>

#include "kgllm/instance_io.hpp"
#include "kgllm/random.hpp"

namespace kgllm {

std::string_view to_string(Task task) { return task == Task::link ? "link" : "relation"; }
std::string_view to_string(Style style) { return style == Style::ablation ? "ablation" : "kgllm"; }
std::string_view to_string(IclMode icl) { return icl == IclMode::none ? "none" : "one_shot"; }

std::optional<Task> parse_task(std::string_view text) {
    if (text == "link") return Task::link;
    if (text == "relation") return Task::relation;
    return std::nullopt;
}

std::optional<Style> parse_style(std::string_view text) {
    if (text == "ablation") return Style::ablation;
    if (text == "kgllm") return Style::kgllm;
    return std::nullopt;
}

std::optional<IclMode> parse_icl(std::string_view text) {
    if (text == "none") return IclMode::none;
    if (text == "one_shot") return IclMode::one_shot;
    return std::nullopt;
}

std::string node_token(NodeId id) { return fmt::format("Node_{}", id); }
std::string relation_token(RelationId id) { return fmt::format("relation_{}", id); }

std::string textualize_node(NodeId id, const Lexicon& lexicon) {
    if (auto name = lexicon.entity_name(id)) return std::string(*name);
    return node_token(id);
}

std::string textualize_relation(RelationId id, const Lexicon& lexicon) {
    if (auto name = lexicon.relation_name(id)) return std::string(*name);
    return relation_token(id);
}

namespace {

void check_instance(const PathInstance& inst) {
    if (inst.nodes.size() < 2 || inst.relations.size() + 1 != inst.nodes.size()) {
        throw ContractViolation(
            fmt::format("instance {} is not a path of at least one hop", inst.id));
    }
}

std::string hop_sentence(NodeId a, RelationId r, NodeId b) {
    return fmt::format("{} has {} with {}", node_token(a), relation_token(r), node_token(b));
}

// Subject side of a reasoning clause: name plus descriptor when known.
std::string subject_text(NodeId id, const Lexicon& lexicon) {
    std::string text = textualize_node(id, lexicon);
    if (auto descriptor = lexicon.entity_descriptor(id)) {
        text += ' ';
        text += *descriptor;
    }
    return text;
}

std::string predicate_text(RelationId id, const Lexicon& lexicon) {
    if (auto phrase = lexicon.relation_phrase(id)) return std::string(*phrase);
    return textualize_relation(id, lexicon);
}

std::string reasoning_chain(const PathInstance& inst, const Lexicon& lexicon) {
    std::string out;
    for (std::size_t i = 0; i < inst.hops(); ++i) {
        const NodeId a = inst.nodes[i];
        const NodeId b = inst.nodes[i + 1];
        const RelationId r = inst.relations[i];
        if (!out.empty()) out += ' ';
        out += fmt::format("{}, means {} {} {}.", hop_sentence(a, r, b), subject_text(a, lexicon),
                           predicate_text(r, lexicon), textualize_node(b, lexicon));
    }
    out += ' ';
    if (inst.label == Label::positive) {
        out += fmt::format("So {} {} {}.", subject_text(inst.first(), lexicon),
                           predicate_text(*inst.gold_relation, lexicon),
                           textualize_node(inst.last(), lexicon));
    } else {
        out += fmt::format("So {} is not connected with {}.", subject_text(inst.first(), lexicon),
                           textualize_node(inst.last(), lexicon));
    }
    return out;
}

std::string link_answer(Label label) {
    return label == Label::positive ? "The answer is yes." : "The answer is no.";
}

}  // namespace

std::string render_context(const PathInstance& instance) {
    check_instance(instance);
    std::string out;
    for (std::size_t i = 0; i < instance.hops(); ++i) {
        if (i) out += ' ';
        out += hop_sentence(instance.nodes[i], instance.relations[i], instance.nodes[i + 1]);
        out += '.';
    }
    return out;
}

std::string render_question(const PathInstance& instance, Task task) {
    check_instance(instance);
    if (task == Task::link) {
        return fmt::format("Is {} connected with {}?", node_token(instance.first()),
                           node_token(instance.last()));
    }
    return fmt::format("What is the relationship between {} and {}?", node_token(instance.first()),
                       node_token(instance.last()));
}

std::string render_expected_output(const PathInstance& instance, Task task, Style style,
                                   const Lexicon& lexicon) {
    check_instance(instance);
    if (instance.label == Label::positive && !instance.gold_relation) {
        throw ContractViolation(fmt::format("positive instance {} lacks a gold relation", instance.id));
    }
    if (task == Task::relation && instance.label != Label::positive) {
        throw ContractViolation(
            fmt::format("relation task requires a positive instance (instance {})", instance.id));
    }

    if (task == Task::link) {
        if (style == Style::ablation) return link_answer(instance.label);
        return reasoning_chain(instance, lexicon) + '\n' + link_answer(instance.label);
    }

    const RelationId gold = *instance.gold_relation;
    if (style == Style::ablation) {
        return fmt::format("The relationship between the first node and the last node is {}.",
                           relation_token(gold));
    }
    return fmt::format("{}\nThe relationship between {} and {} is {}.",
                       reasoning_chain(instance, lexicon),
                       textualize_node(instance.first(), lexicon),
                       textualize_node(instance.last(), lexicon),
                       textualize_relation(gold, lexicon));
}

std::vector<RelationId> relation_options(const Lexicon& lexicon,
                                         std::span<const PathInstance> frequency_source,
                                         std::optional<std::size_t> max_options) {
    std::vector<RelationId> ids(lexicon.relation_count());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<RelationId>(i);
    if (!max_options || *max_options >= ids.size()) return ids;

    std::vector<std::size_t> freq(ids.size(), 0);
    for (const auto& inst : frequency_source) {
        if (inst.gold_relation && *inst.gold_relation < freq.size()) ++freq[*inst.gold_relation];
    }
    std::stable_sort(ids.begin(), ids.end(),
                     [&](RelationId a, RelationId b) { return freq[a] > freq[b]; });
    ids.resize(*max_options);
    return ids;
}

std::string render_instruction(Task task, Style style, const Lexicon& lexicon,
                               std::span<const RelationId> options) {
    if (style == Style::ablation) return {};
    if (task == Task::link) {
        return "The context lists observed relations along a path of nodes in a knowledge graph. "
               "Determine whether the first node is connected with the last node. "
               "Options: yes, no. "
               "Explain each relation, then answer with \"The answer is yes.\" or "
               "\"The answer is no.\"";
    }
    std::vector<std::string> names;
    if (options.empty()) {
        for (std::size_t i = 0; i < lexicon.relation_count(); ++i) {
            names.push_back(textualize_relation(static_cast<RelationId>(i), lexicon));
        }
    } else {
        for (RelationId r : options) names.push_back(textualize_relation(r, lexicon));
    }
    return fmt::format(
        "The context lists observed relations along a path of nodes in a knowledge graph. "
        "Determine the relationship between the first node and the last node. "
        "Options: {}. "
        "Explain each relation, then answer with \"The relationship between <first node> and "
        "<last node> is <option>.\"",
        fmt::join(names, ", "));
}

PromptBuilder::PromptBuilder(Task task, Style style, IclMode icl, const Lexicon& lexicon,
                             std::span<const RelationId> options)
    : task_(task),
      style_(style),
      icl_(icl),
      lexicon_(lexicon),
      instruction_(render_instruction(task, style, lexicon, options)) {}

PromptRecord PromptBuilder::render(const PathInstance& instance) const {
    PromptRecord rec;
    rec.task = task_;
    rec.style = style_;
    rec.icl = icl_;
    rec.instruction = instruction_;
    rec.input = render_context(instance) + ' ' + render_question(instance, task_);
    rec.output = render_expected_output(instance, task_, style_, lexicon_);
    rec.meta.id = instance.id;
    rec.meta.hops = instance.hops();
    rec.meta.label = instance.label;
    rec.meta.gold_relation = instance.gold_relation;
    rec.meta.split = instance.split;
    return rec;
}

std::vector<PromptRecord> PromptBuilder::render_all(std::span<const PathInstance> instances) const {
    std::vector<PromptRecord> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        if (task_ == Task::relation && inst.label != Label::positive) continue;
        out.push_back(render(inst));
    }
    return out;
}

PromptRecord select_icl_example(std::span<const PromptRecord> train_records, Task task,
                                Style style, std::uint64_t seed) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < train_records.size(); ++i) {
        const auto& r = train_records[i];
        if (r.task == task && r.style == style && r.meta.hops == 2 &&
            r.meta.label == Label::positive && r.meta.split == Split::train) {
            candidates.push_back(i);
        }
    }
    if (candidates.empty()) {
        throw ConfigurationError(fmt::format(
            "no positive two-hop training record for task={} style={} to use as exemplar",
            to_string(task), to_string(style)));
    }
    Rng rng(derive_seed(seed, 0x1C1));
    PromptRecord pick = train_records[candidates[rng.uniform_index(candidates.size())]];
    pick.icl = IclMode::none;
    return pick;
}

std::string render_block(const PromptRecord& record) {
    return "### Context:\n" + record.input + "\nAnswer:\n" + record.output;
}

std::string assemble(const PromptRecord& record, const PromptRecord* icl_example) {
    std::string out;
    if (icl_example) {
        if (icl_example->meta.id == record.meta.id) {
            throw ContractViolation(
                fmt::format("record {} cannot serve as its own exemplar", record.meta.id));
        }
        out += render_block(*icl_example);
        out += "\n\n";
    }
    if (!record.instruction.empty()) {
        out += "### Instruction:\n";
        out += record.instruction;
        out += "\n\n";
    }
    out += "### Context:\n";
    out += record.input;
    out += "\nAnswer:\n";
    return out;
}

std::size_t estimate_tokens(std::string_view text) {
    std::size_t words = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return (words * 13 + 9) / 10;
}

BudgetResult token_budget_filter(std::span<const PromptRecord> records, std::size_t limit,
                                 const PromptRecord* icl_example) {
    BudgetResult result;
    for (const auto& rec : records) {
        const PromptRecord* example =
            (icl_example && icl_example->meta.id != rec.meta.id) ? icl_example : nullptr;
        if (estimate_tokens(assemble(rec, example)) > limit) {
            ++result.dropped;
        } else {
            result.kept.push_back(rec);
        }
    }
    return result;
}

std::string record_to_json(const PromptRecord& record) {
    nlohmann::ordered_json meta;
    meta["id"] = record.meta.id;
    meta["task"] = to_string(record.task);
    meta["style"] = to_string(record.style);
    meta["icl"] = to_string(record.icl);
    meta["hops"] = record.meta.hops;
    meta["label"] = to_string(record.meta.label);
    if (record.meta.gold_relation) meta["gold_relation"] = *record.meta.gold_relation;
    meta["split"] = to_string(record.meta.split);
    if (record.meta.icl_example_id) meta["icl_example_id"] = *record.meta.icl_example_id;
    if (!record.meta.config_hash.empty()) meta["config_hash"] = record.meta.config_hash;

    nlohmann::ordered_json j;
    j["instruction"] = record.instruction;
    j["input"] = record.input;
    j["output"] = record.output;
    j["meta"] = std::move(meta);
    return j.dump();
}

PromptRecord record_from_json(std::string_view line) {
    auto j = nlohmann::ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw RecordError("prompt line is not a JSON object");
    try {
        PromptRecord rec;
        rec.instruction = j.at("instruction").get<std::string>();
        rec.input = j.at("input").get<std::string>();
        rec.output = j.at("output").get<std::string>();
        const auto& meta = j.at("meta");
        auto task = parse_task(meta.at("task").get<std::string>());
        auto style = parse_style(meta.at("style").get<std::string>());
        auto icl = parse_icl(meta.at("icl").get<std::string>());
        auto label = parse_label(meta.at("label").get<std::string>());
        auto split = parse_split(meta.at("split").get<std::string>());
        if (!task || !style || !icl || !label || !split) {
            throw RecordError("unknown enum value in prompt meta");
        }
        rec.task = *task;
        rec.style = *style;
        rec.icl = *icl;
        rec.meta.id = meta.at("id").get<std::uint64_t>();
        rec.meta.hops = meta.at("hops").get<std::size_t>();
        rec.meta.label = *label;
        rec.meta.split = *split;
        if (meta.contains("gold_relation")) {
            rec.meta.gold_relation = meta["gold_relation"].get<RelationId>();
        }
        if (meta.contains("icl_example_id")) {
            rec.meta.icl_example_id = meta["icl_example_id"].get<std::uint64_t>();
        }
        if (meta.contains("config_hash")) rec.meta.config_hash = meta["config_hash"].get<std::string>();
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw RecordError(fmt::format("malformed prompt record: {}", e.what()));
    }
}

void export_jsonl(std::ostream& out, std::span<const PromptRecord> records) {
    for (const auto& rec : records) out << record_to_json(rec) << '\n';
}

std::vector<PromptRecord> import_jsonl(std::istream& in) {
    std::vector<PromptRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(line));
        } catch (const RecordError& e) {
            throw RecordError(fmt::format("line {}: {}", line_no, e.what()));
        }
    }
    return out;
}

void emit_special_tokens_manifest(std::ostream& out, std::size_t entity_count,
                                  std::size_t relation_count) {
    for (std::size_t i = 0; i < entity_count; ++i) out << "Node_" << i << '\n';
    for (std::size_t i = 0; i < relation_count; ++i) out << "relation_" << i << '\n';
}

}  // namespace kgllm
