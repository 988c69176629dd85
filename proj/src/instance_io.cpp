#include "kgllm/instance_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

namespace kgllm {

using nlohmann::ordered_json;

std::string instance_to_json(const PathInstance& inst) {
    ordered_json j;
    j["id"] = inst.id;
    j["nodes"] = inst.nodes;
    j["relations"] = inst.relations;
    j["hops"] = inst.hops();
    j["label"] = to_string(inst.label);
    if (inst.gold_relation) j["gold_relation"] = *inst.gold_relation;
    j["split"] = to_string(inst.split);
    return j.dump();
}

PathInstance instance_from_json(std::string_view line) {
    auto j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw RecordError("instance line is not a JSON object");
    try {
        PathInstance inst;
        inst.id = j.at("id").get<std::uint64_t>();
        inst.nodes = j.at("nodes").get<std::vector<NodeId>>();
        inst.relations = j.at("relations").get<std::vector<RelationId>>();
        auto label = parse_label(j.at("label").get<std::string>());
        auto split = parse_split(j.at("split").get<std::string>());
        if (!label || !split) throw RecordError("unknown label or split");
        inst.label = *label;
        inst.split = *split;
        if (j.contains("gold_relation")) inst.gold_relation = j["gold_relation"].get<RelationId>();
        if (inst.nodes.size() != inst.relations.size() + 1 ||
            j.at("hops").get<std::size_t>() != inst.hops()) {
            throw RecordError(fmt::format("instance {} has inconsistent hops", inst.id));
        }
        if (inst.gold_relation.has_value() != (inst.label == Label::positive)) {
            throw RecordError(fmt::format("instance {}: gold_relation must be present iff positive",
                                          inst.id));
        }
        return inst;
    } catch (const nlohmann::json::exception& e) {
        throw RecordError(fmt::format("malformed instance record: {}", e.what()));
    }
}

void write_instances(std::ostream& out, std::span<const PathInstance> instances,
                     const Provenance* provenance) {
    if (provenance) out << provenance_line(*provenance) << '\n';
    for (const auto& inst : instances) out << instance_to_json(inst) << '\n';
}

std::vector<PathInstance> read_instances(std::istream& in, Provenance* provenance) {
    std::vector<PathInstance> out;
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
            out.push_back(instance_from_json(line));
        } catch (const RecordError& e) {
            throw RecordError(fmt::format("line {}: {}", line_no, e.what()));
        }
    }
    return out;
}

}  // namespace kgllm
