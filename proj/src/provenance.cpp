#include "kgllm/provenance.hpp"

#include <fmt/format.h>
#include <json.hpp>

namespace kgllm {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::optional<std::string_view> Provenance::attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes) {
        if (k == key) return std::string_view(v);
    }
    return std::nullopt;
}

void Provenance::set(std::string key, std::string value) {
    for (auto& [k, v] : attributes) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    attributes.emplace_back(std::move(key), std::move(value));
}

std::string provenance_line(const Provenance& p) {
    nlohmann::ordered_json body;
    body["stage"] = p.stage;
    body["config_hash"] = p.config_hash;
    body["seed"] = p.seed;
    body["tool_version"] = p.tool_version;
    nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
    for (const auto& [k, v] : p.attributes) attrs[k] = v;
    body["attributes"] = std::move(attrs);
    nlohmann::ordered_json line;
    line["provenance"] = std::move(body);
    return line.dump();
}

std::optional<Provenance> parse_provenance_line(std::string_view line) {
    auto j = nlohmann::ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("provenance")) return std::nullopt;
    const auto& body = j["provenance"];
    if (!body.is_object()) return std::nullopt;
    Provenance p;
    p.stage = body.value("stage", "");
    p.config_hash = body.value("config_hash", "");
    p.seed = body.value("seed", std::uint64_t{0});
    p.tool_version = body.value("tool_version", "");
    if (body.contains("attributes") && body["attributes"].is_object()) {
        for (const auto& [k, v] : body["attributes"].items()) {
            p.attributes.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
        }
    }
    return p;
}

}  // namespace kgllm
