#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kgllm {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// 64-bit FNV-1a; stable across platforms, used for config and content hashes.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Stage header written as the first line of every JSONL artifact that is
/// not consumed by an external trainer.
struct Provenance {
    std::string stage;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string tool_version{kToolVersion};
    std::vector<std::pair<std::string, std::string>> attributes;

    std::optional<std::string_view> attribute(std::string_view key) const;
    void set(std::string key, std::string value);
};

/// {"provenance":{...}} on one line, no trailing newline.
std::string provenance_line(const Provenance& p);

/// Parses a line produced by provenance_line(); nullopt for other records.
std::optional<Provenance> parse_provenance_line(std::string_view line);

}  // namespace kgllm
