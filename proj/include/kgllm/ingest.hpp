#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgllm/graph.hpp"
#include "kgllm/lexicon.hpp"

namespace kgllm {

/// Malformed dataset file. what() carries "<source>:<line>: <detail>".
class FormatError : public std::runtime_error {
public:
    FormatError(std::string_view source, std::size_t line, std::string_view detail);

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Dataset directory is missing required files.
class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed entity2id / relation2id file.
struct IdMap {
    std::vector<std::string> names;  // indexed by id
    std::unordered_map<std::string, std::uint32_t> ids;

    std::size_t size() const noexcept { return names.size(); }
};

/// Parses "<count>" followed by "<name> <id>" rows. The id is the last
/// whitespace-separated token, so names may contain inner spaces.
IdMap parse_id_map(std::istream& in, std::string_view source = "<id map>");

/// Parses "<count>" followed by "<head> <tail> <relation>" rows and returns
/// triples in (head, relation, tail) order.
std::vector<Triple> parse_triples_file(std::istream& in, std::string_view source = "<triples>");

/// Writes triples back in the OpenKE column order.
void write_triples_file(std::ostream& out, std::span<const Triple> triples);
void write_id_map(std::ostream& out, std::span<const std::string> names);

struct DatasetFiles {
    bool entity2id = false;
    bool relation2id = false;
    bool train2id = false;
    bool valid2id = false;
    bool test2id = false;
    bool entity2text = false;
    bool entity2type = false;
    bool relation2text = false;
};

struct DatasetManifest {
    std::string name;
    std::filesystem::path directory;
    DatasetFiles files;
    std::size_t entities = 0;
    std::size_t relations = 0;
    std::size_t triples = 0;         // rows across the loaded triple files
    std::size_t unique_triples = 0;  // after duplicate collapse
    std::optional<std::size_t> train_triples;
    std::optional<std::size_t> valid_triples;
    std::optional<std::size_t> test_triples;
    bool merged_splits = true;
    bool entity_names_readable = false;
    bool relation_names_readable = false;
};

struct LoadOptions {
    bool merge_splits = true;
    std::string name;  // defaults to the directory name
};

struct Dataset {
    KnowledgeGraph graph;
    Lexicon lexicon;
    DatasetManifest manifest;
};

Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

/// Published size of an experiment dataset.
struct DatasetStatistics {
    std::string_view name;
    std::size_t entities;
    std::size_t relations;
    std::size_t triples;
};

std::span<const DatasetStatistics> reference_statistics();
std::optional<DatasetStatistics> find_reference_statistics(std::string_view dataset_name);

struct ReferenceCheck {
    DatasetStatistics expected;
    bool entities_match = false;
    bool relations_match = false;
    bool triples_match = false;
    std::string triple_basis;  // "all splits", "train split" or "none"

    bool ok() const { return entities_match && relations_match && triples_match; }
};

/// Compares a manifest with the published statistics for its dataset name.
std::optional<ReferenceCheck> check_reference(const DatasetManifest& manifest);

/// True for keys that are not human-readable names (numeric offsets,
/// Freebase mids).
bool is_opaque_key(std::string_view key);

}  // namespace kgllm
