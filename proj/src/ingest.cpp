#include "kgllm/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>

#include <fmt/format.h>

namespace kgllm {

FormatError::FormatError(std::string_view source, std::size_t line, std::string_view detail)
    : std::runtime_error(fmt::format("{}:{}: {}", source, line, detail)), line_(line) {}

namespace {

/// Line reader that tracks line numbers, strips CR and enforces the
/// "trailing blank lines only" rule.
class RowReader {
public:
    RowReader(std::istream& in, std::string_view source) : in_(in), source_(source) {}

    /// Next non-blank row; std::nullopt at end of input.
    std::optional<std::string_view> next() {
        while (std::getline(in_, buffer_)) {
            ++line_;
            if (!buffer_.empty() && buffer_.back() == '\r') buffer_.pop_back();
            std::string_view row = trim(buffer_);
            if (row.empty()) {
                if (!blank_seen_) blank_seen_ = line_;
                continue;
            }
            if (blank_seen_) fail(blank_seen_, "blank line inside data rows");
            return row;
        }
        return std::nullopt;
    }

    std::size_t line() const noexcept { return line_; }

    [[noreturn]] void fail(std::size_t line, std::string_view detail) const {
        throw FormatError(source_, line, detail);
    }

    [[noreturn]] void fail(std::string_view detail) const { fail(line_, detail); }

private:
    std::istream& in_;
    std::string source_;
    std::string buffer_;
    std::size_t line_ = 0;
    std::size_t blank_seen_ = 0;
};

template <typename Int>
std::optional<Int> parse_int(std::string_view token) {
    Int value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
    return value;
}

std::vector<std::string_view> split_ws(std::string_view row) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < row.size()) {
        while (i < row.size() && std::isspace(static_cast<unsigned char>(row[i]))) ++i;
        std::size_t start = i;
        while (i < row.size() && !std::isspace(static_cast<unsigned char>(row[i]))) ++i;
        if (i > start) tokens.push_back(row.substr(start, i - start));
    }
    return tokens;
}

std::size_t read_header(RowReader& reader) {
    auto row = reader.next();
    if (!row) reader.fail(1, "missing count header");
    auto count = parse_int<std::size_t>(*row);
    if (!count) reader.fail(fmt::format("count header is not a nonnegative integer: '{}'", *row));
    return *count;
}

void expect_exhausted(RowReader& reader, std::size_t declared) {
    if (auto extra = reader.next()) {
        reader.fail(fmt::format("count mismatch: header declares {} rows but more follow", declared));
    }
}

std::string normalized_name(std::string_view name) {
    std::string out;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    return out;
}

std::ifstream open_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError(fmt::format("cannot open {}", path.string()));
    return in;
}

/// Optional "<key>\t<text>" sidecar. Rows whose key is unknown are skipped.
template <typename Apply>
void read_sidecar(const std::filesystem::path& path, const IdMap& ids, Apply apply) {
    auto in = open_file(path);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view row = line;
        auto cut = row.find('\t');
        if (cut == std::string_view::npos) {
            cut = row.find_first_of(" ");
            if (cut == std::string_view::npos) continue;
        }
        auto key = trim(row.substr(0, cut));
        auto text = trim(row.substr(cut + 1));
        if (key.empty() || text.empty()) continue;
        auto it = ids.ids.find(std::string(key));
        if (it != ids.ids.end()) apply(it->second, text);
    }
}

}  // namespace

IdMap parse_id_map(std::istream& in, std::string_view source) {
    RowReader reader(in, source);
    const std::size_t declared = read_header(reader);

    IdMap map;
    map.names.resize(declared);
    std::vector<bool> seen(declared, false);
    std::size_t rows = 0;
    while (rows < declared) {
        auto row = reader.next();
        if (!row) {
            reader.fail(fmt::format("count mismatch: header declares {} rows, found {}", declared,
                                    rows));
        }
        auto cut = row->find_last_of(" \t");
        if (cut == std::string_view::npos) reader.fail("expected '<name> <id>'");
        auto name = trim(row->substr(0, cut));
        auto id = parse_int<std::uint32_t>(row->substr(cut + 1));
        if (name.empty()) reader.fail("empty name");
        if (!id) reader.fail(fmt::format("id is not an integer: '{}'", row->substr(cut + 1)));
        if (*id >= declared) {
            reader.fail(fmt::format("id {} outside [0, {})", *id, declared));
        }
        if (seen[*id]) reader.fail(fmt::format("duplicate id {}", *id));
        if (!map.ids.emplace(std::string(name), *id).second) {
            reader.fail(fmt::format("duplicate name '{}'", name));
        }
        seen[*id] = true;
        map.names[*id] = std::string(name);
        ++rows;
    }
    expect_exhausted(reader, declared);
    return map;
}

std::vector<Triple> parse_triples_file(std::istream& in, std::string_view source) {
    RowReader reader(in, source);
    const std::size_t declared = read_header(reader);

    std::vector<Triple> triples;
    triples.reserve(declared);
    while (triples.size() < declared) {
        auto row = reader.next();
        if (!row) {
            reader.fail(fmt::format("count mismatch: header declares {} rows, found {}", declared,
                                    triples.size()));
        }
        auto tokens = split_ws(*row);
        if (tokens.size() != 3) {
            reader.fail(fmt::format("expected 3 columns '<head> <tail> <relation>', got {}",
                                    tokens.size()));
        }
        std::array<std::uint32_t, 3> values{};
        for (std::size_t i = 0; i < 3; ++i) {
            auto v = parse_int<std::uint32_t>(tokens[i]);
            if (!v) reader.fail(fmt::format("non-integer token '{}'", tokens[i]));
            values[i] = *v;
        }
        // OpenKE column order is head, tail, relation.
        triples.push_back(Triple{values[0], values[2], values[1]});
    }
    expect_exhausted(reader, declared);
    return triples;
}

void write_triples_file(std::ostream& out, std::span<const Triple> triples) {
    out << triples.size() << '\n';
    for (const Triple& t : triples) out << t.head << ' ' << t.tail << ' ' << t.relation << '\n';
}

void write_id_map(std::ostream& out, std::span<const std::string> names) {
    out << names.size() << '\n';
    for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << '\t' << i << '\n';
}

bool is_opaque_key(std::string_view key) {
    key = trim(key);
    if (key.empty()) return true;
    if (std::all_of(key.begin(), key.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; })) {
        return true;
    }
    return key.starts_with("/m/") || key.starts_with("/g/") || key.starts_with("m.");
}

Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw IngestError(fmt::format("dataset directory not found: {}", dir.string()));
    }

    Dataset ds;
    DatasetManifest& m = ds.manifest;
    m.directory = dir;
    m.merged_splits = options.merge_splits;
    m.name = options.name;
    if (m.name.empty()) {
        auto normal = fs::weakly_canonical(fs::absolute(dir));
        m.name = normal.filename().string();
        if (m.name.empty()) m.name = normal.parent_path().filename().string();
    }

    auto has = [&](const char* file) { return fs::is_regular_file(dir / file); };
    m.files.entity2id = has("entity2id.txt");
    m.files.relation2id = has("relation2id.txt");
    m.files.train2id = has("train2id.txt");
    m.files.valid2id = has("valid2id.txt");
    m.files.test2id = has("test2id.txt");
    m.files.entity2text = has("entity2text.txt");
    m.files.entity2type = has("entity2type.txt");
    m.files.relation2text = has("relation2text.txt");

    std::vector<std::string> missing;
    if (!m.files.entity2id) missing.emplace_back("entity2id.txt");
    if (!m.files.relation2id) missing.emplace_back("relation2id.txt");
    if (options.merge_splits) {
        if (!m.files.train2id && !m.files.valid2id && !m.files.test2id) {
            missing.emplace_back("train2id.txt (or valid2id.txt / test2id.txt)");
        }
    } else if (!m.files.train2id) {
        missing.emplace_back("train2id.txt");
    }
    if (!missing.empty()) {
        throw IngestError(fmt::format("{}: missing required file(s): {}", dir.string(),
                                      fmt::join(missing, ", ")));
    }

    auto read_map = [&](const char* file) {
        auto in = open_file(dir / file);
        return parse_id_map(in, (dir / file).string());
    };
    IdMap entities = read_map("entity2id.txt");
    IdMap relations = read_map("relation2id.txt");
    m.entities = entities.size();
    m.relations = relations.size();

    std::vector<Triple> all;
    auto read_triples = [&](const char* file, std::optional<std::size_t>& count) {
        auto in = open_file(dir / file);
        auto triples = parse_triples_file(in, (dir / file).string());
        count = triples.size();
        all.insert(all.end(), triples.begin(), triples.end());
    };
    if (m.files.train2id) read_triples("train2id.txt", m.train_triples);
    if (options.merge_splits) {
        if (m.files.valid2id) read_triples("valid2id.txt", m.valid_triples);
        if (m.files.test2id) read_triples("test2id.txt", m.test_triples);
    }
    m.triples = all.size();

    ds.graph = KnowledgeGraph::build(m.entities, m.relations, all);
    m.unique_triples = ds.graph.triple_count();

    ds.lexicon = Lexicon(m.entities, m.relations);
    m.entity_names_readable = true;
    for (std::size_t i = 0; i < entities.size(); ++i) {
        if (is_opaque_key(entities.names[i])) {
            m.entity_names_readable = false;
        } else {
            ds.lexicon.set_entity_name(static_cast<NodeId>(i), entities.names[i]);
        }
    }
    m.relation_names_readable = true;
    for (std::size_t i = 0; i < relations.size(); ++i) {
        if (is_opaque_key(relations.names[i])) {
            m.relation_names_readable = false;
        } else {
            ds.lexicon.set_relation_name(static_cast<RelationId>(i), relations.names[i]);
        }
    }
    if (m.files.entity2text) {
        read_sidecar(dir / "entity2text.txt", entities,
                     [&](std::uint32_t id, std::string_view text) {
                         ds.lexicon.set_entity_name(id, text);
                     });
    }
    if (m.files.entity2type) {
        read_sidecar(dir / "entity2type.txt", entities,
                     [&](std::uint32_t id, std::string_view text) {
                         ds.lexicon.set_entity_descriptor(id, text);
                     });
    }
    if (m.files.relation2text) {
        read_sidecar(dir / "relation2text.txt", relations,
                     [&](std::uint32_t id, std::string_view text) {
                         ds.lexicon.set_relation_phrase(id, text);
                     });
    }
    return ds;
}

namespace {

constexpr std::array<DatasetStatistics, 4> kReference{{
    {"WN18RR", 40'943, 11, 86'835},
    {"NELL-995", 75'492, 200, 149'678},
    {"FB15k-237", 14'541, 237, 310'116},
    {"YAGO3-10", 123'182, 37, 1'179'040},
}};

}  // namespace

std::span<const DatasetStatistics> reference_statistics() { return kReference; }

std::optional<DatasetStatistics> find_reference_statistics(std::string_view dataset_name) {
    const std::string key = normalized_name(dataset_name);
    for (const auto& s : kReference) {
        if (normalized_name(s.name) == key) return s;
    }
    return std::nullopt;
}

std::optional<ReferenceCheck> check_reference(const DatasetManifest& manifest) {
    auto expected = find_reference_statistics(manifest.name);
    if (!expected) return std::nullopt;
    ReferenceCheck check;
    check.expected = *expected;
    check.entities_match = manifest.entities == expected->entities;
    check.relations_match = manifest.relations == expected->relations;
    // The published triple counts mix bases: some datasets report the size of
    // the training file, others the total over all split files.
    if (manifest.merged_splits && manifest.triples == expected->triples) {
        check.triples_match = true;
        check.triple_basis = "all splits";
    } else if (manifest.train_triples && *manifest.train_triples == expected->triples) {
        check.triples_match = true;
        check.triple_basis = "train split";
    } else {
        check.triple_basis = "none";
    }
    return check;
}

}  // namespace kgllm
