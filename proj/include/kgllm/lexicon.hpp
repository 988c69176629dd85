#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgllm/graph.hpp"

namespace kgllm {

/// Surface text for entity and relation ids.
///
/// Entities carry a display name and an optional descriptor ("music artist")
/// that the chain-of-thought clauses append to a subject. Relations carry a
/// canonical name ("music_artist_genre") and an optional verbal phrase
/// ("is associated with genre"). Missing entries fall back to the literal
/// Node_<id> / relation_<id> tokens at render time.
class Lexicon {
public:
    Lexicon() = default;
    Lexicon(std::size_t entity_count, std::size_t relation_count);

    std::size_t entity_count() const noexcept { return entity_names_.size(); }
    std::size_t relation_count() const noexcept { return relation_names_.size(); }

    // Setters trim whitespace and reject empty text.
    void set_entity_name(NodeId id, std::string_view name);
    void set_entity_descriptor(NodeId id, std::string_view descriptor);
    void set_relation_name(RelationId id, std::string_view name);
    void set_relation_phrase(RelationId id, std::string_view phrase);

    std::optional<std::string_view> entity_name(NodeId id) const;
    std::optional<std::string_view> entity_descriptor(NodeId id) const;
    std::optional<std::string_view> relation_name(RelationId id) const;
    std::optional<std::string_view> relation_phrase(RelationId id) const;

    bool entities_complete() const;
    bool relations_complete() const;

    /// Case-insensitive lookup over relation names, then relation phrases.
    std::optional<RelationId> find_relation(std::string_view text) const;

private:
    void check_entity(NodeId id) const;
    void check_relation(RelationId id) const;

    std::vector<std::string> entity_names_;
    std::vector<std::string> entity_descriptors_;
    std::vector<std::string> relation_names_;
    std::vector<std::string> relation_phrases_;
};

/// Trims ASCII whitespace from both ends.
std::string_view trim(std::string_view text);

}  // namespace kgllm
