#include "kgllm/lexicon.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace kgllm {

std::string_view trim(std::string_view text) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    return text;
}

namespace {

std::string checked_text(std::string_view text, std::string_view what) {
    auto trimmed = trim(text);
    if (trimmed.empty()) throw std::invalid_argument(fmt::format("empty {}", what));
    return std::string(trimmed);
}

std::optional<std::string_view> present(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::string_view(s);
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

}  // namespace

Lexicon::Lexicon(std::size_t entity_count, std::size_t relation_count)
    : entity_names_(entity_count),
      entity_descriptors_(entity_count),
      relation_names_(relation_count),
      relation_phrases_(relation_count) {}

void Lexicon::check_entity(NodeId id) const {
    if (id >= entity_names_.size()) {
        throw BoundsError(
            fmt::format("node id {} out of range ({} entities)", id, entity_names_.size()));
    }
}

void Lexicon::check_relation(RelationId id) const {
    if (id >= relation_names_.size()) {
        throw BoundsError(
            fmt::format("relation id {} out of range ({} relations)", id, relation_names_.size()));
    }
}

void Lexicon::set_entity_name(NodeId id, std::string_view name) {
    check_entity(id);
    entity_names_[id] = checked_text(name, "entity name");
}

void Lexicon::set_entity_descriptor(NodeId id, std::string_view descriptor) {
    check_entity(id);
    entity_descriptors_[id] = checked_text(descriptor, "entity descriptor");
}

void Lexicon::set_relation_name(RelationId id, std::string_view name) {
    check_relation(id);
    relation_names_[id] = checked_text(name, "relation name");
}

void Lexicon::set_relation_phrase(RelationId id, std::string_view phrase) {
    check_relation(id);
    relation_phrases_[id] = checked_text(phrase, "relation phrase");
}

std::optional<std::string_view> Lexicon::entity_name(NodeId id) const {
    check_entity(id);
    return present(entity_names_[id]);
}

std::optional<std::string_view> Lexicon::entity_descriptor(NodeId id) const {
    check_entity(id);
    return present(entity_descriptors_[id]);
}

std::optional<std::string_view> Lexicon::relation_name(RelationId id) const {
    check_relation(id);
    return present(relation_names_[id]);
}

std::optional<std::string_view> Lexicon::relation_phrase(RelationId id) const {
    check_relation(id);
    return present(relation_phrases_[id]);
}

bool Lexicon::entities_complete() const {
    return std::none_of(entity_names_.begin(), entity_names_.end(),
                        [](const std::string& s) { return s.empty(); });
}

bool Lexicon::relations_complete() const {
    return std::none_of(relation_names_.begin(), relation_names_.end(),
                        [](const std::string& s) { return s.empty(); });
}

std::optional<RelationId> Lexicon::find_relation(std::string_view text) const {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    for (std::size_t i = 0; i < relation_names_.size(); ++i) {
        if (!relation_names_[i].empty() && iequals(relation_names_[i], text)) {
            return static_cast<RelationId>(i);
        }
    }
    for (std::size_t i = 0; i < relation_phrases_.size(); ++i) {
        if (!relation_phrases_[i].empty() && iequals(relation_phrases_[i], text)) {
            return static_cast<RelationId>(i);
        }
    }
    return std::nullopt;
}

}  // namespace kgllm
