#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace loom {

using CharacterId = std::string;
using LocationId = std::string;

enum class ParamKind { character, location, free_text };

std::string_view to_string(ParamKind kind);
ParamKind param_kind_from_string(std::string_view text);

struct Character {
    CharacterId id;
    std::string name;
    std::string description;
    bool player_controllable = false;
    // Where the character stands when a fresh world is created. Empty means
    // the first location of the domain.
    LocationId start_location;

    bool operator==(const Character&) const = default;
};

struct Location {
    LocationId id;
    std::string name;

    bool operator==(const Location&) const = default;
};

struct ActionParam {
    std::string role;
    ParamKind kind = ParamKind::character;

    bool operator==(const ActionParam&) const = default;
};

struct ActionSpec {
    std::string name;
    std::vector<ActionParam> parameters;
    bool requires_colocation = false;
    bool mutates_world = false;

    bool operator==(const ActionSpec&) const = default;
};

// The story world: who exists, where they can be, and what they can do.
// Immutable once loaded; share freely between threads.
struct StoryDomain {
    std::string title;
    std::vector<Character> characters;
    std::vector<Location> locations;
    std::vector<ActionSpec> actions;

    const Character* find_character(std::string_view id) const;
    const Location* find_location(std::string_view id) const;
    const ActionSpec* find_action(std::string_view name) const;

    // Start location with the "first location" default applied.
    const LocationId& start_location_of(const Character& c) const;

    bool operator==(const StoryDomain&) const = default;
};

// Identifiers are [A-Za-z0-9_]+ so they can be embedded in state-variable
// paths and action calls without escaping.
bool is_identifier(std::string_view text);

// Throws ValidationError naming the first offending field.
void validate_domain(const StoryDomain& domain);

// Parse + validate a domain document. Throws ParseError or ValidationError.
StoryDomain load_domain(std::string_view source);
StoryDomain load_domain_file(const std::filesystem::path& path);

nlohmann::json domain_to_json(const StoryDomain& domain);
StoryDomain domain_from_json(const nlohmann::json& doc);
std::string serialize_domain(const StoryDomain& domain);

// Throws NotFoundError("unknown action 'x'").
const ActionSpec& action_signature(const StoryDomain& domain, std::string_view name);

// Prompt-ready rendering of the roster and the action schema.
std::string describe_characters(const StoryDomain& domain);
std::string describe_locations(const StoryDomain& domain);
std::string describe_action_schema(const StoryDomain& domain);

} // namespace loom
