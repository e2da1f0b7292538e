#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/domain.hpp"
#include "loom/plot.hpp"

namespace loom {

class Provider;

// Increasing abstraction: beat < scene < sequence < act < story.
enum class AbstractionLevel { beat, scene, sequence, act, story };

std::string_view to_string(AbstractionLevel level);
AbstractionLevel abstraction_level_from_string(std::string_view text);
inline constexpr AbstractionLevel all_levels[] = {AbstractionLevel::beat, AbstractionLevel::scene,
                                                  AbstractionLevel::sequence, AbstractionLevel::act,
                                                  AbstractionLevel::story};

struct OutlineEvent {
    std::string text;

    bool operator==(const OutlineEvent&) const = default;
};

struct Outline {
    std::vector<OutlineEvent> events;
    AbstractionLevel level = AbstractionLevel::act;
    std::string moral;
    std::optional<std::string> user_spec;

    bool operator==(const Outline&) const = default;
};

// Throws ValidationError: at least one event, no blank event text.
void validate_outline(const Outline& outline);

nlohmann::json outline_to_json(const Outline& outline);
Outline outline_from_json(const nlohmann::json& doc);

enum class PlayerType { positive, negative, roleplayer, human };

std::string_view to_string(PlayerType type);
PlayerType player_type_from_string(std::string_view text);

struct ProgressionPoint {
    double stage = 0;
    double intent_distance = 0;
    double emergence_distance = 0;

    bool operator==(const ProgressionPoint&) const = default;
};

// Stage fractions sampled for the progression view.
inline constexpr double progression_stages[] = {0.25, 0.5, 0.75, 1.0};

struct Variant {
    std::string id;
    GamePlot plot;
    PlayerType player_type = PlayerType::human;
    double intent_distance = 0;
    double emergence_distance = 0;
    std::vector<ProgressionPoint> progression;
    bool rejected = false;
    std::vector<std::string> warnings;

    bool operator==(const Variant&) const = default;
};

nlohmann::json variant_to_json(const Variant& v);
Variant variant_from_json(const nlohmann::json& doc);

struct NarrativeSpace {
    std::string id;
    std::string domain_ref;
    // Id of the variant acting as the pivot.
    std::string pivot;
    std::optional<Outline> outline;
    std::vector<Variant> variants;
    std::string moral;
    CharacterId player_character;
    // Starting positions for plays in this space; empty means domain defaults.
    Placement placement;

    const Variant* find_variant(std::string_view id) const;
    const Variant& pivot_variant() const;
    std::vector<const Variant*> active_variants() const;

    bool operator==(const NarrativeSpace&) const = default;
};

// Throws ValidationError unless the pivot names an existing, non-rejected
// variant and all variant ids are unique.
void check_space(const NarrativeSpace& space);

NarrativeSpace set_pivot(NarrativeSpace space, std::string_view variant_id);
// Throws PreconditionError("pivot cannot be rejected").
NarrativeSpace reject_variant(NarrativeSpace space, std::string_view variant_id);
NarrativeSpace restore_variant(NarrativeSpace space, std::string_view variant_id);

nlohmann::json space_to_json(const NarrativeSpace& space);
NarrativeSpace space_from_json(const nlohmann::json& doc);

struct PivotExtraction {
    Variant pivot;
    std::vector<std::string> warnings;
};

// Turns free narrative text into a pivot variant: one record per extracted
// "subject + action + object + location" event. Events the domain cannot
// express are skipped with a warning. Throws ValidationError("no events")
// when nothing usable remains.
PivotExtraction extract_pivot(std::string_view narrative_text, const StoryDomain& domain,
                              Provider& provider, std::string variant_id = "pivot");

} // namespace loom
