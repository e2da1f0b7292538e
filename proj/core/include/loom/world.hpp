#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/domain.hpp"

namespace loom {

// One character action, as planned or proposed. Arguments are positional
// and typed by the matching ActionSpec (character id, location id, or text).
struct ActionInstance {
    CharacterId subject;
    std::string action;
    std::vector<std::string> arguments;
    std::optional<std::string> thought;

    bool operator==(const ActionInstance&) const = default;
};

// "kill(dove)", "speakTo(ant, \"What's wrong?\")". Free-text arguments are
// double-quoted; identifiers are bare.
std::string format_action_call(const ActionInstance& a, const ActionSpec* spec = nullptr);

// Parses the call syntax above (single quotes are accepted too). The subject
// is not part of the call text. Throws ParseError.
ActionInstance parse_action_call(std::string_view subject, std::string_view call);

enum class Origin { plot_execution, player, npc_simulation };

std::string_view to_string(Origin origin);
Origin origin_from_string(std::string_view text);

// One state-variable change. Variables are dotted paths:
//   positions.<c>  alive.<c>  health.<c>  in_danger.<c>
//   relationships.<a>.<b>  memories.<c>  turn
struct Delta {
    std::string variable;
    nlohmann::json before;
    nlohmann::json after;

    bool operator==(const Delta&) const = default;
};

struct EventRecord {
    ActionInstance action;
    int turn = 0;
    std::vector<Delta> deltas;
    Origin origin = Origin::plot_execution;
    // Where the subject stood when acting.
    LocationId location;

    bool operator==(const EventRecord&) const = default;
};

struct WorldState {
    std::map<CharacterId, LocationId> positions;
    std::map<CharacterId, bool> alive;
    std::map<CharacterId, int> health;
    std::map<CharacterId, bool> in_danger;
    // (a, b) -> how a feels about b.
    std::map<std::pair<CharacterId, CharacterId>, int> relationships;
    std::map<CharacterId, std::vector<std::string>> memories;
    int turn = 0;

    bool operator==(const WorldState&) const = default;
};

inline constexpr int default_health = 3;

using Placement = std::map<CharacterId, LocationId>;

// Throws ValidationError naming the missing or unknown id.
WorldState init_world(const StoryDomain& domain, const Placement& placement);
// Every character at its domain start location.
WorldState init_world(const StoryDomain& domain);

struct Verdict {
    bool ok = true;
    std::string reason;

    explicit operator bool() const { return ok; }
    static Verdict yes() { return {}; }
    static Verdict no(std::string why) { return {false, std::move(why)}; }
};

// Static checks only: known action, arity, argument kinds, ids that resolve.
Verdict check_schema(const StoryDomain& domain, const ActionInstance& a);

// Schema checks plus world preconditions (subject alive, character
// arguments alive, colocation when the spec requires it, action-specific
// conditions such as save needing an endangered target).
Verdict is_executable(const StoryDomain& domain, const WorldState& world, const ActionInstance& a);

struct Transition {
    WorldState world;
    EventRecord record;
};

// Pure: the input world is not modified. Throws PreconditionError carrying
// the same reason is_executable reports.
Transition execute(const StoryDomain& domain, const WorldState& world, const ActionInstance& a,
                   Origin origin = Origin::plot_execution);

// Replays recorded deltas. Throws PreconditionError if a delta's `before`
// does not match the current value.
WorldState apply_deltas(WorldState world, const std::vector<Delta>& deltas);

nlohmann::json world_to_json(const WorldState& world);
WorldState world_from_json(const nlohmann::json& doc);
// Stable key order; equal worlds serialize to identical bytes.
std::string canonical_world(const WorldState& world);

nlohmann::json action_to_json(const ActionInstance& a);
ActionInstance action_from_json(const nlohmann::json& doc);
nlohmann::json record_to_json(const EventRecord& r);
EventRecord record_from_json(const nlohmann::json& doc);

// Natural-language rendering of the world for prompts. When `viewer` is
// given, only that character's memories are included.
std::string describe_world(const StoryDomain& domain, const WorldState& world,
                           std::optional<CharacterId> viewer = std::nullopt);

// Stores immutable copies of world states behind opaque tokens.
class SnapshotStore {
public:
    using Token = std::uint64_t;

    Token snapshot(const WorldState& world);
    // Throws NotFoundError for unknown tokens.
    WorldState restore(Token token) const;
    void release(Token token);
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::map<Token, WorldState> states_;
    Token next_ = 1;
};

} // namespace loom
