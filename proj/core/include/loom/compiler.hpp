#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loom/domain.hpp"
#include "loom/error.hpp"
#include "loom/narrative.hpp"
#include "loom/plot.hpp"
#include "loom/world.hpp"

namespace loom {

class Provider;

struct ActionSequence {
    std::vector<ActionInstance> actions;
    int source_event = 0;
    // Generate/review round that produced this plan (1-based).
    int iteration = 1;
};

struct StepVerdict {
    int index = 0;
    Verdict verdict;
    // False for steps after the first failure: only their schema was checked.
    bool simulated = true;
};

struct ReviewFeedback {
    std::string coherency_notes;
    std::vector<std::pair<int, std::string>> motivation_failures;
    std::vector<std::pair<int, std::string>> causal_failures;
    bool approved = false;
    // The reviewed plan, one numbered "subject call" line per action.
    std::string draft;

    // Text appended to the next generation prompt.
    std::string render() const;
};

struct CompilerConfig {
    int max_review_rounds = 3;
    int npc_turns_per_interlude = 1;
    int player_actions_per_turn = 2;
    // Ask the judge whether the player's interlude already acted out the
    // next event.
    bool check_fulfillment = true;
    bool summarize = true;
    // Run the per-action motivation checks of one review concurrently.
    bool concurrent_review = false;
};

// Throws ValidationError when a field is out of range.
void validate_config(const CompilerConfig& config);

nlohmann::json config_to_json(const CompilerConfig& config);
CompilerConfig config_from_json(const nlohmann::json& doc);

// Everything the compiler operations share. `tag_prefix` keeps provider
// tags unique when several plots are compiled against one script.
struct CompileContext {
    const StoryDomain& domain;
    Provider& provider;
    CompilerConfig config;
    std::string tag_prefix;
    const Outline* outline = nullptr;
};

class CompilationError : public Error {
public:
    CompilationError(int event_index, const std::string& message)
        : Error("compilation_error", message), event_index_(event_index) {}
    int event_index() const noexcept { return event_index_; }

private:
    int event_index_;
};

// Asks the model for actions acting out the event. Schema-invalid answers
// are re-asked with the reason; throws StructuredOutputError after retries.
ActionSequence generate_plan(const CompileContext& ctx, int event_index, const std::string& event_text,
                             const WorldState& world, const ReviewFeedback* prior_feedback = nullptr,
                             int round = 1);

// Deterministic executability check of a whole plan, action by action, on a
// private copy of the world. No model calls.
std::vector<StepVerdict> check_causal_soundness(const ActionSequence& plan, const WorldState& world,
                                                const StoryDomain& domain);

// Coherency judgment, one role-play motivation check per action, and the
// causal check above.
ReviewFeedback review_plan(const CompileContext& ctx, const ActionSequence& plan, const std::string& event_text,
                           const WorldState& world);

struct CompiledEvent {
    ActionSequence plan;
    WorldState world;
    std::vector<EventRecord> records;
    std::vector<ReviewFeedback> reviews;
};

// generate -> review until approved or rounds run out; then executes the
// approved plan, or the last causally sound one. Throws CompilationError
// (world untouched) when no round produced a causally sound plan.
CompiledEvent compile_event(const CompileContext& ctx, int event_index, const std::string& event_text,
                            const WorldState& world);

struct NpcTurn {
    std::optional<ActionInstance> action;
    std::vector<std::string> warnings;
};

// One free action for a non-player character, not driven by the outline.
// Throws PreconditionError if the character is dead. Model failures turn
// into a pass with a warning.
NpcTurn simulate_npc_turn(const CompileContext& ctx, const WorldState& world, const CharacterId& npc,
                          int interlude_index);

} // namespace loom
