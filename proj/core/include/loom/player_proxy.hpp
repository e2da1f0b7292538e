#pragma once

#include <string>
#include <vector>

#include "loom/narrative.hpp"
#include "loom/session.hpp"

namespace loom {

class Provider;

// The behavioral description the proxy prompt carries for each player type.
// Roleplayers get the character's own description and memories instead of
// a goal.
std::string behavior_description(PlayerType type, const Character& character, const WorldState& world);

struct ProposalRequest {
    PlayerType type = PlayerType::roleplayer;
    CharacterId player_character;
    int count = 1;
    std::string tag;
    // Reasons earlier proposals were rejected, shown to the model.
    std::vector<std::string> rejections;
};

// Up to `count` actions for the player character, each executable in turn
// on a private copy of the world. Invalid answers are re-asked with the
// rejection reason; if nothing valid comes back, one think("…") action is
// returned instead. Throws PreconditionError if the character is dead.
std::vector<ActionInstance> propose_action(const ProposalRequest& request, const WorldState& world,
                                           const StoryDomain& domain, const GamePlot& plot_so_far,
                                           Provider& provider, std::vector<std::string>* warnings = nullptr);

// Player source for run_game_loop backed by propose_action.
class ProxyPlayer : public PlayerSource {
public:
    ProxyPlayer(PlayerType type, Provider& provider, std::string tag_prefix = "")
        : type_(type), provider_(provider), tag_prefix_(std::move(tag_prefix)) {}

    std::vector<ActionInstance> next_actions(const PlayerTurn& turn) override;
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    PlayerType type_;
    Provider& provider_;
    std::string tag_prefix_;
    std::vector<std::string> warnings_;
};

inline constexpr int max_variant_sets = 5;

struct VariantOptions {
    CompilerConfig config;
    // Generate the variants of a batch concurrently.
    bool parallel = false;
};

// n_sets x 3 variants, one per proxy type per set, each with intent and
// emergence distances and a progression series. Compilation failures give
// incomplete variants rather than failing the batch. Ids continue after the
// space's existing variants.
std::vector<Variant> generate_variants(const NarrativeSpace& space, int n_sets, const StoryDomain& domain,
                                       Provider& provider, const VariantOptions& options = {});

// Player character of a space: its own setting, else the first
// player-controllable character of the domain.
CharacterId resolve_player_character(const NarrativeSpace& space, const StoryDomain& domain);

// Starting world of a space: its placement, or the domain defaults.
WorldState initial_world_for(const NarrativeSpace& space, const StoryDomain& domain);

} // namespace loom
