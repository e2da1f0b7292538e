#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/compiler.hpp"

namespace loom {

enum class SessionStatus { awaiting_player, compiling, finished, failed };

std::string_view to_string(SessionStatus status);
SessionStatus session_status_from_string(std::string_view text);

// The main game loop as a resumable state machine: plot execution for an
// outline event, then player actions, then NPC simulation, until every
// event has been played.
//
//   compiling --advance--> awaiting_player --(enough player actions)--> compiling
//   compiling --advance--> finished | failed
class GameSession {
public:
    GameSession(const StoryDomain& domain, Outline outline, WorldState initial, CharacterId player,
                CompilerConfig config, std::string tag_prefix = "");

    SessionStatus status() const { return status_; }
    const GamePlot& plot() const { return plot_; }
    const WorldState& world() const { return world_; }
    const WorldState& initial_world() const { return initial_; }
    const Outline& outline() const { return outline_; }
    const CharacterId& player() const { return player_; }
    const CompilerConfig& config() const { return config_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    int next_event() const { return next_event_; }
    // Player actions still expected in the current turn.
    int pending_player_actions() const;
    // Index of the interlude the player is currently filling (or -1).
    int interlude_index() const { return static_cast<int>(plot_.interludes.size()) - 1; }

    // Runs one compiling step. Requires status compiling.
    void advance(Provider& provider);

    // Validates and executes one player action. Requires awaiting_player
    // (PreconditionError otherwise). Rejected actions leave the session
    // unchanged. Switches to compiling once the turn is complete.
    Verdict submit_player_action(const ActionInstance& action);
    // Ends the player's turn early (the player passes).
    void end_player_turn();

    nlohmann::json to_json() const;
    static GameSession from_json(const StoryDomain& domain, const nlohmann::json& doc);

private:
    CompileContext context(Provider& provider) const;
    void run_npc_turns(Provider& provider);
    bool check_fulfillment(Provider& provider, int event_index);
    void finish(Provider& provider);
    void enter_player_phase();

    const StoryDomain* domain_;
    Outline outline_;
    WorldState initial_;
    WorldState world_;
    CharacterId player_;
    CompilerConfig config_;
    std::string tag_prefix_;
    GamePlot plot_;
    SessionStatus status_ = SessionStatus::compiling;
    int next_event_ = 0;
    int player_actions_this_turn_ = 0;
    std::vector<std::string> warnings_;
};

struct PlayerTurn {
    const StoryDomain& domain;
    const WorldState& world;
    const GamePlot& plot;
    CharacterId player;
    // Actions still needed this turn.
    int count = 1;
    int interlude_index = 0;
    // 0 on the first request of a turn, then incremented on re-asks.
    int attempt = 0;
    std::vector<std::string> rejections;
};

// Where player actions come from during run_game_loop: a human transcript,
// or a simulated player.
class PlayerSource {
public:
    virtual ~PlayerSource() = default;
    virtual std::vector<ActionInstance> next_actions(const PlayerTurn& turn) = 0;
};

// Replays a fixed list of player actions in order.
class ScriptedPlayer : public PlayerSource {
public:
    explicit ScriptedPlayer(std::vector<ActionInstance> actions) : actions_(std::move(actions)) {}
    std::vector<ActionInstance> next_actions(const PlayerTurn& turn) override;

private:
    std::vector<ActionInstance> actions_;
    std::size_t next_ = 0;
};

inline constexpr int max_player_requests_per_turn = 4;

// Drives a GameSession to completion. Rejected player actions are reported
// back to the source; a turn the source cannot fill is padded with a think
// action. Compilation failures end the loop with an incomplete plot.
GamePlot run_game_loop(const Outline& outline, const StoryDomain& domain, const WorldState& initial,
                       const CharacterId& player, PlayerSource& player_source, Provider& provider,
                       const CompilerConfig& config, const std::string& tag_prefix = "",
                       std::vector<std::string>* warnings = nullptr);

} // namespace loom
