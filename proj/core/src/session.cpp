#include "loom/session.hpp"

#include <algorithm>

#include "loom/llm.hpp"

namespace loom {

using nlohmann::json;

std::string_view to_string(SessionStatus status) {
    switch (status) {
    case SessionStatus::awaiting_player: return "awaiting_player";
    case SessionStatus::compiling: return "compiling";
    case SessionStatus::finished: return "finished";
    case SessionStatus::failed: return "failed";
    }
    return "failed";
}

SessionStatus session_status_from_string(std::string_view text) {
    for (auto s : {SessionStatus::awaiting_player, SessionStatus::compiling, SessionStatus::finished,
                   SessionStatus::failed})
        if (to_string(s) == text) return s;
    throw ParseError("unknown session status '" + std::string(text) + "'");
}

GameSession::GameSession(const StoryDomain& domain, Outline outline, WorldState initial, CharacterId player,
                         CompilerConfig config, std::string tag_prefix)
    : domain_(&domain),
      outline_(std::move(outline)),
      initial_(std::move(initial)),
      world_(initial_),
      player_(std::move(player)),
      config_(config),
      tag_prefix_(std::move(tag_prefix)) {
    validate_outline(outline_);
    validate_config(config_);
    if (!domain.find_character(player_)) throw ValidationError("player_character", "unknown character '" + player_ + "'");
}

int GameSession::pending_player_actions() const {
    if (status_ != SessionStatus::awaiting_player) return 0;
    return config_.player_actions_per_turn - player_actions_this_turn_;
}

CompileContext GameSession::context(Provider& provider) const {
    return CompileContext{*domain_, provider, config_, tag_prefix_, &outline_};
}

void GameSession::advance(Provider& provider) {
    if (status_ != SessionStatus::compiling)
        throw PreconditionError("session is " + std::string(to_string(status_)) + ", not compiling");
    const int k = next_event_;
    const auto& event = outline_.events[k].text;
    try {
        if (k > 0) run_npc_turns(provider);
        if (!(k > 0 && check_fulfillment(provider, k))) {
            auto compiled = compile_event(context(provider), k, event, world_);
            PlotSegment seg;
            seg.event_index = k;
            seg.event_text = event;
            seg.records = std::move(compiled.records);
            seg.iteration = compiled.plan.iteration;
            plot_.segments.push_back(std::move(seg));
            world_ = std::move(compiled.world);
        }
    } catch (const Error& e) {
        plot_.complete = false;
        plot_.failure = e.what();
        status_ = SessionStatus::failed;
        return;
    }
    ++next_event_;
    if (next_event_ == static_cast<int>(outline_.events.size())) {
        finish(provider);
    } else {
        enter_player_phase();
    }
}

void GameSession::enter_player_phase() {
    Interlude interlude;
    interlude.after_segment = static_cast<int>(plot_.segments.size()) - 1;
    plot_.interludes.push_back(std::move(interlude));
    player_actions_this_turn_ = 0;
    const auto it = world_.alive.find(player_);
    status_ = (it != world_.alive.end() && it->second) ? SessionStatus::awaiting_player : SessionStatus::compiling;
}

Verdict GameSession::submit_player_action(const ActionInstance& action) {
    if (status_ != SessionStatus::awaiting_player)
        throw PreconditionError("session is " + std::string(to_string(status_)) + ", not awaiting a player action");
    ActionInstance a = action;
    if (a.subject.empty()) a.subject = player_;
    if (a.subject != player_) return Verdict::no("subject must be the player character '" + player_ + "'");
    if (auto v = is_executable(*domain_, world_, a); !v) return v;
    auto t = execute(*domain_, world_, a, Origin::player);
    world_ = std::move(t.world);
    plot_.interludes.back().records.push_back(std::move(t.record));
    if (++player_actions_this_turn_ >= config_.player_actions_per_turn) status_ = SessionStatus::compiling;
    return Verdict::yes();
}

void GameSession::end_player_turn() {
    if (status_ != SessionStatus::awaiting_player)
        throw PreconditionError("session is " + std::string(to_string(status_)) + ", not awaiting a player action");
    status_ = SessionStatus::compiling;
}

void GameSession::run_npc_turns(Provider& provider) {
    const int interlude = interlude_index();
    for (int t = 0; t < config_.npc_turns_per_interlude; ++t) {
        std::vector<CharacterId> npcs;
        for (const auto& c : domain_->characters)
            if (c.id != player_ && world_.alive.at(c.id)) npcs.push_back(c.id);
        if (npcs.empty()) return;
        const auto& npc = npcs[(interlude * config_.npc_turns_per_interlude + t) % npcs.size()];
        auto turn = simulate_npc_turn(context(provider), world_, npc, interlude);
        warnings_.insert(warnings_.end(), turn.warnings.begin(), turn.warnings.end());
        if (!turn.action) continue;
        auto tr = execute(*domain_, world_, *turn.action, Origin::npc_simulation);
        world_ = std::move(tr.world);
        plot_.interludes.back().records.push_back(std::move(tr.record));
    }
}

bool GameSession::check_fulfillment(Provider& provider, int event_index) {
    if (!config_.check_fulfillment || plot_.interludes.empty()) return false;
    const auto& records = plot_.interludes.back().records;
    std::vector<int> player_records;
    std::string listing;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].origin != Origin::player) continue;
        listing += std::to_string(player_records.size()) + ". " + records[i].action.subject + " " +
                   format_action_call(records[i].action, domain_->find_action(records[i].action.action)) + "\n";
        player_records.push_back(static_cast<int>(i));
    }
    if (player_records.empty()) return false;

    CompletionRequest req;
    req.template_id = "fulfillment_check";
    req.variables = {{"event", outline_.events[event_index].text}, {"player_actions", listing}};
    req.temperature = judging_temperature;
    req.tag = tag_prefix_ + "fulfill.e" + std::to_string(event_index);
    const auto n = player_records.size();
    StructuredSchema schema{"{\"fulfilled\": bool, \"cited\": [int]}", [n](const json& doc) {
                                if (!doc.is_object() || !doc.contains("fulfilled") || !doc["fulfilled"].is_boolean())
                                    throw ParseError("expected {\"fulfilled\": bool, \"cited\": [...]}");
                                for (const auto& c : doc.value("cited", json::array()))
                                    if (!c.is_number_integer() || c.get<int>() < 0 || c.get<std::size_t>() >= n)
                                        throw ValidationError("cited", "indices must be between 0 and " +
                                                                           std::to_string(n - 1));
                            }};
    json verdict;
    try {
        verdict = complete_structured(provider, req, schema);
    } catch (const ProviderError& e) {
        warnings_.push_back(std::string("fulfillment check skipped: ") + e.what());
        return false;
    }
    if (!verdict["fulfilled"].get<bool>()) return false;
    std::vector<int> cited;
    for (const auto& c : verdict.value("cited", json::array())) cited.push_back(player_records[c.get<int>()]);
    std::sort(cited.begin(), cited.end());
    cited.erase(std::unique(cited.begin(), cited.end()), cited.end());
    if (cited.empty()) {
        warnings_.push_back("fulfillment judged without cited actions for event " + std::to_string(event_index));
        return false;
    }
    PlotSegment seg;
    seg.event_index = event_index;
    seg.event_text = outline_.events[event_index].text;
    seg.fulfilled_by_player = true;
    seg.cited_player_records = std::move(cited);
    plot_.segments.push_back(std::move(seg));
    return true;
}

void GameSession::finish(Provider& provider) {
    if (config_.summarize) {
        CompletionRequest req;
        req.template_id = "plot_summary";
        req.variables = {{"plot", render_plot_story(plot_)}};
        req.temperature = generation_temperature;
        req.tag = tag_prefix_ + "summary";
        try {
            plot_.summary = complete(provider, req);
        } catch (const ProviderError& e) {
            warnings_.push_back(std::string("summary skipped: ") + e.what());
        }
    }
    plot_.complete = true;
    status_ = SessionStatus::finished;
}

json GameSession::to_json() const {
    return {{"outline", outline_to_json(outline_)},
            {"initial_world", world_to_json(initial_)},
            {"world", world_to_json(world_)},
            {"player_character", player_},
            {"config", config_to_json(config_)},
            {"tag_prefix", tag_prefix_},
            {"plot", plot_to_json(plot_)},
            {"status", std::string(to_string(status_))},
            {"next_event", next_event_},
            {"player_actions_this_turn", player_actions_this_turn_},
            {"warnings", warnings_}};
}

GameSession GameSession::from_json(const StoryDomain& domain, const json& doc) {
    GameSession s(domain, outline_from_json(doc.at("outline")), world_from_json(doc.at("initial_world")),
                  doc.at("player_character").get<std::string>(), config_from_json(doc.at("config")),
                  doc.value("tag_prefix", std::string()));
    s.world_ = world_from_json(doc.at("world"));
    s.plot_ = plot_from_json(doc.at("plot"));
    s.status_ = session_status_from_string(doc.at("status").get<std::string>());
    s.next_event_ = doc.at("next_event").get<int>();
    s.player_actions_this_turn_ = doc.value("player_actions_this_turn", 0);
    s.warnings_ = doc.value("warnings", std::vector<std::string>{});
    return s;
}

std::vector<ActionInstance> ScriptedPlayer::next_actions(const PlayerTurn& turn) {
    std::vector<ActionInstance> out;
    while (next_ < actions_.size() && static_cast<int>(out.size()) < turn.count) {
        auto a = actions_[next_++];
        if (a.subject.empty()) a.subject = turn.player;
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

void fill_player_turn(GameSession& session, const StoryDomain& domain, PlayerSource& source) {
    std::vector<std::string> rejections;
    for (int attempt = 0; attempt < max_player_requests_per_turn && session.pending_player_actions() > 0;
         ++attempt) {
        PlayerTurn turn{domain,
                        session.world(),
                        session.plot(),
                        session.player(),
                        session.pending_player_actions(),
                        session.interlude_index(),
                        attempt,
                        rejections};
        const auto actions = source.next_actions(turn);
        if (actions.empty()) break;
        for (const auto& a : actions) {
            if (session.pending_player_actions() == 0) break;
            if (auto v = session.submit_player_action(a); !v)
                rejections.push_back(a.subject + " " + format_action_call(a, domain.find_action(a.action)) + ": " +
                                     v.reason);
        }
    }
    const auto* think = domain.find_action("think");
    const bool can_think = think && think->parameters.size() == 1 && think->parameters[0].kind == ParamKind::free_text;
    while (session.pending_player_actions() > 0) {
        if (!can_think || !session.submit_player_action({session.player(), "think", {"…"}, std::nullopt})) {
            session.end_player_turn();
            break;
        }
    }
}

} // namespace

GamePlot run_game_loop(const Outline& outline, const StoryDomain& domain, const WorldState& initial,
                       const CharacterId& player, PlayerSource& player_source, Provider& provider,
                       const CompilerConfig& config, const std::string& tag_prefix,
                       std::vector<std::string>* warnings) {
    GameSession session(domain, outline, initial, player, config, tag_prefix);
    for (;;) {
        const auto status = session.status();
        if (status == SessionStatus::compiling) {
            session.advance(provider);
        } else if (status == SessionStatus::awaiting_player) {
            fill_player_turn(session, domain, player_source);
        } else {
            break;
        }
    }
    if (warnings) warnings->insert(warnings->end(), session.warnings().begin(), session.warnings().end());
    return session.plot();
}

} // namespace loom
