#include "loom/player_proxy.hpp"

#include <algorithm>
#include <future>
#include <set>

#include "loom/llm.hpp"
#include "loom/metrics.hpp"

namespace loom {

using nlohmann::json;

std::string behavior_description(PlayerType type, const Character& character, const WorldState& world) {
    switch (type) {
    case PlayerType::positive:
        return "You are a positive player. You help other characters: you protect them, save those in danger, "
               "bring characters together and ask others for help when someone is threatened.";
    case PlayerType::negative:
        return "You are a negative player, a killer. You attack and kill other characters whenever you can, "
               "and you move to wherever your next victim is.";
    case PlayerType::roleplayer:
    case PlayerType::human: {
        std::string out = "You are a role player. You care about immersion in the story and act exactly as " +
                          character.name + " would. Who " + character.name + " is: " + character.description + "\n";
        out += "What " + character.name + " remembers:\n";
        const auto it = world.memories.find(character.id);
        if (it == world.memories.end() || it->second.empty()) out += "(nothing yet)\n";
        else
            for (const auto& m : it->second) out += "- " + m + "\n";
        return out;
    }
    }
    return "";
}

std::vector<ActionInstance> propose_action(const ProposalRequest& request, const WorldState& world,
                                           const StoryDomain& domain, const GamePlot& plot_so_far,
                                           Provider& provider, std::vector<std::string>* warnings) {
    const auto* ch = domain.find_character(request.player_character);
    if (!ch) throw NotFoundError("unknown character '" + request.player_character + "'");
    if (auto it = world.alive.find(ch->id); it == world.alive.end() || !it->second)
        throw PreconditionError("player character '" + ch->id + "' is not alive");
    const int count = std::max(1, request.count);

    std::string feedback;
    if (!request.rejections.empty()) {
        feedback = "These actions were rejected by the game engine:\n";
        for (const auto& r : request.rejections) feedback += "- " + r + "\n";
    }
    const auto story = render_plot_text(plot_so_far);

    CompletionRequest req;
    req.template_id = "player_turn";
    req.variables = {{"character", ch->id},
                     {"behavior", behavior_description(request.type, *ch, world)},
                     {"characters", describe_characters(domain)},
                     {"action_schema", describe_action_schema(domain)},
                     {"world", describe_world(domain, world, ch->id)},
                     {"plot", story.empty() ? std::string("(the story has just begun)") : story},
                     {"feedback", feedback},
                     {"count", std::to_string(count)}};
    req.temperature = generation_temperature;
    req.tag = request.tag;

    std::function<std::vector<ActionInstance>(const std::string&)> parse = [&](const std::string& raw) {
        auto doc = extract_json(raw);
        if (!doc) throw ParseError("answer is not JSON");
        if (doc->is_object()) doc = json::array({*doc});
        if (!doc->is_array() || doc->empty()) throw ParseError("expected a non-empty JSON array of actions");
        std::vector<ActionInstance> out;
        WorldState sim = world;
        for (const auto& item : *doc) {
            if (static_cast<int>(out.size()) == count) break;
            if (!item.is_object() || !item.contains("action") || !item["action"].is_string())
                throw ParseError("each entry needs a string \"action\"");
            auto call = item["action"].get<std::string>();
            if (call.rfind(ch->id + " ", 0) == 0) call = call.substr(ch->id.size() + 1);
            auto a = parse_action_call(ch->id, call);
            if (item.contains("thought") && item["thought"].is_string()) a.thought = item["thought"].get<std::string>();
            if (auto v = is_executable(domain, sim, a); !v)
                throw ValidationError("action", ch->id + " " + call + " cannot be executed: " + v.reason);
            sim = execute(domain, sim, a, Origin::player).world;
            out.push_back(std::move(a));
        }
        return out;
    };

    try {
        return complete_parsed(provider, req, parse);
    } catch (const StructuredOutputError& e) {
        if (warnings) warnings->push_back(std::string("player proxy fell back to think: ") + e.what());
        return {ActionInstance{ch->id, "think", {"…"}, std::nullopt}};
    }
}

std::vector<ActionInstance> ProxyPlayer::next_actions(const PlayerTurn& turn) {
    ProposalRequest req;
    req.type = type_;
    req.player_character = turn.player;
    req.count = turn.count;
    req.tag = tag_prefix_ + "player.i" + std::to_string(turn.interlude_index) +
              (turn.attempt > 0 ? ".a" + std::to_string(turn.attempt) : std::string());
    req.rejections = turn.rejections;
    return propose_action(req, turn.world, turn.domain, turn.plot, provider_, &warnings_);
}

CharacterId resolve_player_character(const NarrativeSpace& space, const StoryDomain& domain) {
    if (!space.player_character.empty()) {
        if (!domain.find_character(space.player_character))
            throw ValidationError("player_character", "unknown character '" + space.player_character + "'");
        return space.player_character;
    }
    for (const auto& c : domain.characters)
        if (c.player_controllable) return c.id;
    throw ValidationError("player_character", "the domain has no player-controllable character");
}

WorldState initial_world_for(const NarrativeSpace& space, const StoryDomain& domain) {
    return space.placement.empty() ? init_world(domain) : init_world(domain, space.placement);
}

std::vector<Variant> generate_variants(const NarrativeSpace& space, int n_sets, const StoryDomain& domain,
                                       Provider& provider, const VariantOptions& options) {
    if (n_sets < 1 || n_sets > max_variant_sets)
        throw ValidationError("n_sets", "must be between 1 and " + std::to_string(max_variant_sets));
    if (!space.outline) throw PreconditionError("the narrative space has no outline");
    validate_config(options.config);
    const auto player = resolve_player_character(space, domain);
    const auto initial = initial_world_for(space, domain);
    const auto moral = !space.outline->moral.empty() ? space.outline->moral : space.moral;
    const Variant* pivot = space.find_variant(space.pivot);

    struct Job {
        int set;
        PlayerType type;
    };
    std::vector<Job> jobs;
    for (int s = 1; s <= n_sets; ++s)
        for (auto t : {PlayerType::positive, PlayerType::negative, PlayerType::roleplayer}) jobs.push_back({s, t});

    auto run = [&](const Job& job) {
        Variant v;
        v.player_type = job.type;
        const auto prefix = "s" + std::to_string(job.set) + "." + std::string(to_string(job.type)) + ".";
        ProxyPlayer proxy(job.type, provider, prefix);
        v.plot = run_game_loop(*space.outline, domain, initial, player, proxy, provider, options.config, prefix,
                               &v.warnings);
        v.warnings.insert(v.warnings.end(), proxy.warnings().begin(), proxy.warnings().end());
        if (!v.plot.complete) v.warnings.push_back("incomplete plot: " + v.plot.failure);
        try {
            if (moral.empty()) {
                v.warnings.push_back("no moral: intent distance not computed");
            } else if (!pivot) {
                v.warnings.push_back("no pivot: emergence distance not computed");
                v.intent_distance = intent_distance(v.plot, moral, provider, prefix + "metric.intent", &v.warnings);
            } else {
                v.progression = progression_series(v.plot, pivot->plot, moral, provider, prefix + "metric",
                                                   &v.warnings);
                v.intent_distance = v.progression.back().intent_distance;
                v.emergence_distance = v.progression.back().emergence_distance;
            }
        } catch (const Error& e) {
            v.warnings.push_back(std::string("distances not computed: ") + e.what());
        }
        return v;
    };

    std::vector<Variant> out(jobs.size());
    if (options.parallel) {
        std::vector<std::future<Variant>> futures;
        for (const auto& job : jobs) futures.push_back(std::async(std::launch::async, run, job));
        for (std::size_t i = 0; i < futures.size(); ++i) out[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = run(jobs[i]);
    }

    std::set<std::string> used;
    for (const auto& v : space.variants) used.insert(v.id);
    int next = static_cast<int>(space.variants.size()) + 1;
    for (auto& v : out) {
        while (used.count("v" + std::to_string(next))) ++next;
        v.id = "v" + std::to_string(next++);
        used.insert(v.id);
    }
    return out;
}

} // namespace loom
