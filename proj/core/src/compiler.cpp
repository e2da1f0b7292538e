#include "loom/compiler.hpp"

#include <algorithm>
#include <cctype>
#include <future>

#include "loom/llm.hpp"

namespace loom {

using nlohmann::json;

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string call_text(const StoryDomain& domain, const ActionInstance& a) {
    const auto* spec = domain.find_action(a.action);
    return a.subject + " " + format_action_call(a, spec);
}

std::string plan_text(const StoryDomain& domain, const std::vector<ActionInstance>& actions,
                      std::size_t count) {
    std::string out;
    for (std::size_t i = 0; i < count && i < actions.size(); ++i)
        out += std::to_string(i) + ". " + call_text(domain, actions[i]) + "\n";
    return out.empty() ? std::string("(nothing)\n") : out;
}

std::string outline_context(const Outline* outline, int event_index) {
    if (!outline) return "(only the event below)\n";
    std::string out;
    for (std::size_t i = 0; i < outline->events.size(); ++i) {
        out += (static_cast<int>(i) == event_index ? "-> " : "   ");
        out += std::to_string(i + 1) + ". " + outline->events[i].text + "\n";
    }
    if (!outline->moral.empty()) out += "Moral: " + outline->moral + "\n";
    return out;
}

ActionInstance action_from_entry(const json& item, const CharacterId* fixed_subject) {
    if (!item.is_object()) throw ParseError("each action must be a JSON object");
    std::string subject;
    if (fixed_subject) {
        subject = *fixed_subject;
    } else {
        if (!item.contains("subject") || !item["subject"].is_string())
            throw ParseError("each action needs a string \"subject\"");
        subject = item["subject"].get<std::string>();
    }
    if (!item.contains("action") || !item["action"].is_string())
        throw ParseError("each action needs a string \"action\"");
    auto call = item["action"].get<std::string>();
    // Tolerate "dove moveTo(forest)" in the action field.
    if (auto space = call.find(' '); space != std::string::npos && space < call.find('(') &&
                                     call.substr(0, space) == subject)
        call = call.substr(space + 1);
    auto a = parse_action_call(subject, call);
    if (item.contains("thought") && item["thought"].is_string() && !blank(item["thought"].get<std::string>()))
        a.thought = item["thought"].get<std::string>();
    return a;
}

std::vector<ActionInstance> parse_plan_answer(const StoryDomain& domain, const std::string& raw) {
    auto doc = extract_json(raw);
    if (!doc) throw ParseError("answer is not JSON");
    if (doc->is_object() && doc->contains("actions")) doc = (*doc)["actions"];
    if (!doc->is_array()) throw ParseError("expected a JSON array of actions");
    if (doc->empty()) throw ValidationError("actions", "the plan is empty");
    std::vector<ActionInstance> out;
    for (std::size_t i = 0; i < doc->size(); ++i) {
        auto a = action_from_entry((*doc)[i], nullptr);
        if (auto v = check_schema(domain, a); !v)
            throw ValidationError("actions[" + std::to_string(i) + "]",
                                  call_text(domain, a) + " is not valid: " + v.reason);
        out.push_back(std::move(a));
    }
    return out;
}

bool json_flag(const json& doc, const char* key) {
    if (!doc.is_object() || !doc.contains(key)) throw ParseError(std::string("missing \"") + key + "\"");
    const auto& v = doc[key];
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        auto s = v.get<std::string>();
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        if (s == "true" || s == "yes") return true;
        if (s == "false" || s == "no") return false;
    }
    throw ParseError(std::string("\"") + key + "\" must be a boolean");
}

std::string json_text(const json& doc, const char* key) {
    if (doc.contains(key) && doc[key].is_string()) return doc[key].get<std::string>();
    return "";
}

std::string tag_for(const CompileContext& ctx, const std::string& rest) { return ctx.tag_prefix + rest; }

} // namespace

void validate_config(const CompilerConfig& config) {
    if (config.max_review_rounds < 1) throw ValidationError("max_review_rounds", "must be at least 1");
    if (config.npc_turns_per_interlude < 0) throw ValidationError("npc_turns_per_interlude", "must not be negative");
    if (config.player_actions_per_turn < 1) throw ValidationError("player_actions_per_turn", "must be at least 1");
}

json config_to_json(const CompilerConfig& config) {
    return {{"max_review_rounds", config.max_review_rounds},
            {"npc_turns_per_interlude", config.npc_turns_per_interlude},
            {"player_actions_per_turn", config.player_actions_per_turn},
            {"check_fulfillment", config.check_fulfillment},
            {"summarize", config.summarize},
            {"concurrent_review", config.concurrent_review}};
}

CompilerConfig config_from_json(const json& doc) {
    CompilerConfig c;
    if (!doc.is_object()) throw ValidationError("config", "expected an object");
    c.max_review_rounds = doc.value("max_review_rounds", c.max_review_rounds);
    c.npc_turns_per_interlude = doc.value("npc_turns_per_interlude", c.npc_turns_per_interlude);
    c.player_actions_per_turn = doc.value("player_actions_per_turn", c.player_actions_per_turn);
    c.check_fulfillment = doc.value("check_fulfillment", c.check_fulfillment);
    c.summarize = doc.value("summarize", c.summarize);
    c.concurrent_review = doc.value("concurrent_review", c.concurrent_review);
    validate_config(c);
    return c;
}

std::string ReviewFeedback::render() const {
    if (approved) return "";
    std::string out = "Feedback on your previous draft:\n" + draft;
    if (!blank(coherency_notes)) out += "Coherency: " + coherency_notes + "\n";
    for (const auto& [i, why] : motivation_failures)
        out += "Motivation missing for action " + std::to_string(i) + ": " + why + "\n";
    for (const auto& [i, why] : causal_failures)
        out += "The game engine could not execute action " + std::to_string(i) + ": " + why + "\n";
    out += "Write a new draft that fixes these problems.\n";
    return out;
}

ActionSequence generate_plan(const CompileContext& ctx, int event_index, const std::string& event_text,
                             const WorldState& world, const ReviewFeedback* prior_feedback, int round) {
    if (blank(event_text)) throw ValidationError("event", "empty event text");
    ActionSequence seq;
    seq.source_event = event_index;
    seq.iteration = round;

    const std::string feedback = prior_feedback ? prior_feedback->render() : std::string();

    CompletionRequest req;
    req.template_id = "plot_generate";
    req.variables = {{"characters", describe_characters(ctx.domain)},
                     {"locations", describe_locations(ctx.domain)},
                     {"action_schema", describe_action_schema(ctx.domain)},
                     {"world", describe_world(ctx.domain, world)},
                     {"outline_context", outline_context(ctx.outline, event_index)},
                     {"event", event_text},
                     {"feedback", feedback}};
    req.temperature = generation_temperature;
    req.tag = tag_for(ctx, "plan.e" + std::to_string(event_index) + ".r" + std::to_string(round));
    std::function<std::vector<ActionInstance>(const std::string&)> parse = [&](const std::string& raw) {
        return parse_plan_answer(ctx.domain, raw);
    };
    seq.actions = complete_parsed(ctx.provider, req, parse);
    return seq;
}

std::vector<StepVerdict> check_causal_soundness(const ActionSequence& plan, const WorldState& world,
                                                const StoryDomain& domain) {
    std::vector<StepVerdict> out;
    WorldState sim = world;
    bool failed = false;
    for (std::size_t i = 0; i < plan.actions.size(); ++i) {
        const auto& a = plan.actions[i];
        StepVerdict step;
        step.index = static_cast<int>(i);
        if (!failed) {
            step.verdict = is_executable(domain, sim, a);
            if (step.verdict) {
                sim = execute(domain, sim, a).world;
            } else {
                failed = true;
            }
        } else {
            step.simulated = false;
            step.verdict = check_schema(domain, a);
            if (step.verdict) step.verdict.reason = "not simulated after an earlier failure";
        }
        out.push_back(std::move(step));
    }
    return out;
}

ReviewFeedback review_plan(const CompileContext& ctx, const ActionSequence& plan, const std::string& event_text,
                           const WorldState& world) {
    ReviewFeedback fb;
    fb.draft = plan_text(ctx.domain, plan.actions, plan.actions.size());
    const auto round_tag = "review.e" + std::to_string(plan.source_event) + ".r" + std::to_string(plan.iteration);

    for (const auto& step : check_causal_soundness(plan, world, ctx.domain))
        if (!step.verdict.ok) fb.causal_failures.emplace_back(step.index, step.verdict.reason);

    CompletionRequest coherency;
    coherency.template_id = "review_coherency";
    coherency.variables = {{"world", describe_world(ctx.domain, world)},
                           {"event", event_text},
                           {"plan", fb.draft}};
    coherency.temperature = judging_temperature;
    coherency.tag = tag_for(ctx, round_tag + ".coherency");
    StructuredSchema coherency_schema{"{\"coherent\": bool, \"notes\": string}",
                                      [](const json& doc) { json_flag(doc, "coherent"); }};
    const auto verdict = complete_structured(ctx.provider, coherency, coherency_schema);
    if (!json_flag(verdict, "coherent")) {
        fb.coherency_notes = json_text(verdict, "notes");
        if (blank(fb.coherency_notes)) fb.coherency_notes = "the draft does not act out the event coherently";
    }

    // World as each subject sees it just before acting. Stops advancing at
    // the first action that cannot run.
    std::vector<WorldState> before;
    WorldState sim = world;
    for (const auto& a : plan.actions) {
        before.push_back(sim);
        if (is_executable(ctx.domain, sim, a)) sim = execute(ctx.domain, sim, a).world;
    }

    auto motivation = [&](std::size_t i) -> std::optional<std::string> {
        const auto& a = plan.actions[i];
        const auto* ch = ctx.domain.find_character(a.subject);
        CompletionRequest req;
        req.template_id = "review_motivation";
        req.variables = {{"character", ch ? ch->name : a.subject},
                         {"description", ch ? ch->description : std::string()},
                         {"world", describe_world(ctx.domain, before[i], a.subject)},
                         {"before", plan_text(ctx.domain, plan.actions, i)},
                         {"action", call_text(ctx.domain, a)}};
        req.temperature = judging_temperature;
        req.tag = tag_for(ctx, round_tag + ".motivation.a" + std::to_string(i));
        StructuredSchema schema{"{\"established\": bool, \"explanation\": string}",
                                [](const json& doc) { json_flag(doc, "established"); }};
        const auto doc = complete_structured(ctx.provider, req, schema);
        if (json_flag(doc, "established")) return std::nullopt;
        auto why = json_text(doc, "explanation");
        return blank(why) ? std::string("motivation not established") : why;
    };

    std::vector<std::optional<std::string>> results(plan.actions.size());
    if (ctx.config.concurrent_review && plan.actions.size() > 1) {
        std::vector<std::future<std::optional<std::string>>> jobs;
        for (std::size_t i = 0; i < plan.actions.size(); ++i)
            jobs.push_back(std::async(std::launch::async, motivation, i));
        for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = jobs[i].get();
    } else {
        for (std::size_t i = 0; i < plan.actions.size(); ++i) results[i] = motivation(i);
    }
    for (std::size_t i = 0; i < results.size(); ++i)
        if (results[i]) fb.motivation_failures.emplace_back(static_cast<int>(i), *results[i]);

    fb.approved = blank(fb.coherency_notes) && fb.motivation_failures.empty() && fb.causal_failures.empty();
    return fb;
}

CompiledEvent compile_event(const CompileContext& ctx, int event_index, const std::string& event_text,
                            const WorldState& world) {
    validate_config(ctx.config);
    CompiledEvent result;
    std::optional<ActionSequence> sound;
    std::string last_error;

    for (int round = 1; round <= ctx.config.max_review_rounds; ++round) {
        const ReviewFeedback* prior = result.reviews.empty() ? nullptr : &result.reviews.back();
        ActionSequence plan;
        try {
            plan = generate_plan(ctx, event_index, event_text, world, prior, round);
        } catch (const StructuredOutputError& e) {
            last_error = e.what();
            continue;
        }
        auto review = review_plan(ctx, plan, event_text, world);
        result.reviews.push_back(review);
        if (review.causal_failures.empty()) sound = plan;
        if (review.approved) break;
    }

    if (!sound) {
        std::string msg = "event " + std::to_string(event_index) + " (\"" + event_text +
                          "\"): no causally sound plan within " + std::to_string(ctx.config.max_review_rounds) +
                          " round(s)";
        if (!result.reviews.empty() && !result.reviews.back().causal_failures.empty())
            msg += "; last failure: " + result.reviews.back().causal_failures.front().second;
        else if (!last_error.empty())
            msg += "; " + last_error;
        throw CompilationError(event_index, msg);
    }

    result.plan = *sound;
    result.world = world;
    for (const auto& a : sound->actions) {
        auto t = execute(ctx.domain, result.world, a, Origin::plot_execution);
        result.world = std::move(t.world);
        result.records.push_back(std::move(t.record));
    }
    return result;
}

NpcTurn simulate_npc_turn(const CompileContext& ctx, const WorldState& world, const CharacterId& npc,
                          int interlude_index) {
    const auto* ch = ctx.domain.find_character(npc);
    if (!ch) throw NotFoundError("unknown character '" + npc + "'");
    if (auto it = world.alive.find(npc); it == world.alive.end() || !it->second)
        throw PreconditionError("npc '" + npc + "' is not alive");

    CompletionRequest req;
    req.template_id = "npc_turn";
    req.variables = {{"character", ch->name},
                     {"description", ch->description},
                     {"characters", describe_characters(ctx.domain)},
                     {"action_schema", describe_action_schema(ctx.domain)},
                     {"world", describe_world(ctx.domain, world, npc)},
                     {"feedback", ""}};
    req.temperature = generation_temperature;
    req.tag = tag_for(ctx, "npc.i" + std::to_string(interlude_index) + "." + npc);

    std::function<std::optional<ActionInstance>(const std::string&)> parse =
        [&](const std::string& raw) -> std::optional<ActionInstance> {
        auto doc = extract_json(raw);
        if (!doc) {
            std::string trimmed = raw;
            std::erase_if(trimmed, [](unsigned char c) { return std::isspace(c) || c == '"' || c == '.'; });
            std::transform(trimmed.begin(), trimmed.end(), trimmed.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (trimmed == "pass") return std::nullopt;
            throw ParseError("answer is not JSON");
        }
        if (doc->is_array() && doc->size() == 1) doc = doc->front();
        if (!doc->is_object()) throw ParseError("expected a JSON object");
        if (json_text(*doc, "action") == "pass" || (doc->contains("action") && (*doc)["action"].is_null()))
            return std::nullopt;
        auto a = action_from_entry(*doc, &npc);
        if (auto v = is_executable(ctx.domain, world, a); !v)
            throw ValidationError("action", call_text(ctx.domain, a) + " cannot be executed: " + v.reason);
        return a;
    };

    NpcTurn turn;
    try {
        turn.action = complete_parsed(ctx.provider, req, parse);
    } catch (const ProviderError& e) {
        turn.warnings.push_back("npc " + npc + " passes: " + e.what());
    }
    return turn;
}

} // namespace loom
