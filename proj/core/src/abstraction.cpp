#include "loom/abstraction.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "loom/error.hpp"
#include "loom/llm.hpp"

namespace loom {

using nlohmann::json;

namespace {

std::string level_definition(AbstractionLevel level) {
    switch (level) {
    case AbstractionLevel::beat: return "restates the concrete events almost verbatim";
    case AbstractionLevel::scene: return "specific characters, actions and objects in one continuous place";
    case AbstractionLevel::sequence: return "roles and situations building to a change, fewer specific names";
    case AbstractionLevel::act: return "only the dramatic function of each turning point, in general terms";
    case AbstractionLevel::story: return "a one-line overview of the whole plot";
    }
    return "";
}

std::string numbered(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) out += std::to_string(i) + ". " + lines[i] + "\n";
    return out;
}

std::vector<std::string> event_texts(const Outline& o) {
    std::vector<std::string> out;
    for (const auto& e : o.events) out.push_back(e.text);
    return out;
}

std::vector<std::string> string_list(const json& doc) {
    std::vector<std::string> out;
    for (const auto& item : doc) {
        if (!item.is_string()) throw ParseError("expected a list of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// A level entry is either one outline (array of strings) or several
// candidate outlines (array of arrays).
std::vector<std::vector<std::string>> level_candidates(const json& entry) {
    std::vector<std::vector<std::string>> out;
    if (!entry.is_array()) throw ParseError("each level must map to an array");
    if (!entry.empty() && entry.front().is_array()) {
        for (const auto& cand : entry) out.push_back(string_list(cand));
    } else if (!entry.empty() && entry.front().is_object()) {
        for (const auto& cand : entry) out.push_back(string_list(cand.at("events")));
    } else {
        out.push_back(string_list(entry));
    }
    std::erase_if(out, [](const auto& events) {
        return events.empty() || std::any_of(events.begin(), events.end(), [](const auto& e) { return blank(e); });
    });
    return out;
}

} // namespace

OutlineResult texts_to_outline(const std::vector<std::string>& instance_texts, AbstractionLevel level,
                               const OutlineOptions& options, const StoryDomain* domain, Provider& provider,
                               const std::string& tag_prefix) {
    if (instance_texts.empty()) throw ValidationError("instances", "at least one narrative instance is required");

    std::string instances;
    for (std::size_t i = 0; i < instance_texts.size(); ++i)
        instances += "Instance " + std::to_string(i + 1) + ":\n" + instance_texts[i] + "\n";
    const auto characters = domain ? describe_characters(*domain) : std::string("(any)\n");
    const auto moral = options.moral.empty() ? std::string("(not stated)") : options.moral;

    // (1) creative variations
    std::string variations = "(none)\n";
    if (options.variations > 0) {
        CompletionRequest req;
        req.template_id = "outline_variations";
        req.tag = tag_prefix + ".variations";
        req.variables = {{"characters", characters},
                         {"action_schema", domain ? describe_action_schema(*domain) : std::string("(any)\n")},
                         {"instances", instances},
                         {"moral", moral},
                         {"count", std::to_string(options.variations)}};
        const auto doc = complete_structured(provider, req,
                                             {"a JSON array of strings", [](const json& d) {
                                                  if (!d.is_array()) throw ParseError("expected a JSON array");
                                                  string_list(d);
                                              }});
        variations = numbered(string_list(doc));
    }

    // (2) one outline per ladder level
    CompletionRequest req;
    req.template_id = "outline_levels";
    req.tag = tag_prefix + ".levels";
    req.max_tokens = 2048;
    req.variables = {{"characters", characters}, {"instances", instances}, {"variations", variations}, {"moral", moral}};
    const auto key = std::string(to_string(level));
    const auto levels = complete_structured(
        provider, req, {"a JSON object with beat/scene/sequence/act/story arrays", [&](const json& d) {
                            if (!d.is_object()) throw ParseError("expected a JSON object keyed by level");
                            if (!d.contains(key)) throw ValidationError(key, "missing");
                            if (level_candidates(d.at(key)).empty()) throw ValidationError(key, "empty outline");
                        }});

    OutlineResult result;
    for (auto l : all_levels) {
        const auto name = std::string(to_string(l));
        if (!levels.contains(name)) continue;
        std::vector<std::vector<std::string>> cands;
        try {
            cands = level_candidates(levels.at(name));
        } catch (const std::exception&) {
            continue;
        }
        for (std::size_t c = 0; c < cands.size(); ++c) {
            Outline o;
            o.level = l;
            o.moral = options.moral;
            for (auto& text : cands[c]) o.events.push_back({std::move(text)});
            if (c == 0) result.candidates.push_back(o);
            if (l == level) (c == 0 ? result.outline : result.alternates.emplace_back()) = std::move(o);
        }
    }

    // (3) tailor to the user's specification
    if (options.user_spec && !blank(*options.user_spec)) {
        CompletionRequest tailor;
        tailor.template_id = "outline_tailor";
        tailor.tag = tag_prefix + ".tailor";
        tailor.variables = {{"level", key},
                            {"level_definition", level_definition(level)},
                            {"outline", numbered(event_texts(result.outline))},
                            {"user_spec", *options.user_spec}};
        const auto doc = complete_structured(provider, tailor,
                                             {"a JSON object {\"events\": [...]}", [](const json& d) {
                                                  if (!d.is_object() || !d.contains("events"))
                                                      throw ParseError("expected {\"events\": [...]}");
                                                  auto events = string_list(d.at("events"));
                                                  if (events.empty()) throw ValidationError("events", "empty");
                                                  for (const auto& e : events)
                                                      if (blank(e)) throw ValidationError("events", "blank event");
                                              }});
        result.outline.events.clear();
        for (auto& text : string_list(doc.at("events"))) result.outline.events.push_back({std::move(text)});
        result.outline.user_spec = options.user_spec;
    }

    result.outline.level = level;
    result.outline.moral = options.moral;
    validate_outline(result.outline);
    return result;
}

OutlineResult instances_to_outline(const std::vector<Variant>& instances, AbstractionLevel level,
                                   const OutlineOptions& options, const StoryDomain& domain, Provider& provider) {
    std::vector<std::string> texts;
    for (const auto& v : instances)
        if (!v.rejected) texts.push_back(render_plot_text(v.plot));
    if (texts.empty()) throw ValidationError("instances", "no non-rejected instance");
    return texts_to_outline(texts, level, options, &domain, provider);
}

std::string_view to_string(AbstractionDirection direction) {
    return direction == AbstractionDirection::more_abstract ? "more_abstract" : "more_concrete";
}

AbstractionDirection abstraction_direction_from_string(std::string_view text) {
    if (text == "more_abstract") return AbstractionDirection::more_abstract;
    if (text == "more_concrete") return AbstractionDirection::more_concrete;
    throw ValidationError("direction", "expected more_abstract or more_concrete, got '" + std::string(text) + "'");
}

namespace {

bool outline_contains(const Outline& o, std::string_view snippet) {
    return std::any_of(o.events.begin(), o.events.end(),
                       [&](const auto& e) { return e.text.find(snippet) != std::string::npos; });
}

} // namespace

std::vector<std::string> abstraction_suggest(std::string_view snippet, AbstractionDirection direction,
                                             const Outline& context, Provider& provider, int count) {
    if (snippet.empty() || !outline_contains(context, snippet))
        throw NotFoundError("snippet '" + std::string(snippet) + "' not found in outline");
    if (count < 1) throw ValidationError("count", "must be at least 1");

    CompletionRequest req;
    req.template_id = "abstraction_suggest";
    req.tag = "suggest." + std::string(to_string(direction));
    req.variables = {{"outline", numbered(event_texts(context))},
                     {"snippet", std::string(snippet)},
                     {"direction_text", direction == AbstractionDirection::more_abstract
                                            ? "make it MORE ABSTRACT (a superordinate term)"
                                            : "make it MORE CONCRETE (a subordinate term consistent with the story world)"},
                     {"count", std::to_string(count)}};

    auto usable = [&](const json& d) {
        std::vector<std::string> out;
        for (auto& s : string_list(d))
            if (!blank(s) && s != snippet && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
        return out;
    };
    const auto doc = complete_structured(provider, req, {"a JSON array of strings", [&](const json& d) {
                                                             if (!d.is_array()) throw ParseError("expected a JSON array");
                                                             if (usable(d).empty())
                                                                 throw ValidationError("suggestions", "none usable");
                                                         }});
    auto out = usable(doc);
    if (out.size() > static_cast<std::size_t>(count)) out.resize(static_cast<std::size_t>(count));
    return out;
}

Outline apply_suggestion(Outline outline, std::string_view snippet, std::string_view replacement) {
    for (auto& e : outline.events) {
        const auto pos = e.text.find(snippet);
        if (snippet.empty() || pos == std::string::npos) continue;
        e.text.replace(pos, snippet.size(), replacement);
        validate_outline(outline);
        return outline;
    }
    throw NotFoundError("snippet '" + std::string(snippet) + "' not found in outline");
}

OutlineMapping normalize_mapping(std::size_t event_count, std::size_t entry_count,
                                 const std::vector<std::pair<int, EntryRange>>& proposed) {
    std::map<int, EntryRange> by_event;
    for (const auto& [event, range] : proposed)
        if (event >= 0 && static_cast<std::size_t>(event) < event_count) by_event.try_emplace(event, range);

    OutlineMapping m;
    const int n = static_cast<int>(entry_count);
    int cursor = 0;
    std::vector<bool> covered(entry_count, false);
    for (int e = 0; e < static_cast<int>(event_count); ++e) {
        auto it = by_event.find(e);
        if (it == by_event.end()) {
            m.ranges.push_back({cursor, cursor});
            m.warnings.push_back("event " + std::to_string(e) + " has no supporting entries");
            continue;
        }
        EntryRange r = it->second;
        EntryRange fixed{std::clamp(r.start, cursor, n), 0};
        fixed.end = std::clamp(r.end, fixed.start, n);
        if (!(fixed == r) && !r.empty())
            m.warnings.push_back("event " + std::to_string(e) + " range adjusted to stay ordered and disjoint");
        if (fixed.empty()) {
            fixed = {cursor, cursor};
            m.warnings.push_back("event " + std::to_string(e) + " has no supporting entries");
        } else {
            cursor = fixed.end;
            for (int i = fixed.start; i < fixed.end; ++i) covered[static_cast<std::size_t>(i)] = true;
        }
        m.ranges.push_back(fixed);
    }
    for (int i = 0; i < n; ++i)
        if (!covered[static_cast<std::size_t>(i)]) m.uncovered_entries.push_back(i);
    return m;
}

OutlineMapping map_outline_to_pivot(const Outline& outline, const Variant& pivot, Provider& provider) {
    validate_outline(outline);
    const auto entries = pivot.plot.ordered_records();
    if (entries.empty()) throw ValidationError("pivot", "no entries");

    std::vector<std::string> lines;
    for (const auto& r : entries) lines.push_back(r.action.subject + " " + format_action_call(r.action));

    CompletionRequest req;
    req.template_id = "outline_mapping";
    req.tag = "outline.mapping";
    req.temperature = judging_temperature;
    req.variables = {{"outline", numbered(event_texts(outline))}, {"pivot", numbered(lines)}};
    const auto doc = complete_structured(provider, req, {"a JSON array of {event, start, end}", [](const json& d) {
                                                             if (!d.is_array()) throw ParseError("expected a JSON array");
                                                             for (const auto& r : d)
                                                                 if (!r.is_object() || !r.contains("event") ||
                                                                     !r.contains("start") || !r.contains("end"))
                                                                     throw ParseError("each range needs event, start, end");
                                                         }});
    std::vector<std::pair<int, EntryRange>> proposed;
    for (const auto& r : doc)
        proposed.push_back({r.at("event").get<int>(), {r.at("start").get<int>(), r.at("end").get<int>()}});
    return normalize_mapping(outline.events.size(), entries.size(), proposed);
}

} // namespace loom
