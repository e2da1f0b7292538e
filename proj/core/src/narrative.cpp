#include "loom/narrative.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "loom/error.hpp"
#include "loom/llm.hpp"

namespace loom {

using nlohmann::json;

std::string_view to_string(AbstractionLevel level) {
    switch (level) {
    case AbstractionLevel::beat: return "beat";
    case AbstractionLevel::scene: return "scene";
    case AbstractionLevel::sequence: return "sequence";
    case AbstractionLevel::act: return "act";
    case AbstractionLevel::story: return "story";
    }
    return "act";
}

AbstractionLevel abstraction_level_from_string(std::string_view text) {
    for (auto level : all_levels)
        if (to_string(level) == text) return level;
    throw ValidationError("level", "unknown abstraction level '" + std::string(text) + "'");
}

void validate_outline(const Outline& outline) {
    if (outline.events.empty()) throw ValidationError("outline.events", "empty");
    for (std::size_t i = 0; i < outline.events.size(); ++i) {
        const auto& t = outline.events[i].text;
        if (std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }))
            throw ValidationError("outline.events[" + std::to_string(i) + "]", "empty text");
    }
}

json outline_to_json(const Outline& o) {
    json events = json::array();
    for (const auto& e : o.events) events.push_back(e.text);
    json doc{{"events", std::move(events)}, {"level", std::string(to_string(o.level))}, {"moral", o.moral}};
    if (o.user_spec) doc["user_spec"] = *o.user_spec;
    return doc;
}

Outline outline_from_json(const json& doc) {
    try {
        Outline o;
        for (const auto& e : doc.at("events")) {
            // Accept both plain strings and {"text": ...} objects.
            o.events.push_back({e.is_string() ? e.get<std::string>() : e.at("text").get<std::string>()});
        }
        o.level = abstraction_level_from_string(doc.value("level", "act"));
        o.moral = doc.value("moral", "");
        if (doc.contains("user_spec") && doc["user_spec"].is_string())
            o.user_spec = doc["user_spec"].get<std::string>();
        return o;
    } catch (const json::exception& e) {
        throw ParseError(std::string("outline document: ") + e.what());
    }
}

std::string_view to_string(PlayerType type) {
    switch (type) {
    case PlayerType::positive: return "positive";
    case PlayerType::negative: return "negative";
    case PlayerType::roleplayer: return "roleplayer";
    case PlayerType::human: return "human";
    }
    return "human";
}

PlayerType player_type_from_string(std::string_view text) {
    if (text == "positive") return PlayerType::positive;
    if (text == "negative") return PlayerType::negative;
    if (text == "roleplayer") return PlayerType::roleplayer;
    if (text == "human") return PlayerType::human;
    throw ValidationError("player_type", "unknown player type '" + std::string(text) + "'");
}

json variant_to_json(const Variant& v) {
    json progression = json::array();
    for (const auto& p : v.progression)
        progression.push_back(
            {{"stage", p.stage}, {"intent_distance", p.intent_distance}, {"emergence_distance", p.emergence_distance}});
    return {{"id", v.id},
            {"plot", plot_to_json(v.plot)},
            {"player_type", std::string(to_string(v.player_type))},
            {"intent_distance", v.intent_distance},
            {"emergence_distance", v.emergence_distance},
            {"progression", std::move(progression)},
            {"rejected", v.rejected},
            {"warnings", v.warnings}};
}

Variant variant_from_json(const json& doc) {
    try {
        Variant v;
        v.id = doc.at("id").get<std::string>();
        v.plot = plot_from_json(doc.at("plot"));
        v.player_type = player_type_from_string(doc.value("player_type", "human"));
        v.intent_distance = doc.value("intent_distance", 0.0);
        v.emergence_distance = doc.value("emergence_distance", 0.0);
        for (const auto& p : doc.value("progression", json::array()))
            v.progression.push_back({p.at("stage").get<double>(), p.at("intent_distance").get<double>(),
                                     p.at("emergence_distance").get<double>()});
        v.rejected = doc.value("rejected", false);
        v.warnings = doc.value("warnings", std::vector<std::string>{});
        return v;
    } catch (const json::exception& e) {
        throw ParseError(std::string("variant document: ") + e.what());
    }
}

const Variant* NarrativeSpace::find_variant(std::string_view id) const {
    for (const auto& v : variants)
        if (v.id == id) return &v;
    return nullptr;
}

const Variant& NarrativeSpace::pivot_variant() const {
    if (const auto* v = find_variant(pivot)) return *v;
    throw NotFoundError("space '" + id + "' has no pivot variant '" + pivot + "'");
}

std::vector<const Variant*> NarrativeSpace::active_variants() const {
    std::vector<const Variant*> out;
    for (const auto& v : variants)
        if (!v.rejected) out.push_back(&v);
    return out;
}

void check_space(const NarrativeSpace& space) {
    std::set<std::string> ids;
    for (const auto& v : space.variants)
        if (!ids.insert(v.id).second) throw ValidationError("variants", "duplicate id '" + v.id + "'");
    const auto* pivot = space.find_variant(space.pivot);
    if (!pivot) throw ValidationError("pivot", "unknown variant '" + space.pivot + "'");
    if (pivot->rejected) throw ValidationError("pivot", "variant '" + space.pivot + "' is rejected");
    if (space.outline) validate_outline(*space.outline);
}

namespace {

Variant& variant_ref(NarrativeSpace& space, std::string_view id) {
    for (auto& v : space.variants)
        if (v.id == id) return v;
    throw NotFoundError("unknown variant '" + std::string(id) + "'");
}

} // namespace

NarrativeSpace set_pivot(NarrativeSpace space, std::string_view variant_id) {
    const auto& v = variant_ref(space, variant_id);
    if (v.rejected) throw PreconditionError("variant '" + v.id + "' is rejected and cannot be the pivot");
    space.pivot = v.id;
    return space;
}

NarrativeSpace reject_variant(NarrativeSpace space, std::string_view variant_id) {
    auto& v = variant_ref(space, variant_id);
    if (v.id == space.pivot) throw PreconditionError("pivot cannot be rejected");
    v.rejected = true;
    return space;
}

NarrativeSpace restore_variant(NarrativeSpace space, std::string_view variant_id) {
    variant_ref(space, variant_id).rejected = false;
    return space;
}

json space_to_json(const NarrativeSpace& s) {
    json variants = json::array();
    for (const auto& v : s.variants) variants.push_back(variant_to_json(v));
    json placement = json::object();
    for (const auto& [c, l] : s.placement) placement[c] = l;
    return {{"id", s.id},
            {"domain_ref", s.domain_ref},
            {"pivot", s.pivot},
            {"outline", s.outline ? outline_to_json(*s.outline) : json(nullptr)},
            {"variants", std::move(variants)},
            {"moral", s.moral},
            {"player_character", s.player_character},
            {"placement", std::move(placement)}};
}

NarrativeSpace space_from_json(const json& doc) {
    try {
        NarrativeSpace s;
        s.id = doc.at("id").get<std::string>();
        s.domain_ref = doc.value("domain_ref", "");
        s.pivot = doc.at("pivot").get<std::string>();
        if (doc.contains("outline") && !doc["outline"].is_null()) s.outline = outline_from_json(doc["outline"]);
        for (const auto& v : doc.at("variants")) s.variants.push_back(variant_from_json(v));
        s.moral = doc.value("moral", "");
        s.player_character = doc.value("player_character", "");
        for (const auto& [c, l] : doc.value("placement", json::object()).items()) s.placement[c] = l.get<std::string>();
        return s;
    } catch (const json::exception& e) {
        throw ParseError(std::string("narrative space document: ") + e.what());
    }
}

PivotExtraction extract_pivot(std::string_view narrative_text, const StoryDomain& domain, Provider& provider,
                              std::string variant_id) {
    if (std::all_of(narrative_text.begin(), narrative_text.end(), [](unsigned char c) { return std::isspace(c); }))
        throw ValidationError("narrative_text", "no events");

    CompletionRequest req;
    req.template_id = "pivot_extract";
    req.tag = "pivot.extract";
    req.temperature = judging_temperature;
    req.max_tokens = 2048;
    req.variables = {{"characters", describe_characters(domain)},
                     {"locations", describe_locations(domain)},
                     {"action_schema", describe_action_schema(domain)},
                     {"narrative", std::string(narrative_text)}};

    StructuredSchema schema{"a JSON array of {\"subject\", \"action\", \"location\", \"thought\"} objects",
                            [](const json& doc) {
                                if (!doc.is_array()) throw ParseError("expected a JSON array of events");
                                for (const auto& e : doc)
                                    if (!e.is_object() || !e.contains("subject") || !e.contains("action"))
                                        throw ParseError("every event needs \"subject\" and \"action\"");
                            }};
    const auto events = complete_structured(provider, req, schema);

    PivotExtraction out;
    out.pivot.id = std::move(variant_id);
    out.pivot.player_type = PlayerType::human;
    PlotSegment segment;
    segment.event_index = 0;

    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        const auto prefix = "event " + std::to_string(i) + " skipped: ";
        ActionInstance action;
        try {
            action = parse_action_call(e.at("subject").get<std::string>(), e.at("action").get<std::string>());
            if (auto args = e.find("arguments"); args != e.end() && args->is_array() && action.arguments.empty())
                action.arguments = args->get<std::vector<std::string>>();
        } catch (const std::exception& ex) {
            out.warnings.push_back(prefix + ex.what());
            continue;
        }
        if (auto v = check_schema(domain, action); !v) {
            out.warnings.push_back(prefix + v.reason);
            continue;
        }
        if (e.contains("thought") && e["thought"].is_string() && !e["thought"].get<std::string>().empty())
            action.thought = e["thought"].get<std::string>();

        EventRecord r;
        r.action = std::move(action);
        r.turn = static_cast<int>(segment.records.size()) + 1;
        if (e.contains("location") && e["location"].is_string()) {
            const auto where = e["location"].get<std::string>();
            if (domain.find_location(where)) r.location = where;
            else if (!where.empty())
                out.warnings.push_back("event " + std::to_string(i) + ": unknown location '" + where + "' dropped");
        }
        segment.records.push_back(std::move(r));
    }

    if (segment.records.empty()) throw ValidationError("narrative_text", "no events");
    out.pivot.plot.segments.push_back(std::move(segment));
    out.pivot.warnings = out.warnings;
    return out;
}

} // namespace loom
