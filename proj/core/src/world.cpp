#include "loom/world.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "loom/error.hpp"

namespace loom {

using nlohmann::json;

std::string_view to_string(Origin origin) {
    switch (origin) {
    case Origin::plot_execution: return "plot-execution";
    case Origin::player: return "player";
    case Origin::npc_simulation: return "npc-simulation";
    }
    return "plot-execution";
}

Origin origin_from_string(std::string_view text) {
    if (text == "plot-execution") return Origin::plot_execution;
    if (text == "player") return Origin::player;
    if (text == "npc-simulation") return Origin::npc_simulation;
    throw ParseError("unknown origin '" + std::string(text) + "'");
}

WorldState init_world(const StoryDomain& domain, const Placement& placement) {
    for (const auto& [who, where] : placement) {
        if (!domain.find_character(who))
            throw ValidationError("placement." + who, "unknown character '" + who + "'");
        if (!domain.find_location(where))
            throw ValidationError("placement." + who, "unknown location '" + where + "'");
    }
    WorldState w;
    for (const auto& c : domain.characters) {
        auto it = placement.find(c.id);
        if (it == placement.end())
            throw ValidationError("placement." + c.id, "missing character '" + c.id + "'");
        w.positions[c.id] = it->second;
        w.alive[c.id] = true;
        w.health[c.id] = default_health;
        w.in_danger[c.id] = false;
        w.memories[c.id] = {};
        for (const auto& other : domain.characters)
            if (other.id != c.id) w.relationships[{c.id, other.id}] = 0;
    }
    return w;
}

WorldState init_world(const StoryDomain& domain) {
    Placement placement;
    for (const auto& c : domain.characters) placement[c.id] = domain.start_location_of(c);
    return init_world(domain, placement);
}

Verdict check_schema(const StoryDomain& domain, const ActionInstance& a) {
    const auto* spec = domain.find_action(a.action);
    if (!spec) return Verdict::no("unknown action '" + a.action + "'");
    if (!domain.find_character(a.subject)) return Verdict::no("unknown character '" + a.subject + "'");
    if (a.arguments.size() != spec->parameters.size())
        return Verdict::no(a.action + " expects " + std::to_string(spec->parameters.size()) +
                           " argument(s), got " + std::to_string(a.arguments.size()));
    for (std::size_t i = 0; i < a.arguments.size(); ++i) {
        const auto& arg = a.arguments[i];
        const auto& param = spec->parameters[i];
        if (arg.empty()) return Verdict::no("empty argument '" + param.role + "'");
        if (param.kind == ParamKind::character && !domain.find_character(arg))
            return Verdict::no("unknown character '" + arg + "'");
        if (param.kind == ParamKind::location && !domain.find_location(arg))
            return Verdict::no("unknown location '" + arg + "'");
    }
    return Verdict::yes();
}

namespace {

// Records every change it makes so the caller gets a complete delta list.
class Mutation {
public:
    Mutation(WorldState& world, std::vector<Delta>& deltas) : w_(world), deltas_(deltas) {}

    void position(const CharacterId& c, const LocationId& l) {
        record("positions." + c, w_.positions[c], l);
        w_.positions[c] = l;
    }
    void alive(const CharacterId& c, bool v) {
        record("alive." + c, w_.alive[c], v);
        w_.alive[c] = v;
    }
    void health(const CharacterId& c, int v) {
        record("health." + c, w_.health[c], v);
        w_.health[c] = v;
    }
    void in_danger(const CharacterId& c, bool v) {
        record("in_danger." + c, w_.in_danger[c], v);
        w_.in_danger[c] = v;
    }
    void relationship(const CharacterId& a, const CharacterId& b, int change) {
        // Only feelings between distinct characters are tracked.
        if (change == 0 || a == b) return;
        int& score = w_.relationships[{a, b}];
        record("relationships." + a + "." + b, score, score + change);
        score += change;
    }
    void remember(const CharacterId& c, const std::string& entry) {
        auto& list = w_.memories[c];
        json before = list;
        list.push_back(entry);
        deltas_.push_back({"memories." + c, std::move(before), list});
    }
    void tick() {
        deltas_.push_back({"turn", w_.turn, w_.turn + 1});
        ++w_.turn;
    }

private:
    template <typename T>
    void record(std::string variable, const T& before, const T& after) {
        if (before == after) return;
        deltas_.push_back({std::move(variable), before, after});
    }

    WorldState& w_;
    std::vector<Delta>& deltas_;
};

struct Context {
    const ActionInstance& action;
    const WorldState& pre;
    const LocationId& where;

    const std::string& arg(std::size_t i) const { return action.arguments.at(i); }
};

struct Semantics {
    std::function<std::optional<std::string>(const Context&)> precondition;
    std::function<void(Mutation&, const Context&)> apply;
};

std::string quoted(const std::string& text) { return "\"" + text + "\""; }

const std::map<std::string, Semantics, std::less<>>& semantics_table() {
    static const std::map<std::string, Semantics, std::less<>> table = {
        {"moveTo",
         {nullptr,
          [](Mutation& m, const Context& c) {
              m.position(c.action.subject, c.arg(0));
              m.remember(c.action.subject,
                         c.action.subject + " moved from " + c.where + " to " + c.arg(0));
          }}},
        {"speakTo",
         {nullptr,
          [](Mutation& m, const Context& c) {
              const auto line = c.action.subject + " said to " + c.arg(0) + " at " + c.where +
                                ": " + quoted(c.arg(1));
              m.remember(c.action.subject, line);
              m.remember(c.arg(0), line);
          }}},
        {"attack",
         {nullptr,
          [](Mutation& m, const Context& c) {
              const auto& target = c.arg(0);
              const int hp = std::max(0, c.pre.health.at(target) - 1);
              m.health(target, hp);
              m.in_danger(target, true);
              m.relationship(target, c.action.subject, -1);
              auto line = c.action.subject + " attacked " + target + " at " + c.where;
              if (hp == 0) {
                  m.alive(target, false);
                  line += "; " + target + " died";
              }
              m.remember(c.action.subject, line);
              m.remember(target, line);
          }}},
        {"kill",
         {nullptr,
          [](Mutation& m, const Context& c) {
              const auto& target = c.arg(0);
              m.health(target, 0);
              m.alive(target, false);
              const auto line = c.action.subject + " killed " + target + " at " + c.where;
              m.remember(c.action.subject, line);
              m.remember(target, line);
          }}},
        {"save",
         {[](const Context& c) -> std::optional<std::string> {
              if (!c.pre.in_danger.at(c.arg(0))) return "target not in danger";
              return std::nullopt;
          },
          [](Mutation& m, const Context& c) {
              const auto& target = c.arg(0);
              m.in_danger(target, false);
              m.relationship(target, c.action.subject, 1);
              const auto line = c.action.subject + " saved " + target + " at " + c.where;
              m.remember(c.action.subject, line);
              m.remember(target, line);
          }}},
        {"think",
         {nullptr,
          [](Mutation& m, const Context& c) {
              m.remember(c.action.subject, c.action.subject + " thought: " + quoted(c.arg(0)));
          }}},
    };
    return table;
}

// Actions a domain declares without registered semantics only leave a
// memory trace on the actor and every character argument.
void apply_generic(Mutation& m, const Context& c, const ActionSpec& spec) {
    const auto line = c.action.subject + " did " + format_action_call(c.action, &spec) + " at " + c.where;
    m.remember(c.action.subject, line);
    for (std::size_t i = 0; i < spec.parameters.size(); ++i)
        if (spec.parameters[i].kind == ParamKind::character && c.arg(i) != c.action.subject)
            m.remember(c.arg(i), line);
}

} // namespace

Verdict is_executable(const StoryDomain& domain, const WorldState& world, const ActionInstance& a) {
    if (auto v = check_schema(domain, a); !v) return v;
    const auto& spec = *domain.find_action(a.action);

    auto alive = [&](const CharacterId& c) {
        auto it = world.alive.find(c);
        return it != world.alive.end() && it->second;
    };
    if (!alive(a.subject)) return Verdict::no("subject not alive");

    const auto& here = world.positions.at(a.subject);
    for (std::size_t i = 0; i < spec.parameters.size(); ++i) {
        if (spec.parameters[i].kind != ParamKind::character) continue;
        const auto& target = a.arguments[i];
        if (!alive(target)) return Verdict::no("target not alive");
        if (spec.requires_colocation && world.positions.at(target) != here)
            return Verdict::no("not colocated");
    }

    const auto& table = semantics_table();
    if (auto it = table.find(a.action); it != table.end() && it->second.precondition) {
        if (auto why = it->second.precondition(Context{a, world, here})) return Verdict::no(*why);
    }
    return Verdict::yes();
}

Transition execute(const StoryDomain& domain, const WorldState& world, const ActionInstance& a,
                   Origin origin) {
    if (auto v = is_executable(domain, world, a); !v) throw PreconditionError(v.reason);

    Transition t{world, {}};
    t.record.action = a;
    t.record.origin = origin;
    t.record.location = world.positions.at(a.subject);

    Mutation m(t.world, t.record.deltas);
    const Context ctx{a, world, t.record.location};
    const auto& table = semantics_table();
    if (auto it = table.find(a.action); it != table.end())
        it->second.apply(m, ctx);
    else
        apply_generic(m, ctx, *domain.find_action(a.action));
    m.tick();
    t.record.turn = t.world.turn;
    return t;
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(path);
    while (std::getline(in, part, '.')) parts.push_back(part);
    return parts;
}

template <typename Map, typename Key>
void replay(Map& map, const Key& key, const Delta& d) {
    using Value = typename Map::mapped_type;
    auto it = map.find(key);
    if (it == map.end() || json(it->second) != d.before)
        throw PreconditionError("delta '" + d.variable + "' does not match the current state");
    it->second = d.after.template get<Value>();
}

} // namespace

WorldState apply_deltas(WorldState w, const std::vector<Delta>& deltas) {
    for (const auto& d : deltas) {
        const auto parts = split_path(d.variable);
        const auto& head = parts.at(0);
        if (head == "turn" && parts.size() == 1) {
            if (json(w.turn) != d.before)
                throw PreconditionError("delta 'turn' does not match the current state");
            w.turn = d.after.get<int>();
        } else if (head == "positions" && parts.size() == 2) {
            replay(w.positions, parts[1], d);
        } else if (head == "alive" && parts.size() == 2) {
            replay(w.alive, parts[1], d);
        } else if (head == "health" && parts.size() == 2) {
            replay(w.health, parts[1], d);
        } else if (head == "in_danger" && parts.size() == 2) {
            replay(w.in_danger, parts[1], d);
        } else if (head == "memories" && parts.size() == 2) {
            replay(w.memories, parts[1], d);
        } else if (head == "relationships" && parts.size() == 3) {
            replay(w.relationships, std::pair{parts[1], parts[2]}, d);
        } else {
            throw ParseError("unknown state variable '" + d.variable + "'");
        }
    }
    return w;
}

json world_to_json(const WorldState& w) {
    json chars = json::object();
    for (const auto& [c, where] : w.positions) {
        chars[c] = {{"location", where},
                    {"alive", w.alive.at(c)},
                    {"health", w.health.at(c)},
                    {"in_danger", w.in_danger.at(c)},
                    {"memories", w.memories.at(c)}};
    }
    json rel = json::object();
    for (const auto& [pair, score] : w.relationships) rel[pair.first][pair.second] = score;
    return {{"turn", w.turn}, {"characters", std::move(chars)}, {"relationships", std::move(rel)}};
}

WorldState world_from_json(const json& doc) {
    try {
        WorldState w;
        w.turn = doc.at("turn").get<int>();
        for (const auto& [c, v] : doc.at("characters").items()) {
            w.positions[c] = v.at("location").get<std::string>();
            w.alive[c] = v.at("alive").get<bool>();
            w.health[c] = v.at("health").get<int>();
            w.in_danger[c] = v.at("in_danger").get<bool>();
            w.memories[c] = v.at("memories").get<std::vector<std::string>>();
        }
        for (const auto& [a, row] : doc.at("relationships").items())
            for (const auto& [b, score] : row.items()) w.relationships[{a, b}] = score.get<int>();
        return w;
    } catch (const json::exception& e) {
        throw ParseError(std::string("world state document: ") + e.what());
    }
}

std::string canonical_world(const WorldState& world) { return world_to_json(world).dump(); }

json action_to_json(const ActionInstance& a) {
    json doc{{"subject", a.subject}, {"action", a.action}, {"arguments", a.arguments}};
    if (a.thought) doc["thought"] = *a.thought;
    return doc;
}

ActionInstance action_from_json(const json& doc) {
    try {
        ActionInstance a;
        a.subject = doc.at("subject").get<std::string>();
        a.action = doc.at("action").get<std::string>();
        a.arguments = doc.value("arguments", std::vector<std::string>{});
        if (doc.contains("thought") && doc["thought"].is_string())
            a.thought = doc["thought"].get<std::string>();
        return a;
    } catch (const json::exception& e) {
        throw ParseError(std::string("action document: ") + e.what());
    }
}

json record_to_json(const EventRecord& r) {
    json deltas = json::array();
    for (const auto& d : r.deltas)
        deltas.push_back({{"variable", d.variable}, {"before", d.before}, {"after", d.after}});
    json doc = action_to_json(r.action);
    doc["turn"] = r.turn;
    doc["origin"] = std::string(to_string(r.origin));
    doc["location"] = r.location;
    doc["deltas"] = std::move(deltas);
    return doc;
}

EventRecord record_from_json(const json& doc) {
    try {
        EventRecord r;
        r.action = action_from_json(doc);
        r.turn = doc.at("turn").get<int>();
        r.origin = origin_from_string(doc.at("origin").get<std::string>());
        r.location = doc.value("location", "");
        for (const auto& d : doc.value("deltas", json::array()))
            r.deltas.push_back({d.at("variable").get<std::string>(), d.at("before"), d.at("after")});
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("event record document: ") + e.what());
    }
}

std::string describe_world(const StoryDomain& domain, const WorldState& w,
                           std::optional<CharacterId> viewer) {
    constexpr std::size_t recent_memories = 8;
    std::ostringstream out;
    for (const auto& c : domain.characters) {
        out << "- " << c.id << ": ";
        if (!w.alive.at(c.id)) {
            out << "DEAD\n";
            continue;
        }
        out << "at " << w.positions.at(c.id) << ", health " << w.health.at(c.id) << "/"
            << default_health;
        if (w.in_danger.at(c.id)) out << ", in danger";
        out << "\n";
    }

    bool any_relationship = false;
    for (const auto& [pair, score] : w.relationships) {
        if (score == 0) continue;
        if (!any_relationship) out << "Relationships:\n";
        any_relationship = true;
        out << "- " << pair.first << " -> " << pair.second << ": " << score << "\n";
    }

    for (const auto& c : domain.characters) {
        if (viewer && *viewer != c.id) continue;
        const auto& mem = w.memories.at(c.id);
        if (mem.empty()) continue;
        out << "Memories of " << c.id << ":\n";
        const auto first = mem.size() > recent_memories ? mem.size() - recent_memories : 0;
        for (auto i = first; i < mem.size(); ++i) out << "  * " << mem[i] << "\n";
    }
    return out.str();
}

SnapshotStore::Token SnapshotStore::snapshot(const WorldState& world) {
    std::lock_guard lock(mu_);
    const auto token = next_++;
    states_.emplace(token, world);
    return token;
}

WorldState SnapshotStore::restore(Token token) const {
    std::lock_guard lock(mu_);
    auto it = states_.find(token);
    if (it == states_.end()) throw NotFoundError("unknown snapshot token " + std::to_string(token));
    return it->second;
}

void SnapshotStore::release(Token token) {
    std::lock_guard lock(mu_);
    states_.erase(token);
}

std::size_t SnapshotStore::size() const {
    std::lock_guard lock(mu_);
    return states_.size();
}

} // namespace loom
