#include "loom/domain.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "loom/error.hpp"

namespace loom {

using nlohmann::json;

std::string_view to_string(ParamKind kind) {
    switch (kind) {
    case ParamKind::character: return "character";
    case ParamKind::location: return "location";
    case ParamKind::free_text: return "free-text";
    }
    return "character";
}

ParamKind param_kind_from_string(std::string_view text) {
    if (text == "character") return ParamKind::character;
    if (text == "location") return ParamKind::location;
    if (text == "free-text") return ParamKind::free_text;
    throw ValidationError("", "unknown parameter kind '" + std::string(text) + "'");
}

const Character* StoryDomain::find_character(std::string_view id) const {
    for (const auto& c : characters)
        if (c.id == id) return &c;
    return nullptr;
}

const Location* StoryDomain::find_location(std::string_view id) const {
    for (const auto& l : locations)
        if (l.id == id) return &l;
    return nullptr;
}

const ActionSpec* StoryDomain::find_action(std::string_view name) const {
    for (const auto& a : actions)
        if (a.name == name) return &a;
    return nullptr;
}

const LocationId& StoryDomain::start_location_of(const Character& c) const {
    return c.start_location.empty() ? locations.front().id : c.start_location;
}

bool is_identifier(std::string_view text) {
    if (text.empty()) return false;
    for (char ch : text) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                        (ch >= '0' && ch <= '9') || ch == '_';
        if (!ok) return false;
    }
    return true;
}

namespace {

std::string indexed(std::string_view list, std::size_t i, std::string_view field = {}) {
    std::string path = std::string(list) + "[" + std::to_string(i) + "]";
    if (!field.empty()) path += "." + std::string(field);
    return path;
}

void check_identifier(const std::string& path, const std::string& id) {
    if (!is_identifier(id))
        throw ValidationError(path, "'" + id + "' is not an identifier");
}

} // namespace

void validate_domain(const StoryDomain& domain) {
    if (domain.characters.empty()) throw ValidationError("characters", "empty");
    if (domain.locations.empty()) throw ValidationError("locations", "empty");
    if (domain.actions.empty()) throw ValidationError("actions", "empty");

    std::set<std::string> seen;
    for (std::size_t i = 0; i < domain.locations.size(); ++i) {
        const auto& l = domain.locations[i];
        check_identifier(indexed("locations", i, "id"), l.id);
        if (!seen.insert(l.id).second)
            throw ValidationError(indexed("locations", i, "id"), "duplicate id '" + l.id + "'");
    }

    seen.clear();
    for (std::size_t i = 0; i < domain.characters.size(); ++i) {
        const auto& c = domain.characters[i];
        check_identifier(indexed("characters", i, "id"), c.id);
        if (!seen.insert(c.id).second)
            throw ValidationError(indexed("characters", i, "id"), "duplicate id '" + c.id + "'");
        if (c.description.empty())
            throw ValidationError(indexed("characters", i, "description"), "empty");
        if (!c.start_location.empty() && !domain.find_location(c.start_location))
            throw ValidationError(indexed("characters", i, "start_location"),
                                  "unknown location '" + c.start_location + "'");
    }

    seen.clear();
    for (std::size_t i = 0; i < domain.actions.size(); ++i) {
        const auto& a = domain.actions[i];
        check_identifier(indexed("actions", i, "name"), a.name);
        if (!seen.insert(a.name).second)
            throw ValidationError(indexed("actions", i, "name"), "duplicate name '" + a.name + "'");
        std::set<std::string> roles;
        for (std::size_t p = 0; p < a.parameters.size(); ++p) {
            const auto path = indexed("actions", i, "") + indexed("parameters", p, "role");
            if (a.parameters[p].role.empty()) throw ValidationError(path, "empty");
            if (!roles.insert(a.parameters[p].role).second)
                throw ValidationError(path, "duplicate role '" + a.parameters[p].role + "' in '" +
                                                a.name + "'");
        }
    }
}

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(path + "." + key, "missing");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError(path + "." + key, "wrong type");
    }
}

template <typename T>
T optional_field(const json& obj, const char* key, const std::string& path, T fallback) {
    if (!obj.contains(key)) return fallback;
    return field<T>(obj, key, path);
}

const json& array_field(const json& doc, const char* key) {
    auto it = doc.find(key);
    if (it == doc.end()) throw ValidationError(key, "missing");
    if (!it->is_array()) throw ValidationError(key, "expected an array");
    return *it;
}

} // namespace

StoryDomain domain_from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("", "domain document must be an object");
    StoryDomain d;
    d.title = optional_field<std::string>(doc, "title", "", "");

    const auto& chars = array_field(doc, "characters");
    for (std::size_t i = 0; i < chars.size(); ++i) {
        const auto path = indexed("characters", i);
        Character c;
        c.id = field<std::string>(chars[i], "id", path);
        c.name = optional_field<std::string>(chars[i], "name", path, c.id);
        c.description = optional_field<std::string>(chars[i], "description", path, "");
        c.player_controllable = optional_field<bool>(chars[i], "player_controllable", path, false);
        c.start_location = optional_field<std::string>(chars[i], "start_location", path, "");
        d.characters.push_back(std::move(c));
    }

    const auto& locs = array_field(doc, "locations");
    for (std::size_t i = 0; i < locs.size(); ++i) {
        const auto path = indexed("locations", i);
        Location l;
        l.id = field<std::string>(locs[i], "id", path);
        l.name = optional_field<std::string>(locs[i], "name", path, l.id);
        d.locations.push_back(std::move(l));
    }

    const auto& acts = array_field(doc, "actions");
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const auto path = indexed("actions", i);
        ActionSpec a;
        a.name = field<std::string>(acts[i], "name", path);
        if (acts[i].contains("parameters")) {
            const auto& params = acts[i]["parameters"];
            if (!params.is_array()) throw ValidationError(path + ".parameters", "expected an array");
            for (std::size_t p = 0; p < params.size(); ++p) {
                const auto ppath = path + "." + indexed("parameters", p);
                ActionParam param;
                param.role = field<std::string>(params[p], "role", ppath);
                const auto kind = field<std::string>(params[p], "kind", ppath);
                try {
                    param.kind = param_kind_from_string(kind);
                } catch (const ValidationError&) {
                    throw ValidationError(ppath + ".kind", "unknown kind '" + kind + "'");
                }
                a.parameters.push_back(std::move(param));
            }
        }
        a.requires_colocation = optional_field<bool>(acts[i], "requires_colocation", path, false);
        a.mutates_world = optional_field<bool>(acts[i], "mutates_world", path, false);
        d.actions.push_back(std::move(a));
    }
    return d;
}

json domain_to_json(const StoryDomain& d) {
    json doc;
    doc["title"] = d.title;
    doc["characters"] = json::array();
    for (const auto& c : d.characters) {
        json cj{{"id", c.id},
                {"name", c.name},
                {"description", c.description},
                {"player_controllable", c.player_controllable}};
        if (!c.start_location.empty()) cj["start_location"] = c.start_location;
        doc["characters"].push_back(std::move(cj));
    }
    doc["locations"] = json::array();
    for (const auto& l : d.locations) doc["locations"].push_back({{"id", l.id}, {"name", l.name}});
    doc["actions"] = json::array();
    for (const auto& a : d.actions) {
        json params = json::array();
        for (const auto& p : a.parameters)
            params.push_back({{"role", p.role}, {"kind", std::string(to_string(p.kind))}});
        doc["actions"].push_back({{"name", a.name},
                                  {"parameters", std::move(params)},
                                  {"requires_colocation", a.requires_colocation},
                                  {"mutates_world", a.mutates_world}});
    }
    return doc;
}

StoryDomain load_domain(std::string_view source) {
    json doc;
    try {
        doc = json::parse(source);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("domain document: ") + e.what());
    }
    auto domain = domain_from_json(doc);
    validate_domain(domain);
    return domain;
}

StoryDomain load_domain_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open domain file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_domain(buf.str());
}

std::string serialize_domain(const StoryDomain& domain) {
    return domain_to_json(domain).dump(2);
}

const ActionSpec& action_signature(const StoryDomain& domain, std::string_view name) {
    if (const auto* spec = domain.find_action(name)) return *spec;
    throw NotFoundError("unknown action '" + std::string(name) + "'");
}

std::string describe_characters(const StoryDomain& domain) {
    std::ostringstream out;
    for (const auto& c : domain.characters) out << "- " << c.id << ": " << c.description << "\n";
    return out.str();
}

std::string describe_locations(const StoryDomain& domain) {
    std::ostringstream out;
    for (const auto& l : domain.locations) out << "- " << l.id << " (" << l.name << ")\n";
    return out.str();
}

std::string describe_action_schema(const StoryDomain& domain) {
    std::ostringstream out;
    for (const auto& a : domain.actions) {
        out << "- " << a.name << "(";
        for (std::size_t i = 0; i < a.parameters.size(); ++i) {
            if (i) out << ", ";
            out << a.parameters[i].role << ": " << to_string(a.parameters[i].kind);
        }
        out << ")";
        if (a.requires_colocation) out << "  [actor and target must share a location]";
        out << "\n";
    }
    return out.str();
}

} // namespace loom
