#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/domain.hpp"
#include "loom/llm.hpp"
#include "loom/world.hpp"

namespace loom::test {

inline std::filesystem::path data_dir() { return LOOM_TEST_DATA_DIR; }
inline std::filesystem::path fixtures_dir() { return LOOM_TEST_FIXTURES_DIR; }

inline const StoryDomain& forest() {
    static const StoryDomain d = load_domain_file(data_dir() / "domains" / "fairytale_forest.json");
    return d;
}

// The reference domain plus an oak tree, for the "small creature" examples
// that happen there.
inline const StoryDomain& forest_with_oak() {
    static const StoryDomain d = [] {
        auto copy = forest();
        copy.locations.push_back({"oak_tree", "Oak Tree"});
        return copy;
    }();
    return d;
}

inline ActionInstance act(const std::string& subject, const std::string& call,
                          std::optional<std::string> thought = std::nullopt) {
    auto a = parse_action_call(subject, call);
    a.thought = std::move(thought);
    return a;
}

struct Step {
    std::string subject;
    std::string call;
    std::string thought = "";
};

// Plan answer in the format plot_generate asks for.
inline std::string plan_answer(const std::vector<Step>& steps) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : steps) out.push_back({{"subject", s.subject}, {"action", s.call}, {"thought", s.thought}});
    return out.dump();
}

// Judges that approve everything, NPCs that pass, no fulfillment, fixed
// summary and metric scores. Specific tags set afterwards take precedence.
inline void add_approving_judges(ScriptedProvider& p) {
    p.set("*coherency*", R"({"coherent": true, "notes": ""})");
    p.set("*motivation*", R"({"established": true, "explanation": "it fits"})");
    p.set("*fulfill.*", R"({"fulfilled": false, "cited": []})");
    p.set("*npc.*", R"({"action": "pass"})");
    p.set("*summary", "The forest was quiet again.");
    p.set("*.intent*", "0.3");
    p.set("*.compare", "different order of events");
    p.set("*.score", "0.4");
}

inline ScriptedProvider demo_script() { return ScriptedProvider::from_file(data_dir() / "scripts" / "demo.json"); }

inline std::string demo_story() {
    std::ifstream in(data_dir() / "scripts" / "ant_and_dove.txt");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::mt19937& rng() {
    static std::mt19937 gen(20240917u);
    return gen;
}

template <typename T>
const T& pick(std::mt19937& gen, const std::vector<T>& items) {
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(gen)];
}

// Random, not necessarily executable, schema-valid action.
inline ActionInstance random_action(std::mt19937& gen, const StoryDomain& d) {
    ActionInstance a;
    a.subject = pick(gen, d.characters).id;
    const auto& spec = pick(gen, d.actions);
    a.action = spec.name;
    for (const auto& p : spec.parameters) {
        switch (p.kind) {
        case ParamKind::character: a.arguments.push_back(pick(gen, d.characters).id); break;
        case ParamKind::location: a.arguments.push_back(pick(gen, d.locations).id); break;
        case ParamKind::free_text: a.arguments.push_back("words " + std::to_string(gen() % 100)); break;
        }
    }
    return a;
}

// Random placement of every character.
inline Placement random_placement(std::mt19937& gen, const StoryDomain& d) {
    Placement p;
    for (const auto& c : d.characters) p[c.id] = pick(gen, d.locations).id;
    return p;
}

} // namespace loom::test
