#include <doctest.h>

#include "loom/player_proxy.hpp"
#include "support.hpp"

using namespace loom;
using nlohmann::json;
using test::act;
using test::plan_answer;

namespace {

std::string proposal(const std::vector<std::string>& calls) {
    json out = json::array();
    for (const auto& c : calls) out.push_back({{"action", c}, {"thought", "because"}});
    return out.dump();
}

ProposalRequest request(PlayerType type, int count, std::string tag = "player.i0") {
    ProposalRequest r;
    r.type = type;
    r.player_character = "dove";
    r.count = count;
    r.tag = std::move(tag);
    return r;
}

Outline hunter_outline() {
    Outline o;
    o.events = {{"The hunter arrives in the forest"}, {"The hunter wonders what happened"}};
    o.moral = "Kindness is repaid";
    return o;
}

void add_variant_script(ScriptedProvider& p) {
    test::add_approving_judges(p);
    p.set("*plan.e0.r1", plan_answer({{"hunter", "moveTo(forest)"}}));
    p.set("*plan.e1.r1", plan_answer({{"hunter", "think(\"so quiet\")"}}));
    p.set("*positive.player.*", proposal({"speakTo(ant, \"The hunter is here, hide!\")", "speakTo(hunter, \"Go home\")"}));
    p.set("*negative.player.*", proposal({"attack(ant)", "kill(ant)"}));
    p.set("*roleplayer.player.*", proposal({"moveTo(brook)", "think(\"I hope the ant is safe\")"}));
    p.set("s1.negative.metric.intent", "0.9");
    p.set("s1.negative.metric.emergence.score", "0.8");
}

NarrativeSpace space_with_pivot() {
    NarrativeSpace s;
    s.id = "sp-1";
    s.domain_ref = "forest";
    s.outline = hunter_outline();
    Variant pivot;
    pivot.id = "v1";
    pivot.plot.segments.push_back(
        {0, "pivot", {execute(test::forest(), init_world(test::forest()), act("dove", "moveTo(brook)")).record}});
    s.variants.push_back(pivot);
    s.pivot = "v1";
    return s;
}

} // namespace

TEST_SUITE("player_proxy") {

TEST_CASE("behaviour descriptions differ by type") {
    const auto& d = test::forest();
    auto w = execute(d, init_world(d), act("dove", "moveTo(brook)")).world;
    const auto& dove = *d.find_character("dove");
    CHECK(behavior_description(PlayerType::positive, dove, w).find("save") != std::string::npos);
    CHECK(behavior_description(PlayerType::negative, dove, w).find("kill") != std::string::npos);
    const auto role = behavior_description(PlayerType::roleplayer, dove, w);
    CHECK(role.find(dove.description) != std::string::npos);
    CHECK(role.find("dove moved from forest to brook") != std::string::npos);
    CHECK(behavior_description(PlayerType::positive, dove, w).find(dove.description) == std::string::npos);
}

TEST_CASE("proposals are simulated in order") {
    const auto& d = test::forest();
    ScriptedProvider p;
    // the cat is only reachable after the move
    p.set("player.i0", proposal({"moveTo(village)", "attack(cat)", "kill(cat)"}));
    const auto actions = propose_action(request(PlayerType::negative, 2), init_world(d), d, {}, p);
    REQUIRE(actions.size() == 2);
    CHECK(actions[0] == act("dove", "moveTo(village)", "because"));
    CHECK(actions[1].action == "attack");
    CHECK(actions[1].subject == "dove");
}

TEST_CASE("rejected proposals are re-asked with the reason") {
    const auto& d = test::forest();
    struct Rec : ScriptedProvider {
        std::vector<Prompt> prompts;
        std::string do_complete(const Prompt& pr) override {
            prompts.push_back(pr);
            return ScriptedProvider::do_complete(pr);
        }
    } p;
    p.set("player.i0", proposal({"attack(cat)"}));
    p.set("player.i0#retry1", proposal({"attack(ant)"}));
    auto req = request(PlayerType::negative, 1);
    req.rejections = {"dove kill(witch): not colocated"};
    const auto actions = propose_action(req, init_world(d), d, {}, p);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].arguments[0] == "ant");
    REQUIRE(p.prompts.size() == 2);
    CHECK(p.prompts[0].text.find("dove kill(witch): not colocated") != std::string::npos);
    CHECK(p.prompts[1].text.find("not colocated") != std::string::npos);
    CHECK(p.prompts[0].text.find("You are a negative player") != std::string::npos);
}

TEST_CASE("unusable proposals fall back to thinking") {
    const auto& d = test::forest();
    ScriptedProvider p;
    p.set("player.i0*", proposal({"fly(away)"}));
    std::vector<std::string> warnings;
    const auto actions = propose_action(request(PlayerType::positive, 2), init_world(d), d, {}, p, &warnings);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].action == "think");
    CHECK(warnings.size() == 1);

    const auto dead = execute(d, init_world(d), act("ant", "kill(dove)")).world;
    CHECK_THROWS_AS(propose_action(request(PlayerType::positive, 1), dead, d, {}, p), PreconditionError);
}

TEST_CASE("proxy types play differently in the loop") {
    const auto& d = test::forest();
    ScriptedProvider p;
    add_variant_script(p);
    auto run = [&](PlayerType type) {
        const auto prefix = "s1." + std::string(to_string(type)) + ".";
        ProxyPlayer proxy(type, p, prefix);
        return run_game_loop(hunter_outline(), d, init_world(d), "dove", proxy, p, {}, prefix);
    };
    const auto neg = run(PlayerType::negative);
    const auto pos = run(PlayerType::positive);
    REQUIRE(neg.complete);
    REQUIRE(pos.complete);
    CHECK(neg.interludes[0].records[1].action.action == "kill");
    CHECK(pos.interludes[0].records[0].action.action == "speakTo");
    CHECK(render_plot_text(neg) != render_plot_text(pos));
}

TEST_CASE("variant generation") {
    const auto& d = test::forest();
    ScriptedProvider p;
    add_variant_script(p);
    const auto space = space_with_pivot();
    const auto variants = generate_variants(space, 1, d, p);
    REQUIRE(variants.size() == 3);
    CHECK(variants[0].id == "v2");
    CHECK(variants[2].id == "v4");
    CHECK(variants[0].player_type == PlayerType::positive);
    CHECK(variants[1].player_type == PlayerType::negative);
    CHECK(variants[2].player_type == PlayerType::roleplayer);
    for (const auto& v : variants) {
        CHECK(v.plot.complete);
        REQUIRE(v.progression.size() == 4);
        CHECK(v.progression.back().intent_distance == v.intent_distance);
        CHECK(v.progression.back().emergence_distance == v.emergence_distance);
        CHECK(v.plot.summary == "The forest was quiet again.");
    }
    CHECK(variants[1].intent_distance == doctest::Approx(0.9));
    CHECK(variants[1].emergence_distance == doctest::Approx(0.8));
    CHECK(variants[0].intent_distance == doctest::Approx(0.3));
    CHECK(variants[0].emergence_distance == doctest::Approx(0.4));
}

TEST_CASE("parallel variant generation matches the sequential result") {
    const auto& d = test::forest();
    ScriptedProvider p;
    add_variant_script(p);
    const auto space = space_with_pivot();
    VariantOptions par;
    par.parallel = true;
    const auto a = generate_variants(space, 2, d, p);
    const auto b = generate_variants(space, 2, d, p, par);
    REQUIRE(a.size() == 6);
    CHECK(a == b);
}

TEST_CASE("variant generation degrades instead of failing") {
    const auto& d = test::forest();
    auto space = space_with_pivot();
    SUBCASE("no pivot: only the intent distance") {
        ScriptedProvider p;
        add_variant_script(p);
        space.pivot.clear();
        const auto v = generate_variants(space, 1, d, p);
        CHECK(v[0].progression.empty());
        CHECK(v[0].intent_distance == doctest::Approx(0.3));
        CHECK(std::find(v[0].warnings.begin(), v[0].warnings.end(), "no pivot: emergence distance not computed") !=
              v[0].warnings.end());
    }
    SUBCASE("compilation failure") {
        ScriptedProvider p;
        add_variant_script(p);
        p.set("s1.negative.plan.e1.*", plan_answer({{"hunter", "kill(deer)"}}));
        const auto v = generate_variants(space, 1, d, p);
        CHECK(v[0].plot.complete);
        CHECK_FALSE(v[1].plot.complete);
        CHECK_FALSE(v[1].warnings.empty());
    }
    SUBCASE("bad requests") {
        ScriptedProvider p;
        CHECK_THROWS_AS(generate_variants(space, 0, d, p), ValidationError);
        CHECK_THROWS_AS(generate_variants(space, max_variant_sets + 1, d, p), ValidationError);
        space.outline.reset();
        CHECK_THROWS_AS(generate_variants(space, 1, d, p), PreconditionError);
    }
}

TEST_CASE("player character and starting world of a space") {
    const auto& d = test::forest();
    NarrativeSpace s;
    CHECK(resolve_player_character(s, d) == "dove");
    s.player_character = "ant";
    CHECK(resolve_player_character(s, d) == "ant");
    s.player_character = "fox";
    CHECK_THROWS_AS(resolve_player_character(s, d), ValidationError);
    CHECK(initial_world_for(s, d) == init_world(d));
    s.placement = test::random_placement(test::rng(), d);
    CHECK(initial_world_for(s, d).positions == s.placement);
}

}
