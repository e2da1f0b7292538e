#include <doctest.h>

#include "loom/compiler.hpp"
#include "support.hpp"

using namespace loom;
using nlohmann::json;
using test::act;
using test::plan_answer;

namespace {

// Answers plan requests by looking at the rendered world, the way a model
// would: the dove only features while it is alive.
class WorldAwarePlanner : public Provider {
public:
    std::vector<Prompt> prompts;
    std::string_view kind() const override { return "test"; }

protected:
    std::string do_complete(const Prompt& p) override {
        prompts.push_back(p);
        if (p.text.find("- dove: DEAD") != std::string::npos)
            return plan_answer({{"ant", "moveTo(oak_tree)"}, {"hunter", "moveTo(oak_tree)"}, {"hunter", "attack(ant)"}});
        return plan_answer({{"dove", "moveTo(oak_tree)"}, {"hunter", "moveTo(oak_tree)"}, {"hunter", "attack(dove)"}});
    }
};

const std::string accident = "a small creature gets into an accident";

ActionSequence plan_of(std::vector<ActionInstance> actions) {
    ActionSequence s;
    s.actions = std::move(actions);
    return s;
}

} // namespace

TEST_SUITE("compiler") {

TEST_CASE("scripted plan is parsed exactly") {
    const auto& d = test::forest_with_oak();
    ScriptedProvider p;
    p.set("plan.e0.r1", plan_answer({{"dove", "moveTo(oak_tree)", "looking for berries"},
                                     {"hunter", "moveTo(oak_tree)"},
                                     {"hunter", "attack(dove)", "dinner"}}));
    const CompileContext ctx{d, p, {}, ""};
    const auto plan = generate_plan(ctx, 0, accident, init_world(d));
    REQUIRE(plan.actions.size() == 3);
    CHECK(plan.actions[0] == act("dove", "moveTo(oak_tree)", "looking for berries"));
    CHECK(plan.actions[1] == act("hunter", "moveTo(oak_tree)"));
    CHECK(plan.actions[2] == act("hunter", "attack(dove)", "dinner"));
    CHECK(plan.iteration == 1);
    CHECK(plan.source_event == 0);
}

TEST_CASE("the world state in the prompt steers the plan") {
    const auto& d = test::forest_with_oak();
    WorldAwarePlanner p;
    const CompileContext ctx{d, p, {}, ""};
    const auto alive = generate_plan(ctx, 0, accident, init_world(d));
    CHECK(alive.actions[0].subject == "dove");
    const auto dead_world = execute(d, init_world(d), act("ant", "kill(dove)")).world;
    const auto plan = generate_plan(ctx, 0, accident, dead_world);
    for (const auto& a : plan.actions) CHECK(a.subject != "dove");
    CHECK(p.prompts.back().text.find(accident) != std::string::npos);
    CHECK(p.prompts.back().text.find("kill(target: character)") != std::string::npos);
}

TEST_CASE("schema-invalid plans are re-asked with the reason") {
    const auto& d = test::forest_with_oak();
    ScriptedProvider p;
    p.set("plan.e0.r1", plan_answer({{"hunter", "tryToKill(dove)"}}));
    p.set("plan.e0.r1#retry1", plan_answer({{"hunter", "kill()"}}));
    p.set("plan.e0.r1#retry2", plan_answer({{"hunter", "moveTo(forest)"}, {"hunter", "attack(dove)"}}));
    auto log = std::make_shared<CallLog>();
    p.attach_log(log);
    const CompileContext ctx{d, p, {}, ""};
    CHECK(generate_plan(ctx, 0, accident, init_world(d)).actions.size() == 2);
    CHECK(log->size() == 3);

    ScriptedProvider empty;
    empty.set("plan.*", "[]");
    const CompileContext ctx2{d, empty, {}, ""};
    CHECK_THROWS_AS(generate_plan(ctx2, 0, accident, init_world(d)), StructuredOutputError);
    CHECK_THROWS_AS(generate_plan(ctx2, 0, " ", init_world(d)), ValidationError);
}

TEST_CASE("feedback from the previous round reaches the next prompt") {
    const auto& d = test::forest_with_oak();
    WorldAwarePlanner p;
    const CompileContext ctx{d, p, {}, ""};
    ReviewFeedback fb;
    fb.draft = "0. hunter kill(dove)\n";
    fb.causal_failures = {{0, "not colocated"}};
    fb.motivation_failures = {{0, "the hunter has no reason yet"}};
    generate_plan(ctx, 0, accident, init_world(d), &fb, 2);
    const auto& text = p.prompts.back().text;
    CHECK(p.prompts.back().tag == "plan.e0.r2");
    CHECK(text.find("hunter kill(dove)") != std::string::npos);
    CHECK(text.find("not colocated") != std::string::npos);
    CHECK(text.find("the hunter has no reason yet") != std::string::npos);
}

TEST_CASE("causal soundness reports the failing index") {
    const auto& d = test::forest();
    const auto w = init_world(d);
    const auto verdicts =
        check_causal_soundness(plan_of({act("dove", "kill(ant)"), act("ant", "moveTo(brook)"), act("dove", "moveTo(brook)"),
                                        act("owl", "moveTo(brook)")}),
                               w, d);
    REQUIRE(verdicts.size() == 4);
    CHECK(verdicts[0].verdict.ok);
    CHECK_FALSE(verdicts[1].verdict.ok);
    CHECK(verdicts[1].verdict.reason == "subject not alive");
    // after the first failure only the schema is checked
    CHECK(verdicts[2].verdict.ok);
    CHECK_FALSE(verdicts[2].simulated);
    CHECK_FALSE(verdicts[3].verdict.ok);
    CHECK(w == init_world(d));
}

TEST_CASE("valid plans pass without touching the world") {
    const auto& d = test::forest();
    const auto w = init_world(d);
    const auto copy = w;
    const auto verdicts = check_causal_soundness(
        plan_of({act("dove", "moveTo(brook)"), act("ant", "moveTo(brook)"), act("dove", "speakTo(ant, \"hi\")")}), w, d);
    for (const auto& v : verdicts) CHECK(v.verdict.ok);
    CHECK(w == copy);
    const auto empty_arg = check_causal_soundness(plan_of({act("dove", "moveTo(brook)"), {"dove", "kill", {""}, {}}}), w, d);
    CHECK_FALSE(empty_arg[1].verdict.ok);
    CHECK(empty_arg[1].verdict.reason == "empty argument 'target'");
}

TEST_CASE("review combines judges with the causal check") {
    const auto& d = test::forest();
    const auto w = init_world(d);
    auto plan = plan_of({act("dove", "moveTo(village)"), act("dove", "kill(cat)")});

    SUBCASE("unmotivated betrayal") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        p.set("review.e0.r1.motivation.a1",
              R"({"established": false, "explanation": "The dove has never met the cat and has no grudge."})");
        const auto fb = review_plan({d, p, {}, ""}, plan, "a betrayal", w);
        REQUIRE(fb.motivation_failures.size() == 1);
        CHECK(fb.motivation_failures[0].first == 1);
        CHECK(fb.motivation_failures[0].second.find("no grudge") != std::string::npos);
        CHECK(fb.causal_failures.empty());
        CHECK_FALSE(fb.approved);
        CHECK(fb.render().find("no grudge") != std::string::npos);
    }
    SUBCASE("causally invalid plan fails whatever the judges say") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        const auto bad = plan_of({act("dove", "kill(cat)")});
        const auto fb = review_plan({d, p, {}, ""}, bad, "a betrayal", w);
        REQUIRE(fb.causal_failures.size() == 1);
        CHECK(fb.causal_failures[0].second == "not colocated");
        CHECK_FALSE(fb.approved);
    }
    SUBCASE("clean plan") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        const auto fb = review_plan({d, p, {}, ""}, plan, "a betrayal", w);
        CHECK(fb.approved);
        CHECK(fb.render().empty());
    }
    SUBCASE("incoherent plan") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        p.set("review.e0.r1.coherency", R"({"coherent": false, "notes": "Nobody gets into an accident."})");
        const auto fb = review_plan({d, p, {}, ""}, plan, "an accident", w);
        CHECK(fb.coherency_notes == "Nobody gets into an accident.");
        CHECK_FALSE(fb.approved);
    }
}

TEST_CASE("motivation is judged on the world each subject acts in") {
    const auto& d = test::forest();
    struct Recorder : Provider {
        std::map<std::string, std::string> texts;
        std::string_view kind() const override { return "rec"; }
        std::string do_complete(const Prompt& p) override {
            texts[p.tag] = p.text;
            if (p.tag.find("coherency") != std::string::npos) return R"({"coherent": true})";
            return R"({"established": true})";
        }
    } p;
    const auto plan = plan_of({act("dove", "moveTo(brook)"), act("ant", "moveTo(brook)"), act("ant", "speakTo(dove, \"hi\")")});
    review_plan({d, p, {}, ""}, plan, "a meeting", init_world(d));
    const auto& third = p.texts.at("review.e0.r1.motivation.a2");
    CHECK(third.find("You are Ant.") != std::string::npos);
    CHECK(third.find("ant moved from forest to brook") != std::string::npos);
    CHECK(third.find("0. dove moveTo(brook)") != std::string::npos);
    CHECK(third.find("You are about to perform: ant speakTo(dove, \"hi\")") != std::string::npos);
}

TEST_CASE("concurrent motivation checks give the same review") {
    const auto& d = test::forest();
    ScriptedProvider p;
    test::add_approving_judges(p);
    p.set("review.e0.r1.motivation.a2", R"({"established": false, "explanation": "why?"})");
    const auto plan = plan_of({act("dove", "moveTo(brook)"), act("ant", "moveTo(brook)"), act("ant", "speakTo(dove, \"hi\")"),
                               act("dove", "think(\"hmm\")")});
    CompilerConfig seq;
    CompilerConfig par;
    par.concurrent_review = true;
    const auto a = review_plan({d, p, seq, ""}, plan, "e", init_world(d));
    const auto b = review_plan({d, p, par, ""}, plan, "e", init_world(d));
    CHECK(a.motivation_failures == b.motivation_failures);
    CHECK(a.approved == b.approved);
}

TEST_CASE("compile_event") {
    const auto& d = test::forest_with_oak();
    const auto w = init_world(d);

    SUBCASE("approved on the first round") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        p.set("plan.e0.r1", plan_answer({{"dove", "moveTo(oak_tree)"}, {"hunter", "moveTo(oak_tree)"}, {"hunter", "attack(dove)"}}));
        const auto r = compile_event({d, p, {}, ""}, 0, accident, w);
        CHECK(r.plan.iteration == 1);
        REQUIRE(r.records.size() == 3);
        for (const auto& rec : r.records) CHECK(rec.origin == Origin::plot_execution);
        CHECK(r.world.health.at("dove") == 2);
        CHECK(r.world.turn == 3);
    }
    SUBCASE("fixed on the second round") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        p.set("plan.e0.r1", plan_answer({{"hunter", "attack(dove)"}}));
        p.set("plan.e0.r2", plan_answer({{"hunter", "moveTo(forest)"}, {"hunter", "attack(dove)"}}));
        const auto r = compile_event({d, p, {}, ""}, 0, accident, w);
        CHECK(r.plan.iteration == 2);
        CHECK(r.reviews.size() == 2);
        CHECK(r.reviews[0].causal_failures.size() == 1);
        CHECK(r.world.in_danger.at("dove"));
    }
    SUBCASE("no causally sound plan") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        p.set("plan.*", plan_answer({{"hunter", "attack(dove)"}}));
        try {
            compile_event({d, p, {}, ""}, 4, accident, w);
            FAIL("expected CompilationError");
        } catch (const CompilationError& e) {
            CHECK(e.event_index() == 4);
            CHECK(e.code() == "compilation_error");
            CHECK(std::string(e.what()).find(accident) != std::string::npos);
        }
    }
    SUBCASE("motivation failures are advisory") {
        ScriptedProvider p;
        test::add_approving_judges(p);
        p.set("*motivation*", R"({"established": false, "explanation": "unclear"})");
        p.set("plan.*", plan_answer({{"dove", "moveTo(oak_tree)"}}));
        CompilerConfig cfg;
        cfg.max_review_rounds = 2;
        const auto r = compile_event({d, p, cfg, ""}, 0, accident, w);
        CHECK(r.reviews.size() == 2);
        CHECK(r.plan.iteration == 2);
        CHECK(r.world.positions.at("dove") == "oak_tree");
    }
    SUBCASE("invalid configuration") {
        ScriptedProvider p;
        CompilerConfig cfg;
        cfg.max_review_rounds = 0;
        CHECK_THROWS_AS(compile_event({d, p, cfg, ""}, 0, accident, w), ValidationError);
    }
}

TEST_CASE("npc turns") {
    const auto& d = test::forest();
    const auto w = init_world(d);
    ScriptedProvider p;
    p.set("npc.i0.witch", R"js({"action": "moveTo(mountain)", "thought": "I need to get some fresh herbs"})js");
    p.set("npc.i0.cat", R"({"action": "pass"})");
    p.set("npc.i0.deer", "I am not sure what to do.");
    p.set("npc.i0.hunter", R"js({"action": "kill(dove)"})js");
    p.set("npc.i0.hunter#retry1", R"js({"action": "moveTo(forest)"})js");
    const CompileContext ctx{d, p, {}, ""};

    const auto witch = simulate_npc_turn(ctx, w, "witch", 0);
    REQUIRE(witch.action.has_value());
    CHECK(witch.action->action == "moveTo");
    CHECK(witch.action->arguments == std::vector<std::string>{"mountain"});
    CHECK(witch.action->thought == "I need to get some fresh herbs");
    const auto t = execute(d, w, *witch.action, Origin::npc_simulation);
    CHECK(t.world.positions.at("witch") == "mountain");

    const auto cat = simulate_npc_turn(ctx, w, "cat", 0);
    CHECK_FALSE(cat.action.has_value());
    CHECK(cat.warnings.empty());

    const auto deer = simulate_npc_turn(ctx, w, "deer", 0);
    CHECK_FALSE(deer.action.has_value());
    CHECK(deer.warnings.size() == 1);

    const auto hunter = simulate_npc_turn(ctx, w, "hunter", 0);
    REQUIRE(hunter.action.has_value());
    CHECK(hunter.action->arguments[0] == "forest");

    const auto dead = execute(d, w, act("dove", "kill(ant)")).world;
    CHECK_THROWS_AS(simulate_npc_turn(ctx, dead, "ant", 0), PreconditionError);
}

TEST_CASE("npc prompts carry no outline") {
    const auto& d = test::forest();
    WorldAwarePlanner p;
    Outline o;
    o.events = {{"a secret outline event"}};
    const CompileContext ctx{d, p, {}, "", &o};
    simulate_npc_turn(ctx, init_world(d), "witch", 0);
    CHECK(p.prompts.back().text.find("a secret outline event") == std::string::npos);
    CHECK(p.prompts.back().text.find("moveTo(destination: location)") != std::string::npos);
}

TEST_CASE("property: approval implies causal soundness") {
    const auto& d = test::forest();
    std::mt19937 gen(99);
    int approved = 0;
    for (int i = 0; i < 150; ++i) {
        const auto w = init_world(d, test::random_placement(gen, d));
        ActionSequence plan;
        const int n = 1 + static_cast<int>(gen() % 4);
        for (int k = 0; k < n; ++k) plan.actions.push_back(test::random_action(gen, d));
        ScriptedProvider p;
        p.set("*coherency*", gen() % 4 ? R"({"coherent": true})" : R"({"coherent": false, "notes": "meh"})");
        p.set("*motivation*", gen() % 4 ? R"({"established": true})" : R"({"established": false})");
        const auto fb = review_plan({d, p, {}, ""}, plan, "anything", w);
        const auto verdicts = check_causal_soundness(plan, w, d);
        const bool sound = std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.verdict.ok; });
        CHECK(fb.causal_failures.empty() == sound);
        if (fb.approved) {
            ++approved;
            CHECK(sound);
            auto x = w;
            for (const auto& a : plan.actions) CHECK_NOTHROW(x = execute(d, x, a).world);
        }
    }
    CHECK(approved > 0);
}

TEST_CASE("configuration documents") {
    CompilerConfig c;
    c.max_review_rounds = 5;
    c.concurrent_review = true;
    const auto back = config_from_json(config_to_json(c));
    CHECK(back.max_review_rounds == 5);
    CHECK(back.concurrent_review);
    CHECK_THROWS_AS(config_from_json(json{{"player_actions_per_turn", 0}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"npc_turns_per_interlude", -1}}), ValidationError);
}

}
