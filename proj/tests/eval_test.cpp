#include <doctest.h>

#include <fstream>

#include "loom/metrics.hpp"
#include "loom/session.hpp"
#include "loom_tools/evaluation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace loom;
using nlohmann::json;

namespace {

json read(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::vector<std::pair<std::string, Outline>> fixture_outlines() {
    const auto dir = test::fixtures_dir() / "outlines";
    return {{"brook", outline_from_json(read(dir / "brook.json"))}, {"hunt", outline_from_json(read(dir / "hunt.json"))}};
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("parallel_map keeps order and rethrows") {
    const auto squares = tools::parallel_map<int>(50, 4, [](std::size_t i) { return static_cast<int>(i * i); });
    for (std::size_t i = 0; i < squares.size(); ++i) CHECK(squares[i] == static_cast<int>(i * i));
    CHECK_THROWS_AS(tools::parallel_map<int>(5, 3,
                                             [](std::size_t i) -> int {
                                                 if (i == 3) throw ValidationError("x", "boom");
                                                 return 0;
                                             }),
                    ValidationError);
    CHECK(tools::parallel_map<int>(0, 4, [](std::size_t) { return 1; }).empty());
}

TEST_CASE("plus_minus") {
    CHECK(tools::plus_minus({0.59, 0.01}, 2) == "0.59±0.01");
    CHECK(tools::plus_minus({1.7, 0.37}) == "1.700±0.370");
}

TEST_CASE("diversity report equals brute force over the generated plots") {
    auto provider = ScriptedProvider::from_file(test::fixtures_dir() / "diversity_script.json");
    tools::DiversityOptions options;
    options.plots_per_outline = 3;
    const auto r = tools::eval_diversity(fixture_outlines(), test::forest(), options, provider);
    REQUIRE(r.rows.size() == 2);
    std::vector<double> d1, dm;
    for (const auto& row : r.rows) {
        REQUIRE(row.plots.size() == 3);
        std::vector<oracle::Tokens> toks;
        for (const auto& p : row.plots) toks.push_back(tokenize(p));
        const auto ref = oracle::diversity(toks);
        CHECK(row.diversity.d1 == doctest::Approx(ref.d1).epsilon(1e-12));
        CHECK(row.diversity.d_macro == doctest::Approx(ref.d_macro).epsilon(1e-12));
        d1.push_back(ref.d1);
        dm.push_back(ref.d_macro);
    }
    CHECK(r.d1.mean == doctest::Approx((d1[0] + d1[1]) / 2));
    CHECK(r.d1.stddev == doctest::Approx(std::abs(d1[0] - d1[1]) / std::sqrt(2.0)));

    // plots are played by positive, negative and roleplayer proxies in turn
    CHECK(r.rows[1].plots[1].find("dove attack(cat)") != std::string::npos);
    CHECK(r.rows[1].plots[2].find("dove moveTo(brook)") != std::string::npos);

    SUBCASE("matches the fixture document") {
        std::vector<std::string> diffs;
        const auto expected = read(test::fixtures_dir() / "diversity_expected.json");
        const auto actual = tools::to_json(r);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(actual["outlines"][i]["d1"].get<double>() ==
                  doctest::Approx(expected["outlines"][i]["d1"].get<double>()).epsilon(1e-12));
            CHECK(actual["outlines"][i]["d_macro"].get<double>() ==
                  doctest::Approx(expected["outlines"][i]["d_macro"].get<double>()).epsilon(1e-12));
        }
    }

    SUBCASE("parallel and sequential runs agree") {
        auto again = ScriptedProvider::from_file(test::fixtures_dir() / "diversity_script.json");
        options.jobs = 1;
        const auto seq = tools::eval_diversity(fixture_outlines(), test::forest(), options, again);
        CHECK(tools::to_json(seq) == tools::to_json(r));
    }

    SUBCASE("seeded placements are reproducible") {
        options.placement_seed = 7;
        auto a = ScriptedProvider::from_file(test::fixtures_dir() / "diversity_script.json");
        auto b = ScriptedProvider::from_file(test::fixtures_dir() / "diversity_script.json");
        CHECK(tools::to_json(tools::eval_diversity(fixture_outlines(), test::forest(), options, a)) ==
              tools::to_json(tools::eval_diversity(fixture_outlines(), test::forest(), options, b)));
    }

    SUBCASE("needs two plots") {
        options.plots_per_outline = 1;
        CHECK_THROWS_AS(tools::eval_diversity(fixture_outlines(), test::forest(), options, provider),
                        ValidationError);
    }
}

TEST_CASE("impact report") {
    auto provider = ScriptedProvider::from_file(test::fixtures_dir() / "impact_script.json");
    const auto outline = outline_from_json(read(test::fixtures_dir() / "impact_outline.json"));
    tools::ImpactOptions options;
    options.batch = 3;
    const auto& d = test::forest();
    const auto r = tools::eval_impact(outline, d, init_world(d), options, provider);

    CHECK(r.player == "dove");
    CHECK(r.victim == "ant");
    CHECK(r.helper == "hunter");
    REQUIRE(r.negative_action.size() == 2);
    CHECK(format_action_call(r.negative_action[0]) == "moveTo(brook)");
    CHECK(format_action_call(r.negative_action[1]) == "kill(ant)");
    CHECK(format_action_call(r.positive_action[0]) == "moveTo(village)");
    CHECK(format_action_call(r.positive_action[1]) == "speakTo(hunter, \"Please help Ant, they are in danger!\")");

    REQUIRE(r.negative_plots.size() == 3);
    REQUIRE(r.positive_plots.size() == 3);
    for (const auto& p : r.negative_plots) {
        // the dead ant's move was caught and replanned
        CHECK(p.segments.at(1).iteration == 2);
        CHECK(p.interludes.at(0).after_segment == 0);
        CHECK(p.interludes.at(0).records.size() == 2);
    }
    CHECK(r.world_state_change == 1.0);
    // hunter speakTo(dove) once per plot
    CHECK(r.character_involvement == 1.0);

    // divergence of the follow-ups, by brute force
    auto follow_up = [](const GamePlot& plot) {
        const auto all = plot.ordered_records();
        std::size_t i = 0;
        while (all[i].origin != Origin::player) ++i;
        while (i < all.size() && all[i].origin == Origin::player) ++i;
        return tokenize(render_records_text({all.begin() + static_cast<long>(i), all.end()}));
    };
    double d1 = 0;
    for (const auto& p : r.positive_plots)
        for (const auto& n : r.negative_plots) d1 += oracle::distance(follow_up(p), follow_up(n)).d1;
    CHECK(r.divergence.d1 == doctest::Approx(d1 / 9));

    SUBCASE("needs two events") {
        Outline one = outline;
        one.events.resize(1);
        CHECK_THROWS_AS(tools::eval_impact(one, d, init_world(d), options, provider), ValidationError);
    }
    SUBCASE("unknown victim") {
        options.victim = "dragon";
        CHECK_THROWS_AS(tools::eval_impact(outline, d, init_world(d), options, provider), ValidationError);
    }
}

TEST_CASE("abstraction report on the demo chain") {
    auto provider = test::demo_script();
    // the demo answers are keyed by exact tag; the evaluation prefixes each story
    const auto demo = read(test::data_dir() / "scripts" / "demo.json");
    for (const auto* key : {"outline.variations", "outline.levels", "outline.tailor"})
        if (demo.contains(key)) provider.set(std::string("*") + key, demo[key].dump());
    tools::AbstractionOptions options;
    const auto lex = test::data_dir() / "lexicon";
    options.concreteness_lexicon = lex / "concreteness_mini.tsv";
    options.imageability_lexicon = lex / "imageability_mini.tsv";
    options.stopwords = lex / "stopwords_en.txt";
    const auto r = tools::eval_abstraction({test::demo_story(), test::demo_story()}, options, provider);
    REQUIRE(r.rows.size() == 3);
    CHECK(r.stories == 2);
    const auto json_doc = tools::to_json(r);
    CHECK(json_doc["levels"][0]["level"] == "scene");
    CHECK(tools::to_table(r).find("sequence") != std::string::npos);
    CHECK_THROWS_AS(tools::eval_abstraction({}, options, provider), ValidationError);
}

}
