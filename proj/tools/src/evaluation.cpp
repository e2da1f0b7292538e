#include "loom_tools/evaluation.hpp"

#include <cstdio>
#include <random>
#include <sstream>

#include "loom/llm.hpp"
#include "loom/player_proxy.hpp"
#include "loom/session.hpp"

namespace loom::tools {

using nlohmann::json;

std::string plus_minus(const MeanStd& m, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f±%.*f", digits, m.mean, digits, m.stddev);
    return buf;
}

namespace {

std::string join_events(const Outline& o) {
    std::string text;
    for (const auto& e : o.events) text += e.text + "\n";
    return text;
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"stddev", m.stddev}}; }

std::string pad(std::string s, std::size_t width) {
    // ± is two bytes but one column
    std::size_t cols = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++cols;
    if (cols < width) s.append(width - cols, ' ');
    return s;
}

} // namespace

AbstractionReport eval_abstraction(const std::vector<std::string>& stories, const AbstractionOptions& options,
                                   Provider& provider) {
    if (stories.empty()) throw ValidationError("stories", "no stories to outline");
    if (options.levels.empty()) throw ValidationError("levels", "no levels requested");
    const auto concreteness =
        Lexicon::load(LexiconKind::concreteness, options.concreteness_lexicon, options.stopwords);
    std::optional<Lexicon> imageability;
    if (!options.imageability_lexicon.empty())
        imageability = Lexicon::load(LexiconKind::imageability, options.imageability_lexicon, options.stopwords);

    struct StoryScores {
        std::map<AbstractionLevel, std::pair<std::optional<double>, std::optional<double>>> by_level;
        std::vector<std::string> warnings;
    };
    auto scored = parallel_map<StoryScores>(stories.size(), options.jobs, [&](std::size_t i) {
        StoryScores out;
        const auto tag = "s" + std::to_string(i) + ".outline";
        OutlineResult result;
        try {
            result = texts_to_outline({stories[i]}, AbstractionLevel::act, {}, nullptr, provider, tag);
        } catch (const StructuredOutputError& e) {
            out.warnings.push_back("story " + std::to_string(i) + ": " + e.what());
            return out;
        }
        for (const auto& candidate : result.candidates) {
            if (std::find(options.levels.begin(), options.levels.end(), candidate.level) == options.levels.end())
                continue;
            const auto text = join_events(candidate);
            auto& slot = out.by_level[candidate.level];
            try {
                slot.first = concreteness_rate(text, concreteness).value;
                if (imageability) slot.second = imageability_score(text, *imageability).value;
            } catch (const ValidationError& e) {
                out.warnings.push_back("story " + std::to_string(i) + " " + std::string(to_string(candidate.level)) +
                                       ": " + e.what());
            }
        }
        return out;
    });

    AbstractionReport report;
    report.stories = stories.size();
    for (auto level : options.levels) {
        std::vector<double> c, im;
        for (const auto& s : scored) {
            auto it = s.by_level.find(level);
            if (it == s.by_level.end()) continue;
            if (it->second.first) c.push_back(*it->second.first);
            if (it->second.second) im.push_back(*it->second.second);
        }
        report.rows.push_back({level, mean_std(c), mean_std(im), c.size()});
    }
    for (auto& s : scored) report.warnings.insert(report.warnings.end(), s.warnings.begin(), s.warnings.end());
    return report;
}

DiversityReport eval_diversity(const std::vector<std::pair<std::string, Outline>>& outlines,
                               const StoryDomain& domain, const DiversityOptions& options, Provider& provider) {
    if (options.plots_per_outline < 2) throw ValidationError("plots_per_outline", "need at least two plots");
    validate_config(options.config);
    const PlayerType cycle[] = {PlayerType::positive, PlayerType::negative, PlayerType::roleplayer};
    const auto player = resolve_player_character(NarrativeSpace{}, domain);
    const auto per = static_cast<std::size_t>(options.plots_per_outline);

    struct Item {
        std::string text;
        std::vector<std::string> warnings;
    };
    auto items = parallel_map<Item>(outlines.size() * per, options.jobs, [&](std::size_t k) {
        const auto i = k / per, j = k % per;
        Placement placement;
        for (const auto& c : domain.characters) placement[c.id] = domain.start_location_of(c);
        if (options.placement_seed) {
            std::seed_seq seq{*options.placement_seed, static_cast<unsigned>(i), static_cast<unsigned>(j)};
            std::mt19937 gen(seq);
            for (const auto& c : domain.characters)
                if (c.id != player) placement[c.id] = domain.locations[gen() % domain.locations.size()].id;
        }
        const auto prefix = "o" + std::to_string(i) + ".p" + std::to_string(j) + ".";
        Item out;
        ProxyPlayer proxy(cycle[j % 3], provider, prefix + std::string(to_string(cycle[j % 3])) + ".");
        const auto plot = run_game_loop(outlines[i].second, domain, init_world(domain, placement), player, proxy,
                                        provider, options.config, prefix, &out.warnings);
        out.warnings.insert(out.warnings.end(), proxy.warnings().begin(), proxy.warnings().end());
        if (!plot.complete) out.warnings.push_back(prefix + " incomplete: " + plot.failure);
        out.text = render_plot_text(plot);
        return out;
    });

    DiversityReport report;
    std::vector<double> d1, dm;
    for (std::size_t i = 0; i < outlines.size(); ++i) {
        DiversityReport::Row row;
        row.outline = outlines[i].first;
        for (std::size_t j = 0; j < per; ++j) {
            auto& item = items[i * per + j];
            row.plots.push_back(item.text);
            report.warnings.insert(report.warnings.end(), item.warnings.begin(), item.warnings.end());
        }
        row.diversity = plot_diversity(row.plots);
        d1.push_back(row.diversity.d1);
        dm.push_back(row.diversity.d_macro);
        report.rows.push_back(std::move(row));
    }
    report.d1 = mean_std(d1);
    report.d_macro = mean_std(dm);
    return report;
}

namespace {

class PassivePlayer : public PlayerSource {
public:
    std::vector<ActionInstance> next_actions(const PlayerTurn&) override { return {}; }
};

CharacterId first_other(const StoryDomain& domain, const WorldState& world, const std::set<CharacterId>& excluded) {
    for (const auto& c : domain.characters)
        if (!excluded.count(c.id) && world.alive.at(c.id)) return c.id;
    throw ValidationError("characters", "no suitable character left");
}

// Moves the player next to `target` when needed, then performs `act`.
std::vector<ActionInstance> approach_and(const WorldState& world, const CharacterId& player,
                                         const CharacterId& target, ActionInstance act) {
    std::vector<ActionInstance> out;
    if (world.positions.at(player) != world.positions.at(target))
        out.push_back({player, "moveTo", {world.positions.at(target)}, std::nullopt});
    out.push_back(std::move(act));
    return out;
}

struct Branch {
    WorldState world;
    std::vector<EventRecord> records;
};

Branch apply_player(const StoryDomain& domain, WorldState world, const std::vector<ActionInstance>& actions) {
    Branch b;
    for (const auto& a : actions) {
        auto t = execute(domain, world, a, Origin::player);
        b.records.push_back(std::move(t.record));
        world = std::move(t.world);
    }
    b.world = std::move(world);
    return b;
}

GamePlot stitch(const PlotSegment& first, const std::vector<EventRecord>& player_records, const GamePlot& rest) {
    GamePlot plot;
    plot.segments.push_back(first);
    plot.interludes.push_back({0, player_records});
    for (auto s : rest.segments) {
        s.event_index += 1;
        plot.segments.push_back(std::move(s));
    }
    for (auto i : rest.interludes) {
        i.after_segment += 1;
        plot.interludes.push_back(std::move(i));
    }
    plot.summary = rest.summary;
    plot.complete = rest.complete;
    plot.failure = rest.failure;
    return plot;
}

std::vector<EventRecord> after_player(const GamePlot& plot) {
    const auto all = plot.ordered_records();
    auto it = std::find_if(all.begin(), all.end(), [](const EventRecord& r) { return r.origin == Origin::player; });
    while (it != all.end() && it->origin == Origin::player) ++it;
    return {it, all.end()};
}

} // namespace

ImpactReport eval_impact(const Outline& outline, const StoryDomain& domain, const WorldState& initial,
                         const ImpactOptions& options, Provider& provider) {
    validate_outline(outline);
    if (outline.events.size() < 2) throw ValidationError("outline.events", "impact needs at least two events");
    if (options.batch < 1) throw ValidationError("batch", "must be positive");
    validate_config(options.config);

    ImpactReport report;
    report.player = options.player.empty() ? resolve_player_character(NarrativeSpace{}, domain) : options.player;

    CompileContext ctx{domain, provider, options.config, "impact.act1.", &outline};
    const auto act1 = compile_event(ctx, 0, outline.events[0].text, initial);
    PlotSegment first;
    first.event_text = outline.events[0].text;
    first.records = act1.records;
    first.iteration = act1.plan.iteration;
    const auto& world = act1.world;
    if (!world.alive.at(report.player)) throw PreconditionError("the player character died in the first act");

    report.victim = options.victim.empty() ? first_other(domain, world, {report.player}) : options.victim;
    report.helper =
        options.helper.empty() ? first_other(domain, world, {report.player, report.victim}) : options.helper;
    for (const auto& id : {report.victim, report.helper}) {
        if (!domain.find_character(id)) throw ValidationError("character", "unknown character '" + id + "'");
        if (!world.alive.at(id)) throw PreconditionError("'" + id + "' is already dead after the first act");
    }

    const auto* victim = domain.find_character(report.victim);
    report.negative_action =
        approach_and(world, report.player, report.victim, {report.player, "kill", {report.victim}, std::nullopt});
    report.positive_action = approach_and(
        world, report.player, report.helper,
        {report.player, "speakTo", {report.helper, "Please help " + victim->name + ", they are in danger!"},
         std::nullopt});
    const auto negative = apply_player(domain, world, report.negative_action);
    const auto positive = apply_player(domain, world, report.positive_action);

    Outline rest = outline;
    rest.events.erase(rest.events.begin());
    const auto n = static_cast<std::size_t>(options.batch);
    struct Item {
        GamePlot plot;
        std::vector<std::string> warnings;
    };
    auto items = parallel_map<Item>(2 * n, options.jobs, [&](std::size_t k) {
        const bool neg = k < n;
        const auto& branch = neg ? negative : positive;
        const auto prefix = std::string("impact.") + (neg ? "neg" : "pos") + ".b" + std::to_string(k % n) + ".";
        Item out;
        PassivePlayer player;
        const auto tail = run_game_loop(rest, domain, branch.world, report.player, player, provider, options.config,
                                        prefix, &out.warnings);
        if (!tail.complete) out.warnings.push_back(prefix + " incomplete: " + tail.failure);
        out.plot = stitch(first, branch.records, tail);
        return out;
    });
    for (std::size_t k = 0; k < items.size(); ++k) {
        (k < n ? report.negative_plots : report.positive_plots).push_back(std::move(items[k].plot));
        report.warnings.insert(report.warnings.end(), items[k].warnings.begin(), items[k].warnings.end());
    }

    report.world_state_change = world_state_change_rate(report.negative_plots, report.victim);
    report.character_involvement = character_involvement(report.positive_plots, report.player, &domain);
    std::vector<std::string> pos_text, neg_text;
    for (std::size_t b = 0; b < n; ++b) {
        neg_text.push_back(render_records_text(after_player(report.negative_plots[b])));
        pos_text.push_back(render_records_text(after_player(report.positive_plots[b])));
        report.persistence.push_back(world_state_change_rate({report.negative_plots[b]}, report.victim));
        report.involvement.push_back(character_involvement({report.positive_plots[b]}, report.player, &domain));
        const auto d = divergence_after_actions({pos_text.back()}, {neg_text.back()});
        report.divergence_d1.push_back(d.d1);
        report.divergence_d_macro.push_back(d.d_macro);
    }
    report.divergence = divergence_after_actions(pos_text, neg_text);
    return report;
}

json to_json(const AbstractionReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"level", to_string(row.level)},
                        {"outlines", row.outlines},
                        {"concreteness", mean_std_json(row.concreteness)},
                        {"imageability", mean_std_json(row.imageability)}});
    return {{"report", "abstraction"}, {"stories", r.stories}, {"levels", rows}, {"warnings", r.warnings}};
}

json to_json(const DiversityReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"outline", row.outline},
                        {"plots", row.plots},
                        {"d1", row.diversity.d1},
                        {"d_macro", row.diversity.d_macro}});
    return {{"report", "diversity"},
            {"outlines", rows},
            {"d1", mean_std_json(r.d1)},
            {"d_macro", mean_std_json(r.d_macro)},
            {"warnings", r.warnings}};
}

json to_json(const ImpactReport& r) {
    json neg = json::array(), pos = json::array();
    for (const auto& a : r.negative_action) neg.push_back(action_to_json(a));
    for (const auto& a : r.positive_action) pos.push_back(action_to_json(a));
    return {{"report", "impact"},
            {"player", r.player},
            {"victim", r.victim},
            {"helper", r.helper},
            {"batch", r.negative_plots.size()},
            {"negative_action", neg},
            {"positive_action", pos},
            {"world_state_change", {{"rate", r.world_state_change}, {"per_plot", mean_std_json(mean_std(r.persistence))}}},
            {"character_involvement",
             {{"mean", r.character_involvement}, {"per_plot", mean_std_json(mean_std(r.involvement))}}},
            {"divergence",
             {{"d1", r.divergence.d1},
              {"d_macro", r.divergence.d_macro},
              {"paired_d1", mean_std_json(mean_std(r.divergence_d1))},
              {"paired_d_macro", mean_std_json(mean_std(r.divergence_d_macro))}}},
            {"warnings", r.warnings}};
}

std::string to_table(const AbstractionReport& r) {
    std::ostringstream out;
    out << "Abstraction over " << r.stories << " stories\n";
    out << pad("level", 10) << pad("n", 6) << pad("concreteness", 16) << "imageability\n";
    for (const auto& row : r.rows)
        out << pad(std::string(to_string(row.level)), 10) << pad(std::to_string(row.outlines), 6)
            << pad(plus_minus(row.concreteness, 2), 16) << plus_minus(row.imageability, 1) << "\n";
    return out.str();
}

std::string to_table(const DiversityReport& r) {
    std::ostringstream out;
    out << pad("outline", 28) << pad("plots", 7) << pad("d1", 12) << "d_macro\n";
    char buf[64];
    for (const auto& row : r.rows) {
        out << pad(row.outline, 28) << pad(std::to_string(row.plots.size()), 7);
        std::snprintf(buf, sizeof buf, "%-12.4f%.4f\n", row.diversity.d1, row.diversity.d_macro);
        out << buf;
    }
    out << pad("all", 35) << pad(plus_minus(r.d1, 2), 12) << plus_minus(r.d_macro, 2) << "\n";
    return out.str();
}

std::string to_table(const ImpactReport& r) {
    std::ostringstream out;
    char buf[160];
    out << "Player " << r.player << ", victim " << r.victim << ", helper " << r.helper << ", batch "
        << r.negative_plots.size() << "\n";
    std::snprintf(buf, sizeof buf, "%-28s%.2f (%s)\n", "world-state change", r.world_state_change,
                  plus_minus(mean_std(r.persistence), 2).c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "%-28s%.2f (%s)\n", "character involvement", r.character_involvement,
                  plus_minus(mean_std(r.involvement), 2).c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "%-28sd1 %.2f  d_macro %.2f\n", "divergence", r.divergence.d1,
                  r.divergence.d_macro);
    out << buf;
    return out.str();
}

} // namespace loom::tools
