#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "loom/abstraction.hpp"
#include "loom/llm.hpp"
#include "loom/narrative_graph.hpp"
#include "loom/player_proxy.hpp"
#include "loom/service.hpp"
#include "loom_tools/evaluation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace loom;

namespace {

struct Globals {
    std::string provider = "scripted";
    std::string script;
    unsigned seed = 0;
    std::string out;
    std::string format = "table";
    int jobs = 4;
};

fs::path data_dir() {
    if (const char* env = std::getenv("LOOM_DATA_DIR"); env && *env) return env;
    return LOOM_DEFAULT_DATA_DIR;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::unique_ptr<Provider> provider_for(const Globals& g) {
    std::optional<fs::path> script;
    if (!g.script.empty()) script = g.script;
    return make_provider(g.provider, script);
}

StoryDomain domain_for(const std::string& path) {
    return load_domain_file(path.empty() ? data_dir() / "domains" / "fairytale_forest.json" : fs::path(path));
}

// Documents go to --out when given, otherwise to stdout.
void emit_document(const Globals& g, const json& doc) {
    if (g.out.empty()) {
        std::cout << doc.dump(2) << "\n";
        return;
    }
    std::ofstream(g.out) << doc.dump(2) << "\n";
}

// Reports print in the chosen format; --out always receives the JSON.
void emit_report(const Globals& g, const json& doc, const std::string& table) {
    if (g.format == "json")
        std::cout << doc.dump(2) << "\n";
    else
        std::cout << table;
    if (!g.out.empty()) std::ofstream(g.out) << doc.dump(2) << "\n";
    for (const auto& w : doc.value("warnings", json::array())) std::cerr << "warning: " << w.get<std::string>() << "\n";
}

std::vector<fs::path> files_in(const fs::path& dir, const std::string& extension) {
    if (!fs::is_directory(dir)) throw NotFoundError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == extension) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw ValidationError(dir.string(), "no " + extension + " files");
    return out;
}

// Accepts a list of event-text lists, a list of plots, or a space document.
std::vector<NodePath> load_paths(const json& doc) {
    std::vector<NodePath> paths;
    auto add_plot = [&](const json& plot) {
        paths.push_back(path_from_plot(plot_from_json(plot), "p" + std::to_string(paths.size()) + "."));
    };
    if (doc.is_object() && doc.contains("variants")) {
        const auto space = space_from_json(doc);
        for (const auto* v : space.active_variants()) paths.push_back(path_from_plot(v->plot, v->id + "."));
        return paths;
    }
    if (!doc.is_array()) throw ValidationError("paths", "expected an array of paths");
    for (const auto& p : doc) {
        if (p.is_object()) {
            add_plot(p.contains("plot") ? p.at("plot") : p);
        } else {
            paths.push_back(path_from_texts(p.get<std::vector<std::string>>(), "p" + std::to_string(paths.size()) + "."));
        }
    }
    return paths;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9; }

// Every number in `expected` must be present in `actual` and equal within
// 1e-9; other values must match exactly.
void check_expected(const json& expected, const json& actual, const std::string& path, std::vector<std::string>& diffs) {
    if (expected.is_object()) {
        for (const auto& [k, v] : expected.items()) {
            if (!actual.is_object() || !actual.contains(k))
                diffs.push_back(path + "." + k + " missing");
            else
                check_expected(v, actual.at(k), path + "." + k, diffs);
        }
    } else if (expected.is_array()) {
        if (!actual.is_array() || actual.size() != expected.size()) {
            diffs.push_back(path + " size differs");
            return;
        }
        for (std::size_t i = 0; i < expected.size(); ++i)
            check_expected(expected[i], actual[i], path + "[" + std::to_string(i) + "]", diffs);
    } else if (expected.is_number()) {
        if (!actual.is_number() || !close(expected.get<double>(), actual.get<double>()))
            diffs.push_back(path + ": expected " + expected.dump() + ", got " + actual.dump());
    } else if (expected != actual) {
        diffs.push_back(path + ": expected " + expected.dump() + ", got " + actual.dump());
    }
}

std::vector<AbstractionLevel> parse_levels(const std::string& csv) {
    std::vector<AbstractionLevel> out;
    std::stringstream in(csv);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) out.push_back(abstraction_level_from_string(item));
    return out;
}

CompilerConfig config_for(const std::string& path) {
    return path.empty() ? CompilerConfig{} : config_from_json(read_json(path));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"loom: narrative spaces, game-based plot compilation and evaluation"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--provider", g.provider, "Model provider")->check(CLI::IsMember({"scripted", "http"}));
    app.add_option("--script", g.script, "Scripted provider responses (JSON)");
    app.add_option("--seed", g.seed, "Seed for randomized placements");
    app.add_option("--out", g.out, "Write the result document here");
    app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"table", "json"}));
    app.add_option("--jobs", g.jobs, "Batch parallelism")->check(CLI::PositiveNumber);

    std::function<int()> run;

    // domain validate
    auto* domain_cmd = app.add_subcommand("domain", "Story domain files");
    domain_cmd->require_subcommand(1);
    std::string domain_file;
    auto* validate = domain_cmd->add_subcommand("validate", "Check a domain file");
    validate->add_option("file", domain_file)->required();
    validate->callback([&] {
        run = [&] {
            const auto d = load_domain_file(domain_file);
            std::cout << "ok: " << d.title << " (" << d.characters.size() << " characters, " << d.locations.size()
                      << " locations, " << d.actions.size() << " actions)\n";
            return 0;
        };
    });

    // pivot extract
    std::string domain_path, story_path, variant_id = "pivot";
    auto* pivot_cmd = app.add_subcommand("pivot", "Pivot variants");
    pivot_cmd->require_subcommand(1);
    auto* extract = pivot_cmd->add_subcommand("extract", "Turn a story into a recorded pivot variant");
    extract->add_option("--story", story_path, "Story text file")->required();
    extract->add_option("--domain", domain_path, "Domain file");
    extract->add_option("--id", variant_id, "Variant id");
    extract->callback([&] {
        run = [&] {
            const auto d = domain_for(domain_path);
            auto provider = provider_for(g);
            const auto r = extract_pivot(read_file(story_path), d, *provider, variant_id);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
            emit_document(g, variant_to_json(r.pivot));
            return 0;
        };
    });

    // outline gen
    std::string space_path, level = "act", spec, moral, source = "pivot";
    std::vector<std::string> story_files;
    auto* outline_cmd = app.add_subcommand("outline", "Outlines");
    outline_cmd->require_subcommand(1);
    auto* outline_gen = outline_cmd->add_subcommand("gen", "Outline from a space's variants or from story texts");
    auto* space_opt = outline_gen->add_option("--space", space_path, "Space document");
    outline_gen->add_option("--story", story_files, "Story text files")->excludes(space_opt);
    outline_gen->add_option("--source", source, "With --space: outline the pivot or all active variants")
        ->check(CLI::IsMember({"pivot", "variants"}));
    outline_gen->add_option("--domain", domain_path, "Domain file");
    outline_gen->add_option("--level", level, "beat|scene|sequence|act|story");
    outline_gen->add_option("--spec", spec, "Free-text specification");
    outline_gen->add_option("--moral", moral, "Moral of the story");
    outline_gen->callback([&] {
        run = [&] {
            if (space_path.empty() && story_files.empty())
                throw ValidationError("outline gen", "give --space or --story");
            auto provider = provider_for(g);
            OutlineOptions options;
            if (!spec.empty()) options.user_spec = spec;
            options.moral = moral;
            const auto lvl = abstraction_level_from_string(level);
            OutlineResult r;
            if (!space_path.empty()) {
                const auto space = space_from_json(read_json(space_path));
                if (options.moral.empty()) options.moral = space.moral;
                std::vector<Variant> instances;
                if (source == "pivot")
                    instances.push_back(space.pivot_variant());
                else
                    for (const auto* v : space.active_variants()) instances.push_back(*v);
                r = instances_to_outline(instances, lvl, options, domain_for(domain_path), *provider);
            } else {
                std::vector<std::string> texts;
                for (const auto& f : story_files) texts.push_back(read_file(f));
                const auto d = domain_path.empty() ? std::optional<StoryDomain>() : domain_for(domain_path);
                r = texts_to_outline(texts, lvl, options, d ? &*d : nullptr, *provider);
            }
            emit_document(g, outline_to_json(r.outline));
            return 0;
        };
    });

    // variants gen
    int n_sets = 1;
    bool parallel = false;
    std::string config_path;
    auto* variants_cmd = app.add_subcommand("variants", "Variants");
    variants_cmd->require_subcommand(1);
    auto* variants_gen = variants_cmd->add_subcommand("gen", "Generate proxy-played variants into a space");
    variants_gen->add_option("--space", space_path, "Space document (needs a pivot and an outline)")->required();
    variants_gen->add_option("--sets", n_sets, "Variant sets (3 variants each)")
        ->check(CLI::Range(1, max_variant_sets));
    variants_gen->add_option("--domain", domain_path, "Domain file");
    variants_gen->add_option("--config", config_path, "Compiler configuration (JSON)");
    variants_gen->add_flag("--parallel", parallel, "Play the variants of a batch concurrently");
    variants_gen->callback([&] {
        run = [&] {
            auto space = space_from_json(read_json(space_path));
            const auto d = domain_path.empty() ? domain_for((data_dir() / "domains" / (space.domain_ref + ".json")).string())
                                               : domain_for(domain_path);
            auto provider = provider_for(g);
            VariantOptions options{config_for(config_path), parallel};
            for (auto& v : generate_variants(space, n_sets, d, *provider, options)) {
                for (const auto& w : v.warnings) std::cerr << "warning: " << v.id << ": " << w << "\n";
                space.variants.push_back(std::move(v));
            }
            emit_document(g, space_to_json(space));
            return 0;
        };
    });

    // graph merge
    std::string paths_file, comparator = "exact";
    int expect_graphs = -1;
    bool dot = false;
    auto* graph_cmd = app.add_subcommand("graph", "Narrative graphs");
    graph_cmd->require_subcommand(1);
    auto* merge = graph_cmd->add_subcommand("merge", "Merge narrative paths into graphs");
    merge->add_option("--paths", paths_file, "Paths: event-text lists, plots, or a space document")->required();
    merge->add_option("--comparator", comparator, "exact|judged")->check(CLI::IsMember({"exact", "judged"}));
    merge->add_option("--expect-graphs", expect_graphs, "Fail unless this many graphs result");
    merge->add_flag("--dot", dot, "Print Graphviz instead of JSON");
    merge->callback([&] {
        run = [&] {
            const auto paths = load_paths(read_json(paths_file));
            ExactComparator exact;
            std::unique_ptr<Provider> provider;
            std::unique_ptr<JudgedComparator> judged;
            EventComparator* cmp = &exact;
            if (comparator == "judged") {
                provider = provider_for(g);
                judged = std::make_unique<JudgedComparator>(*provider);
                cmp = judged.get();
            }
            const auto r = merge_paths(paths, *cmp);
            if (dot)
                std::cout << export_dot(r);
            else if (g.format == "json" || !g.out.empty())
                emit_document(g, export_graph(r));
            else
                std::cout << paths.size() << " paths merged into " << r.graphs.size() << " graph(s)\n";
            if (expect_graphs >= 0 && static_cast<int>(r.graphs.size()) != expect_graphs) {
                std::cerr << "expected " << expect_graphs << " graph(s), got " << r.graphs.size() << "\n";
                return 1;
            }
            return 0;
        };
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluation reports");
    eval_cmd->require_subcommand(1);
    std::string expect_file;
    auto check = [&](const json& doc) {
        if (expect_file.empty()) return 0;
        std::vector<std::string> diffs;
        check_expected(read_json(expect_file), doc, "$", diffs);
        for (const auto& d : diffs) std::cerr << "mismatch " << d << "\n";
        return diffs.empty() ? 0 : 1;
    };

    std::string stories_dir, levels_csv = "scene,sequence,act", concreteness_path, imageability_path, stopwords_path;
    auto* abstraction = eval_cmd->add_subcommand("abstraction", "Concreteness and imageability per ladder level");
    abstraction->add_option("--stories", stories_dir, "Directory of .txt stories")->required();
    abstraction->add_option("--levels", levels_csv, "Comma-separated ladder levels");
    abstraction->add_option("--concreteness", concreteness_path, "Concreteness lexicon (word<TAB>score)");
    abstraction->add_option("--imageability", imageability_path, "Imageability lexicon (word<TAB>score)");
    abstraction->add_option("--stopwords", stopwords_path, "Stopword list");
    abstraction->add_option("--expect", expect_file, "Expected report values (JSON subset)");
    abstraction->callback([&] {
        run = [&] {
            const auto lex = data_dir() / "lexicon";
            tools::AbstractionOptions options;
            options.levels = parse_levels(levels_csv);
            options.concreteness_lexicon =
                concreteness_path.empty() ? lex / "concreteness_mini.tsv" : fs::path(concreteness_path);
            options.imageability_lexicon =
                imageability_path.empty() ? lex / "imageability_mini.tsv" : fs::path(imageability_path);
            options.stopwords = stopwords_path.empty() ? lex / "stopwords_en.txt" : fs::path(stopwords_path);
            options.jobs = g.jobs;
            std::vector<std::string> stories;
            for (const auto& f : files_in(stories_dir, ".txt")) stories.push_back(read_file(f));
            auto provider = provider_for(g);
            const auto r = tools::eval_abstraction(stories, options, *provider);
            const auto doc = tools::to_json(r);
            emit_report(g, doc, tools::to_table(r));
            return check(doc);
        };
    });

    std::string outlines_dir;
    int plots_per_outline = 20;
    bool random_placement = false;
    auto* diversity = eval_cmd->add_subcommand("diversity", "Plot diversity per outline");
    diversity->add_option("--outlines", outlines_dir, "Directory of outline .json files")->required();
    diversity->add_option("--plots-per-outline", plots_per_outline, "Plots per outline")->check(CLI::Range(2, 1000));
    diversity->add_option("--domain", domain_path, "Domain file");
    diversity->add_option("--config", config_path, "Compiler configuration (JSON)");
    diversity->add_flag("--random-placement", random_placement, "Scatter non-player characters using --seed");
    diversity->add_option("--expect", expect_file, "Expected report values (JSON subset)");
    diversity->callback([&] {
        run = [&] {
            std::vector<std::pair<std::string, Outline>> outlines;
            for (const auto& f : files_in(outlines_dir, ".json"))
                outlines.emplace_back(f.stem().string(), outline_from_json(read_json(f)));
            tools::DiversityOptions options;
            options.plots_per_outline = plots_per_outline;
            options.config = config_for(config_path);
            if (random_placement) options.placement_seed = g.seed;
            options.jobs = g.jobs;
            auto provider = provider_for(g);
            const auto r = tools::eval_diversity(outlines, domain_for(domain_path), options, *provider);
            const auto doc = tools::to_json(r);
            emit_report(g, doc, tools::to_table(r));
            return check(doc);
        };
    });

    std::string outline_path, player, victim, helper;
    int batch = 20;
    auto* impact = eval_cmd->add_subcommand("impact", "Impact of a negative versus a positive player action");
    impact->add_option("--outline", outline_path, "Outline JSON (two or more events)")->required();
    impact->add_option("--batch", batch, "Follow-up plots per action")->check(CLI::Range(1, 1000));
    impact->add_option("--domain", domain_path, "Domain file");
    impact->add_option("--config", config_path, "Compiler configuration (JSON)");
    impact->add_option("--player", player, "Player character");
    impact->add_option("--victim", victim, "Character the player kills");
    impact->add_option("--helper", helper, "Character the player asks for help");
    impact->add_option("--expect", expect_file, "Expected report values (JSON subset)");
    impact->callback([&] {
        run = [&] {
            const auto d = domain_for(domain_path);
            tools::ImpactOptions options{batch, player, victim, helper, config_for(config_path), g.jobs};
            auto provider = provider_for(g);
            const auto r =
                tools::eval_impact(outline_from_json(read_json(outline_path)), d, init_world(d), options, *provider);
            const auto doc = tools::to_json(r);
            emit_report(g, doc, tools::to_table(r));
            return check(doc);
        };
    });

    // serve
    std::string host = "127.0.0.1", store_dir, domains_dir;
    int port = 8080;
    if (const char* env = std::getenv("PORT"); env && *env) port = std::atoi(env);
    bool synchronous = false;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
    serve->add_option("--data-dir", store_dir, "Document store directory");
    serve->add_option("--domains-dir", domains_dir, "Directory of domain files");
    serve->add_option("--config", config_path, "Compiler configuration (JSON)");
    serve->add_flag("--synchronous", synchronous, "Run jobs inline instead of in the background");
    serve->callback([&] {
        run = [&] {
            auto config = ServiceConfig::from_env();
            if (!store_dir.empty()) config.data_dir = store_dir;
            if (!domains_dir.empty())
                config.domains_dir = domains_dir;
            else if (config.domains_dir.empty())
                config.domains_dir = data_dir() / "domains";
            if (!config_path.empty()) config.compiler = config_for(config_path);
            if (synchronous) config.synchronous = true;
            std::shared_ptr<Provider> provider = provider_for(g);
            Service service(config, provider);
            std::cerr << "listening on http://" << host << ":" << port << "\n";
            service.serve(host, port);
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return run ? run() : 0;
    } catch (const Error& e) {
        std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
