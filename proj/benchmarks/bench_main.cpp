#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "loom/domain.hpp"
#include "loom/metrics.hpp"
#include "loom/narrative_graph.hpp"
#include "loom/world.hpp"

using namespace loom;

namespace {

const StoryDomain& forest() {
    static const StoryDomain d =
        load_domain_file(std::filesystem::path(LOOM_BENCH_DATA_DIR) / "domains" / "fairytale_forest.json");
    return d;
}

std::vector<NodePath> random_paths(std::mt19937& gen, int n_paths, int length, int alphabet) {
    std::vector<NodePath> paths;
    for (int p = 0; p < n_paths; ++p) {
        std::vector<std::string> events;
        for (int i = 0; i < length; ++i) events.push_back("event " + std::to_string(gen() % alphabet));
        paths.push_back(path_from_texts(events, "p" + std::to_string(p) + "."));
    }
    return paths;
}

std::string random_text(std::mt19937& gen, int words) {
    static const char* vocab[] = {"the", "ant", "dove", "hunter", "brook", "forest", "saved", "attacked",
                                  "moved", "said", "to", "at", "witch", "deer", "village", "mountain"};
    std::string out;
    for (int i = 0; i < words; ++i) {
        out += vocab[gen() % std::size(vocab)];
        out += ' ';
    }
    return out;
}

void BM_MergePaths(benchmark::State& state) {
    std::mt19937 gen(42);
    const auto paths = random_paths(gen, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 24);
    ExactComparator cmp;
    for (auto _ : state) benchmark::DoNotOptimize(merge_paths(paths, cmp));
    state.SetComplexityN(state.range(0) * state.range(1));
}
BENCHMARK(BM_MergePaths)->Args({10, 8})->Args({40, 8})->Args({100, 12})->Complexity();

void BM_RougeScores(benchmark::State& state) {
    std::mt19937 gen(43);
    const auto a = random_text(gen, static_cast<int>(state.range(0)));
    const auto b = random_text(gen, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(rouge_scores(a, b));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RougeScores)->Range(16, 1024)->Complexity();

void BM_PlotDiversity(benchmark::State& state) {
    std::mt19937 gen(44);
    std::vector<std::string> plots;
    for (int i = 0; i < state.range(0); ++i) plots.push_back(random_text(gen, 120));
    for (auto _ : state) benchmark::DoNotOptimize(plot_diversity(plots));
}
BENCHMARK(BM_PlotDiversity)->Arg(5)->Arg(20);

void BM_Execute(benchmark::State& state) {
    const auto& d = forest();
    const auto w = init_world(d);
    const std::vector<ActionInstance> actions = {
        parse_action_call("dove", "moveTo(brook)"),
        parse_action_call("ant", "speakTo(dove, \"hello there\")"),
        parse_action_call("ant", "attack(dove)"),
        parse_action_call("cat", "think(\"what a day\")"),
    };
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& a = actions[i++ % actions.size()];
        if (is_executable(d, w, a)) benchmark::DoNotOptimize(execute(d, w, a));
    }
}
BENCHMARK(BM_Execute);

void BM_ReplayDeltas(benchmark::State& state) {
    const auto& d = forest();
    const auto w0 = init_world(d);
    auto w = w0;
    std::vector<Delta> deltas;
    const char* locations[] = {"brook", "forest", "village", "mountain"};
    for (int i = 0; i < state.range(0); ++i) {
        const auto t = execute(d, w, parse_action_call("deer", std::string("moveTo(") + locations[i % 4] + ")"));
        deltas.insert(deltas.end(), t.record.deltas.begin(), t.record.deltas.end());
        w = t.world;
    }
    for (auto _ : state) benchmark::DoNotOptimize(apply_deltas(w0, deltas));
}
BENCHMARK(BM_ReplayDeltas)->Arg(10)->Arg(100);

} // namespace
BENCHMARK_MAIN();
