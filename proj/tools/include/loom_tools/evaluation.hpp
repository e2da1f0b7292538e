#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/abstraction.hpp"
#include "loom/compiler.hpp"
#include "loom/metrics.hpp"

namespace loom::tools {

// Runs fn(0..n-1) on up to `jobs` threads. Results keep index order.
template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, int jobs, F fn) {
    std::vector<std::optional<T>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = static_cast<std::size_t>(std::clamp(jobs, 1, 64));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

struct AbstractionReport {
    struct Row {
        AbstractionLevel level;
        MeanStd concreteness;
        MeanStd imageability;
        std::size_t outlines = 0;
    };
    std::vector<Row> rows;
    std::size_t stories = 0;
    std::vector<std::string> warnings;
};

struct AbstractionOptions {
    std::vector<AbstractionLevel> levels = {AbstractionLevel::scene, AbstractionLevel::sequence, AbstractionLevel::act};
    std::filesystem::path concreteness_lexicon;
    std::filesystem::path imageability_lexicon;
    std::filesystem::path stopwords;
    int jobs = 4;
};

// One outline chain per story; every requested level is scored from the
// ladder candidates of that chain.
AbstractionReport eval_abstraction(const std::vector<std::string>& stories, const AbstractionOptions& options,
                                   Provider& provider);

struct DiversityReport {
    struct Row {
        std::string outline;
        std::vector<std::string> plots;
        DistancePair diversity;
    };
    std::vector<Row> rows;
    MeanStd d1;
    MeanStd d_macro;
    std::vector<std::string> warnings;
};

struct DiversityOptions {
    int plots_per_outline = 20;
    CompilerConfig config;
    // When set, non-player characters start at random locations.
    std::optional<unsigned> placement_seed;
    int jobs = 4;
};

// Plot j of outline i is played by a proxy cycling positive, negative,
// roleplayer, under tag prefix "o{i}.p{j}.".
DiversityReport eval_diversity(const std::vector<std::pair<std::string, Outline>>& outlines,
                               const StoryDomain& domain, const DiversityOptions& options, Provider& provider);

struct ImpactOptions {
    int batch = 20;
    CharacterId player;
    CharacterId victim;
    CharacterId helper;
    CompilerConfig config;
    int jobs = 4;
};

struct ImpactReport {
    CharacterId player;
    CharacterId victim;
    CharacterId helper;
    std::vector<ActionInstance> negative_action;
    std::vector<ActionInstance> positive_action;
    std::vector<double> persistence;
    std::vector<double> involvement;
    std::vector<double> divergence_d1;
    std::vector<double> divergence_d_macro;
    double world_state_change = 0;
    double character_involvement = 0;
    DistancePair divergence;
    std::vector<GamePlot> negative_plots;
    std::vector<GamePlot> positive_plots;
    std::vector<std::string> warnings;
};

// Compiles the first outline event, then branches: the player kills the
// victim, or asks the helper to save the victim. Each branch continues
// through the remaining events `batch` times with a passive player.
ImpactReport eval_impact(const Outline& outline, const StoryDomain& domain, const WorldState& initial,
                         const ImpactOptions& options, Provider& provider);

nlohmann::json to_json(const AbstractionReport& r);
nlohmann::json to_json(const DiversityReport& r);
nlohmann::json to_json(const ImpactReport& r);

std::string to_table(const AbstractionReport& r);
std::string to_table(const DiversityReport& r);
std::string to_table(const ImpactReport& r);

// "0.590±0.010"
std::string plus_minus(const MeanStd& m, int digits = 3);

} // namespace loom::tools

