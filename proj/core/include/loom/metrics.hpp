#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "loom/narrative.hpp"
#include "loom/plot.hpp"

namespace loom {

class Provider;

// Lowercase, punctuation replaced by spaces (apostrophes dropped, so
// "dove's" -> "doves"), split on whitespace. Bytes >= 0x80 count as letters.
std::vector<std::string> tokenize(std::string_view text);

struct RougeScores {
    double r1 = 0;
    double r2 = 0;
    double rL = 0;
    // Mean of the three F-measures above.
    double r_macro = 0;
    double d1 = 1;
    double d_macro = 1;
};

// ROUGE-1/2/L F-measures. Two empty texts score 1, an empty text against
// a non-empty one scores 0. When neither side has a bigram, r2 is 1 for
// identical token sequences and 0 otherwise.
RougeScores rouge_scores(std::string_view candidate, std::string_view reference);
RougeScores rouge_scores(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

struct DistancePair {
    double d1 = 0;
    double d_macro = 0;
};

// Mean over plots of each plot's mean distance to the other N-1 plots.
// Throws ValidationError for fewer than two plots.
DistancePair plot_diversity(const std::vector<std::string>& plots);

// Mean distance over all (positive, negative) pairs. Throws ValidationError
// when either list is empty.
DistancePair divergence_after_actions(const std::vector<std::string>& positive,
                                      const std::vector<std::string>& negative);

// Judge-backed distances in [0,1]. Out-of-range scores are clamped and a
// warning is appended; non-numeric answers are re-asked, then raise
// StructuredOutputError.
double intent_distance(std::string_view plot_text, std::string_view moral, Provider& provider,
                       const std::string& tag, std::vector<std::string>* warnings = nullptr);
// Identical texts short-circuit to 0 without a model call.
double emergence_distance(std::string_view variant_text, std::string_view pivot_text, Provider& provider,
                          const std::string& tag, std::vector<std::string>* warnings = nullptr);

double intent_distance(const GamePlot& variant, std::string_view moral, Provider& provider,
                       const std::string& tag, std::vector<std::string>* warnings = nullptr);
double emergence_distance(const GamePlot& variant, const GamePlot& pivot, Provider& provider,
                          const std::string& tag, std::vector<std::string>* warnings = nullptr);

// First ceil(fraction * n) records of the plot, rendered like render_plot_text.
std::string plot_prefix_text(const GamePlot& plot, double fraction);

// Distances on plot prefixes at progression_stages. The last stage uses the
// same tags as the full-plot distances, so it reproduces them.
std::vector<ProgressionPoint> progression_series(const GamePlot& variant, const GamePlot& pivot,
                                                 std::string_view moral, Provider& provider,
                                                 const std::string& tag,
                                                 std::vector<std::string>* warnings = nullptr);

enum class LexiconKind { concreteness, imageability };

std::string_view to_string(LexiconKind kind);
LexiconKind lexicon_kind_from_string(std::string_view text);

struct Lexicon {
    LexiconKind kind = LexiconKind::concreteness;
    std::map<std::string, double> entries;
    std::set<std::string> stopwords;

    // `tsv` holds "word<TAB>score" lines; blank lines, '#' comments and a
    // non-numeric header line are skipped. `stopwords` has one word per line.
    static Lexicon parse(LexiconKind kind, std::string_view tsv, std::string_view stopwords = {});
    static Lexicon load(LexiconKind kind, const std::filesystem::path& tsv,
                        const std::filesystem::path& stopwords = {});
};

struct LexicalScore {
    double value = 0;
    // scored / considered, where considered counts non-stopword tokens.
    double coverage = 0;
    std::size_t scored = 0;
    std::size_t considered = 0;
};

// Mean lexicon score of the non-stopword tokens found in the lexicon.
// Throws ValidationError when the lexicon kind does not match or nothing
// can be scored.
LexicalScore concreteness_rate(std::string_view text, const Lexicon& lexicon);
LexicalScore imageability_score(std::string_view text, const Lexicon& lexicon);

// Fraction of plots in which the victim never acts again after dying.
// Throws ValidationError for an empty list or a plot where the victim
// does not die.
double world_state_change_rate(const std::vector<GamePlot>& plots, const CharacterId& victim);

// Mean per plot of non-player records, after the first player action, whose
// subject or character argument is `player_character`.
double character_involvement(const std::vector<GamePlot>& plots, const CharacterId& player_character,
                             const StoryDomain* domain = nullptr);

struct MeanStd {
    double mean = 0;
    // Sample standard deviation (n - 1); 0 for fewer than two values.
    double stddev = 0;
};

MeanStd mean_std(const std::vector<double>& values);

} // namespace loom
