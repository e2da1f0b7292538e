#include "loom/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "loom/llm.hpp"

namespace loom {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (c == '\'') continue;
        if (c >= 0x80 || std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

using Tokens = std::vector<std::string>;

double f_measure(double overlap, double cand, double ref) {
    if (overlap <= 0 || cand <= 0 || ref <= 0) return 0;
    const double p = overlap / cand;
    const double r = overlap / ref;
    return 2 * p * r / (p + r);
}

double rouge_n(const Tokens& cand, const Tokens& ref, std::size_t n) {
    std::map<std::vector<std::string>, int> c_counts;
    std::map<std::vector<std::string>, int> r_counts;
    auto count = [n](const Tokens& t, auto& into) {
        std::size_t total = 0;
        for (std::size_t i = 0; i + n <= t.size(); ++i) {
            ++into[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
            ++total;
        }
        return total;
    };
    const auto c_total = count(cand, c_counts);
    const auto r_total = count(ref, r_counts);
    if (c_total == 0 && r_total == 0) return cand == ref ? 1.0 : 0.0;
    double overlap = 0;
    for (const auto& [gram, k] : c_counts)
        if (auto it = r_counts.find(gram); it != r_counts.end()) overlap += std::min(k, it->second);
    return f_measure(overlap, static_cast<double>(c_total), static_cast<double>(r_total));
}

double rouge_l(const Tokens& cand, const Tokens& ref) {
    std::vector<std::size_t> prev(ref.size() + 1, 0), cur(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j)
            cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return f_measure(static_cast<double>(prev[ref.size()]), static_cast<double>(cand.size()),
                     static_cast<double>(ref.size()));
}

double parse_score(const std::string& raw) {
    static const std::regex number(R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
    std::smatch m;
    if (!std::regex_search(raw, m, number)) throw ParseError("answer contains no number");
    const double v = std::stod(m.str());
    if (!std::isfinite(v)) throw ParseError("score is not finite");
    return v;
}

double judged_score(Provider& provider, CompletionRequest req, std::vector<std::string>* warnings) {
    req.temperature = judging_temperature;
    std::function<double(const std::string&)> parse = parse_score;
    const double v = complete_parsed(provider, req, parse);
    const double clamped = std::clamp(v, 0.0, 1.0);
    if (clamped != v && warnings) {
        std::ostringstream msg;
        msg << "score " << v << " from '" << req.tag << "' clamped to " << clamped;
        warnings->push_back(msg.str());
    }
    return clamped;
}

std::string or_nothing(std::string_view text) {
    return text.empty() ? std::string("(nothing happened)") : std::string(text);
}

std::string stage_suffix(double stage) {
    return stage >= 1.0 ? std::string() : ".p" + std::to_string(static_cast<int>(std::lround(stage * 100)));
}

} // namespace

RougeScores rouge_scores(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
    RougeScores s;
    if (candidate.empty() || reference.empty()) {
        const double v = candidate.empty() && reference.empty() ? 1.0 : 0.0;
        s.r1 = s.r2 = s.rL = s.r_macro = v;
    } else {
        s.r1 = rouge_n(candidate, reference, 1);
        s.r2 = rouge_n(candidate, reference, 2);
        s.rL = rouge_l(candidate, reference);
        s.r_macro = (s.r1 + s.r2 + s.rL) / 3.0;
    }
    s.d1 = 1.0 - s.r1;
    s.d_macro = 1.0 - s.r_macro;
    return s;
}

RougeScores rouge_scores(std::string_view candidate, std::string_view reference) {
    return rouge_scores(tokenize(candidate), tokenize(reference));
}

DistancePair plot_diversity(const std::vector<std::string>& plots) {
    const auto n = plots.size();
    if (n < 2) throw ValidationError("plots", "at least two plots are required");
    std::vector<Tokens> toks;
    for (const auto& p : plots) toks.push_back(tokenize(p));
    std::vector<std::vector<RougeScores>> pair(n, std::vector<RougeScores>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pair[i][j] = pair[j][i] = rouge_scores(toks[i], toks[j]);
    DistancePair out;
    for (std::size_t i = 0; i < n; ++i) {
        double d1 = 0, dm = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            d1 += pair[i][j].d1;
            dm += pair[i][j].d_macro;
        }
        out.d1 += d1 / static_cast<double>(n - 1);
        out.d_macro += dm / static_cast<double>(n - 1);
    }
    out.d1 /= static_cast<double>(n);
    out.d_macro /= static_cast<double>(n);
    return out;
}

DistancePair divergence_after_actions(const std::vector<std::string>& positive,
                                      const std::vector<std::string>& negative) {
    if (positive.empty()) throw ValidationError("positive", "no plots");
    if (negative.empty()) throw ValidationError("negative", "no plots");
    DistancePair out;
    for (const auto& p : positive) {
        const auto tp = tokenize(p);
        for (const auto& q : negative) {
            const auto s = rouge_scores(tp, tokenize(q));
            out.d1 += s.d1;
            out.d_macro += s.d_macro;
        }
    }
    const auto pairs = static_cast<double>(positive.size() * negative.size());
    out.d1 /= pairs;
    out.d_macro /= pairs;
    return out;
}

double intent_distance(std::string_view plot_text, std::string_view moral, Provider& provider,
                       const std::string& tag, std::vector<std::string>* warnings) {
    if (moral.empty()) throw ValidationError("moral", "empty moral");
    CompletionRequest req;
    req.template_id = "intent_distance";
    req.variables = {{"moral", std::string(moral)}, {"plot", or_nothing(plot_text)}};
    req.tag = tag;
    return judged_score(provider, std::move(req), warnings);
}

double emergence_distance(std::string_view variant_text, std::string_view pivot_text, Provider& provider,
                          const std::string& tag, std::vector<std::string>* warnings) {
    if (variant_text == pivot_text) return 0.0;
    CompletionRequest compare;
    compare.template_id = "emergence_compare";
    compare.variables = {{"pivot", or_nothing(pivot_text)}, {"plot", or_nothing(variant_text)}};
    compare.temperature = judging_temperature;
    compare.tag = tag + ".compare";
    const auto deviations = complete(provider, compare);

    CompletionRequest score;
    score.template_id = "emergence_score";
    score.variables = compare.variables;
    score.variables["deviations"] = deviations;
    score.tag = tag + ".score";
    return judged_score(provider, std::move(score), warnings);
}

double intent_distance(const GamePlot& variant, std::string_view moral, Provider& provider, const std::string& tag,
                       std::vector<std::string>* warnings) {
    return intent_distance(render_plot_text(variant), moral, provider, tag, warnings);
}

double emergence_distance(const GamePlot& variant, const GamePlot& pivot, Provider& provider,
                          const std::string& tag, std::vector<std::string>* warnings) {
    return emergence_distance(render_plot_text(variant), render_plot_text(pivot), provider, tag, warnings);
}

std::string plot_prefix_text(const GamePlot& plot, double fraction) {
    auto records = plot.ordered_records();
    const auto keep = static_cast<std::size_t>(std::ceil(std::clamp(fraction, 0.0, 1.0) * records.size() - 1e-9));
    records.resize(std::min(keep, records.size()));
    return render_records_text(records);
}

std::vector<ProgressionPoint> progression_series(const GamePlot& variant, const GamePlot& pivot,
                                                 std::string_view moral, Provider& provider,
                                                 const std::string& tag, std::vector<std::string>* warnings) {
    std::vector<ProgressionPoint> out;
    for (double stage : progression_stages) {
        const auto v = plot_prefix_text(variant, stage);
        const auto p = plot_prefix_text(pivot, stage);
        const auto suffix = stage_suffix(stage);
        ProgressionPoint point;
        point.stage = stage;
        point.intent_distance = intent_distance(v, moral, provider, tag + ".intent" + suffix, warnings);
        point.emergence_distance = emergence_distance(v, p, provider, tag + ".emergence" + suffix, warnings);
        out.push_back(point);
    }
    return out;
}

std::string_view to_string(LexiconKind kind) {
    return kind == LexiconKind::concreteness ? "concreteness" : "imageability";
}

LexiconKind lexicon_kind_from_string(std::string_view text) {
    if (text == "concreteness") return LexiconKind::concreteness;
    if (text == "imageability") return LexiconKind::imageability;
    throw ParseError("unknown lexicon kind '" + std::string(text) + "'");
}

Lexicon Lexicon::parse(LexiconKind kind, std::string_view tsv, std::string_view stopwords) {
    Lexicon lex;
    lex.kind = kind;
    std::istringstream in{std::string(tsv)};
    std::string line;
    int line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        const auto path = "line " + std::to_string(line_no);
        if (tab == std::string::npos) throw ParseError(path + ": expected word<TAB>score");
        std::string word = line.substr(0, tab);
        const std::string score_text = line.substr(tab + 1, line.find('\t', tab + 1) - tab - 1);
        std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
        double score = 0;
        try {
            std::size_t used = 0;
            score = std::stod(score_text, &used);
        } catch (const std::exception&) {
            if (first) {
                first = false;
                continue;
            }
            throw ParseError(path + ": score '" + score_text + "' is not a number");
        }
        first = false;
        if (!std::isfinite(score)) throw ValidationError(path, "score is not finite");
        lex.entries[word] = score;
    }
    std::istringstream sw{std::string(stopwords)};
    while (std::getline(sw, line)) {
        for (auto& t : tokenize(line)) lex.stopwords.insert(t);
    }
    return lex;
}

Lexicon Lexicon::load(LexiconKind kind, const std::filesystem::path& tsv, const std::filesystem::path& stopwords) {
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw NotFoundError("cannot read '" + p.string() + "'");
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    return parse(kind, slurp(tsv), stopwords.empty() ? std::string() : slurp(stopwords));
}

namespace {

LexicalScore lexical_score(std::string_view text, const Lexicon& lexicon, LexiconKind expected) {
    if (lexicon.kind != expected)
        throw ValidationError("lexicon", "expected a " + std::string(to_string(expected)) + " lexicon, got " +
                                             std::string(to_string(lexicon.kind)));
    LexicalScore s;
    double sum = 0;
    for (const auto& t : tokenize(text)) {
        if (lexicon.stopwords.count(t)) continue;
        ++s.considered;
        if (auto it = lexicon.entries.find(t); it != lexicon.entries.end()) {
            sum += it->second;
            ++s.scored;
        }
    }
    if (s.scored == 0) throw ValidationError("text", "no scorable tokens");
    s.value = sum / static_cast<double>(s.scored);
    s.coverage = static_cast<double>(s.scored) / static_cast<double>(s.considered);
    return s;
}

} // namespace

LexicalScore concreteness_rate(std::string_view text, const Lexicon& lexicon) {
    return lexical_score(text, lexicon, LexiconKind::concreteness);
}

LexicalScore imageability_score(std::string_view text, const Lexicon& lexicon) {
    return lexical_score(text, lexicon, LexiconKind::imageability);
}

double world_state_change_rate(const std::vector<GamePlot>& plots, const CharacterId& victim) {
    if (plots.empty()) throw ValidationError("plots", "no plots");
    const auto alive_var = "alive." + victim;
    int persistent = 0;
    for (std::size_t p = 0; p < plots.size(); ++p) {
        const auto records = plots[p].ordered_records();
        std::optional<std::size_t> death;
        for (std::size_t i = 0; i < records.size() && !death; ++i)
            for (const auto& d : records[i].deltas)
                if (d.variable == alive_var && d.after == false) death = i;
        if (!death)
            throw ValidationError("plots[" + std::to_string(p) + "]", "'" + victim + "' is never killed");
        bool reappears = false;
        for (std::size_t i = *death + 1; i < records.size(); ++i)
            if (records[i].action.subject == victim) reappears = true;
        if (!reappears) ++persistent;
    }
    return static_cast<double>(persistent) / static_cast<double>(plots.size());
}

double character_involvement(const std::vector<GamePlot>& plots, const CharacterId& player_character,
                             const StoryDomain* domain) {
    if (plots.empty()) return 0.0;
    auto involves = [&](const EventRecord& r) {
        if (r.action.subject == player_character) return true;
        const ActionSpec* spec = domain ? domain->find_action(r.action.action) : nullptr;
        for (std::size_t i = 0; i < r.action.arguments.size(); ++i) {
            if (spec && (i >= spec->parameters.size() || spec->parameters[i].kind != ParamKind::character)) continue;
            if (r.action.arguments[i] == player_character) return true;
        }
        return false;
    };
    double total = 0;
    for (const auto& plot : plots) {
        const auto records = plot.ordered_records();
        auto first_player = std::find_if(records.begin(), records.end(),
                                         [](const EventRecord& r) { return r.origin == Origin::player; });
        auto from = first_player == records.end() ? records.begin() : first_player + 1;
        total += static_cast<double>(std::count_if(from, records.end(), [&](const EventRecord& r) {
            return r.origin != Origin::player && involves(r);
        }));
    }
    return total / static_cast<double>(plots.size());
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

} // namespace loom
