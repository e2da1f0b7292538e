#include "loom/plot.hpp"

#include <map>
#include <sstream>

#include "loom/error.hpp"

namespace loom {

using nlohmann::json;

std::vector<EventRecord> GamePlot::ordered_records() const {
    std::multimap<int, const Interlude*> by_position;
    for (const auto& i : interludes) by_position.emplace(i.after_segment, &i);

    std::vector<EventRecord> out;
    auto emit_interludes = [&](int after) {
        auto [lo, hi] = by_position.equal_range(after);
        for (auto it = lo; it != hi; ++it)
            out.insert(out.end(), it->second->records.begin(), it->second->records.end());
    };
    emit_interludes(-1);
    for (std::size_t s = 0; s < segments.size(); ++s) {
        out.insert(out.end(), segments[s].records.begin(), segments[s].records.end());
        emit_interludes(static_cast<int>(s));
    }
    return out;
}

namespace {

json records_to_json(const std::vector<EventRecord>& records) {
    json out = json::array();
    for (const auto& r : records) out.push_back(record_to_json(r));
    return out;
}

std::vector<EventRecord> records_from_json(const json& doc) {
    std::vector<EventRecord> out;
    for (const auto& r : doc) out.push_back(record_from_json(r));
    return out;
}

} // namespace

json plot_to_json(const GamePlot& plot) {
    json segments = json::array();
    for (const auto& s : plot.segments) {
        json sj{{"event_index", s.event_index},
                {"event", s.event_text},
                {"iteration", s.iteration},
                {"entries", records_to_json(s.records)}};
        if (s.fulfilled_by_player) {
            sj["fulfilled_by_player"] = true;
            sj["cited_player_entries"] = s.cited_player_records;
        }
        segments.push_back(std::move(sj));
    }
    json interludes = json::array();
    for (const auto& i : plot.interludes)
        interludes.push_back({{"after_segment", i.after_segment}, {"entries", records_to_json(i.records)}});
    json doc{{"segments", std::move(segments)},
             {"interludes", std::move(interludes)},
             {"summary", plot.summary},
             {"complete", plot.complete}};
    if (!plot.failure.empty()) doc["failure"] = plot.failure;
    return doc;
}

GamePlot plot_from_json(const json& doc) {
    try {
        GamePlot plot;
        for (const auto& sj : doc.at("segments")) {
            PlotSegment s;
            s.event_index = sj.at("event_index").get<int>();
            s.event_text = sj.value("event", "");
            s.iteration = sj.value("iteration", 1);
            s.records = records_from_json(sj.at("entries"));
            s.fulfilled_by_player = sj.value("fulfilled_by_player", false);
            s.cited_player_records = sj.value("cited_player_entries", std::vector<int>{});
            plot.segments.push_back(std::move(s));
        }
        for (const auto& ij : doc.value("interludes", json::array()))
            plot.interludes.push_back({ij.at("after_segment").get<int>(), records_from_json(ij.at("entries"))});
        plot.summary = doc.value("summary", "");
        plot.complete = doc.value("complete", true);
        plot.failure = doc.value("failure", "");
        return plot;
    } catch (const json::exception& e) {
        throw ParseError(std::string("game plot document: ") + e.what());
    }
}

std::string render_records_text(const std::vector<EventRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.action.subject + " " + format_action_call(r.action);
        out += '\n';
    }
    return out;
}

std::string render_plot_text(const GamePlot& plot) { return render_records_text(plot.ordered_records()); }

namespace {

constexpr std::string_view rule = "------------------------------";

void story_line(std::ostringstream& out, const EventRecord& r) {
    out << r.action.subject << " " << format_action_call(r.action);
    if (r.action.thought && !r.action.thought->empty()) out << " thinking " << *r.action.thought;
    out << "\n";
}

void story_interlude(std::ostringstream& out, const Interlude& i) {
    std::optional<Origin> current;
    for (const auto& r : i.records) {
        if (current != r.origin) {
            current = r.origin;
            out << rule << (r.origin == Origin::player ? " [Player Taking Actions Through Pinpad] "
                                                       : " [Character Simulation] ")
                << rule << "\n";
        }
        story_line(out, r);
    }
}

} // namespace

std::string render_plot_story(const GamePlot& plot) {
    std::ostringstream out;
    std::multimap<int, const Interlude*> by_position;
    for (const auto& i : plot.interludes) by_position.emplace(i.after_segment, &i);
    auto emit = [&](int after) {
        auto [lo, hi] = by_position.equal_range(after);
        for (auto it = lo; it != hi; ++it) story_interlude(out, *it->second);
    };

    emit(-1);
    for (std::size_t s = 0; s < plot.segments.size(); ++s) {
        const auto& seg = plot.segments[s];
        out << rule << " New Event is Happening " << rule << "\n";
        if (!seg.event_text.empty()) out << "(" << seg.event_text << ")\n";
        if (seg.fulfilled_by_player) out << "(acted out by the player's previous actions)\n";
        for (const auto& r : seg.records) story_line(out, r);
        emit(static_cast<int>(s));
    }
    if (!plot.complete) out << rule << " The Narrative Stopped Early " << rule << "\n" << plot.failure << "\n";
    else out << rule << " The End of the Narrative " << rule << "\n";
    if (!plot.summary.empty()) out << "Summary of the story: " << plot.summary << "\n";
    return out.str();
}

} // namespace loom
