#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/world.hpp"

namespace loom {

// The records that act out one outline event.
struct PlotSegment {
    int event_index = 0;
    std::string event_text;
    std::vector<EventRecord> records;
    // Generate/review round that produced the executed plan (1-based).
    int iteration = 1;
    // Set when the player's preceding interlude already acted the event out;
    // `cited_player_records` then index into that interlude and `records`
    // stays empty.
    bool fulfilled_by_player = false;
    std::vector<int> cited_player_records;

    bool operator==(const PlotSegment&) const = default;
};

// Free player/NPC actions between segments. `after_segment` of -1 places the
// interlude before the first segment.
struct Interlude {
    int after_segment = 0;
    std::vector<EventRecord> records;

    bool operator==(const Interlude&) const = default;
};

struct GamePlot {
    std::vector<PlotSegment> segments;
    std::vector<Interlude> interludes;
    std::string summary;
    bool complete = true;
    std::string failure;

    // Every executed record in execution order.
    std::vector<EventRecord> ordered_records() const;

    bool operator==(const GamePlot&) const = default;
};

nlohmann::json plot_to_json(const GamePlot& plot);
GamePlot plot_from_json(const nlohmann::json& doc);

// "subject action(args)" per record, one per line, no thoughts. This is the
// text the diversity metrics compare.
std::string render_plot_text(const GamePlot& plot);
std::string render_records_text(const std::vector<EventRecord>& records);

// Human-readable export with "New Event is Happening" separators, player
// blocks, thoughts and the closing summary.
std::string render_plot_story(const GamePlot& plot);

} // namespace loom
