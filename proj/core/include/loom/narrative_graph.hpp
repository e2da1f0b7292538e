#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/plot.hpp"

namespace loom {

class Provider;

// An event on a variant path: an executed record, or abstract event text.
struct EventNode {
    std::string id;
    std::string label;
    std::optional<EventRecord> record;
};

using NodePath = std::vector<EventNode>;

// One node per record, ids "<prefix>e<i>", labels "subject call at location".
NodePath path_from_plot(const GamePlot& plot, const std::string& id_prefix);
NodePath path_from_texts(const std::vector<std::string>& events, const std::string& id_prefix);

class EventComparator {
public:
    virtual ~EventComparator() = default;
    virtual bool same(const EventNode& a, const EventNode& b) = 0;
};

// Structural equality of (subject, action, arguments, location) when both
// nodes carry records, label equality otherwise.
bool exact_equal(const EventNode& a, const EventNode& b);

class ExactComparator : public EventComparator {
public:
    bool same(const EventNode& a, const EventNode& b) override { return exact_equal(a, b); }
};

// Asks the provider, after an exact-match short-circuit. Judgments are
// memoized per unordered label pair; tags read "<prefix>:<label>|<label>".
class JudgedComparator : public EventComparator {
public:
    explicit JudgedComparator(Provider& provider, std::string tag_prefix = "graph.same")
        : provider_(provider), tag_prefix_(std::move(tag_prefix)) {}

    bool same(const EventNode& a, const EventNode& b) override;
    std::size_t calls() const;

private:
    Provider& provider_;
    std::string tag_prefix_;
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, bool> memo_;
    std::size_t calls_ = 0;
};

bool events_equal(const EventNode& a, const EventNode& b, EventComparator& comparator);

struct EventGraph {
    // Canonical node ids, in first-seen order.
    std::vector<std::string> nodes;
    // Consecutive events of some path, after merging equal nodes.
    std::vector<std::pair<std::string, std::string>> edges;
};

struct MergeResult {
    std::vector<EventGraph> graphs;
    // Canonical nodes by id.
    std::map<std::string, EventNode> nodes;
    // Every input node id -> the canonical node it was merged into.
    std::map<std::string, std::string> canonical;
    // Canonical node id -> index into `graphs`.
    std::map<std::string, std::size_t> event_to_graph;
};

// Merges variant paths into event graphs: each path joins every existing
// graph holding an equal event (several such graphs are unioned into one),
// or starts a new graph. A node equals the first known node it matches.
// Throws ValidationError for duplicate node ids.
MergeResult merge_paths(const std::vector<NodePath>& paths, EventComparator& comparator);

// {"nodes":[{id,label,graph}], "edges":[{from,to}], "graphs":[[ids...]]}
nlohmann::json export_graph(const MergeResult& result);
std::string export_dot(const MergeResult& result);

} // namespace loom
