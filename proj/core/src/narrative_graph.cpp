#include "loom/narrative_graph.hpp"

#include <algorithm>
#include <set>

#include "loom/llm.hpp"

namespace loom {

using nlohmann::json;

namespace {

std::string record_label(const EventRecord& r) {
    return r.action.subject + " " + format_action_call(r.action) + (r.location.empty() ? "" : " at " + r.location);
}

} // namespace

NodePath path_from_plot(const GamePlot& plot, const std::string& id_prefix) {
    NodePath out;
    const auto records = plot.ordered_records();
    for (std::size_t i = 0; i < records.size(); ++i)
        out.push_back({id_prefix + "e" + std::to_string(i), record_label(records[i]), records[i]});
    return out;
}

NodePath path_from_texts(const std::vector<std::string>& events, const std::string& id_prefix) {
    NodePath out;
    for (std::size_t i = 0; i < events.size(); ++i)
        out.push_back({id_prefix + "e" + std::to_string(i), events[i], std::nullopt});
    return out;
}

bool exact_equal(const EventNode& a, const EventNode& b) {
    if (a.record && b.record) {
        const auto& x = *a.record;
        const auto& y = *b.record;
        return x.action.subject == y.action.subject && x.action.action == y.action.action &&
               x.action.arguments == y.action.arguments && x.location == y.location;
    }
    return a.label == b.label;
}

bool JudgedComparator::same(const EventNode& a, const EventNode& b) {
    if (exact_equal(a, b)) return true;
    auto key = std::minmax(a.label, b.label);
    std::pair<std::string, std::string> k{key.first, key.second};
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(k); it != memo_.end()) return it->second;

    CompletionRequest req;
    req.template_id = "event_equality";
    req.variables = {{"first", k.first}, {"second", k.second}};
    req.temperature = judging_temperature;
    req.tag = tag_prefix_ + ":" + k.first + "|" + k.second;
    StructuredSchema schema{"{\"same\": bool}", [](const json& doc) {
                                if (!doc.is_object() || !doc.contains("same") || !doc["same"].is_boolean())
                                    throw ParseError("expected {\"same\": true|false}");
                            }};
    ++calls_;
    const bool same = complete_structured(provider_, req, schema)["same"].get<bool>();
    memo_.emplace(k, same);
    return same;
}

std::size_t JudgedComparator::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

bool events_equal(const EventNode& a, const EventNode& b, EventComparator& comparator) {
    return comparator.same(a, b);
}

MergeResult merge_paths(const std::vector<NodePath>& paths, EventComparator& comparator) {
    struct Slot {
        std::vector<std::string> nodes;
        std::vector<std::pair<std::string, std::string>> edges;
    };
    // Graph slots are never reused: a union tombstones its inputs, so graph
    // indices held in `graph_of` stay meaningful until they are rewritten.
    std::vector<std::optional<Slot>> slots;
    std::vector<std::string> known;
    std::map<std::string, std::size_t> graph_of;
    MergeResult result;
    std::set<std::string> input_ids;

    auto add_edges = [](Slot& slot, const std::vector<std::pair<std::string, std::string>>& edges) {
        for (const auto& e : edges)
            if (std::find(slot.edges.begin(), slot.edges.end(), e) == slot.edges.end()) slot.edges.push_back(e);
    };
    auto add_nodes = [](Slot& slot, const std::vector<std::string>& nodes) {
        for (const auto& n : nodes)
            if (std::find(slot.nodes.begin(), slot.nodes.end(), n) == slot.nodes.end()) slot.nodes.push_back(n);
    };

    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& path = paths[p];
        if (path.empty()) continue;
        std::set<std::size_t> graph_indices;
        std::vector<std::string> path_canon;
        std::vector<std::string> fresh;
        for (const auto& node : path) {
            if (node.id.empty() || !input_ids.insert(node.id).second)
                throw ValidationError("paths[" + std::to_string(p) + "]",
                                      node.id.empty() ? "node without id" : "duplicate node id '" + node.id + "'");
            std::optional<std::string> canon;
            for (const auto& k : known) {
                if (comparator.same(node, result.nodes.at(k))) {
                    canon = k;
                    graph_indices.insert(graph_of.at(k));
                    break;
                }
            }
            if (!canon)
                for (const auto& k : fresh)
                    if (comparator.same(node, result.nodes.at(k))) {
                        canon = k;
                        break;
                    }
            if (!canon) {
                canon = node.id;
                fresh.push_back(node.id);
                result.nodes.emplace(node.id, node);
            }
            result.canonical[node.id] = *canon;
            path_canon.push_back(*canon);
        }

        std::vector<std::string> nodes;
        std::vector<std::pair<std::string, std::string>> edges;
        for (std::size_t i = 0; i < path_canon.size(); ++i) {
            if (std::find(nodes.begin(), nodes.end(), path_canon[i]) == nodes.end()) nodes.push_back(path_canon[i]);
            if (i > 0 && path_canon[i - 1] != path_canon[i]) {
                std::pair<std::string, std::string> e{path_canon[i - 1], path_canon[i]};
                if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(e);
            }
        }

        std::size_t target;
        if (graph_indices.size() == 1) {
            target = *graph_indices.begin();
        } else {
            Slot merged;
            for (auto g : graph_indices) {
                add_nodes(merged, slots[g]->nodes);
                add_edges(merged, slots[g]->edges);
                slots[g].reset();
            }
            slots.push_back(std::move(merged));
            target = slots.size() - 1;
        }
        add_nodes(*slots[target], nodes);
        add_edges(*slots[target], edges);
        for (const auto& n : slots[target]->nodes) graph_of[n] = target;
        known.insert(known.end(), fresh.begin(), fresh.end());
    }

    for (auto& slot : slots) {
        if (!slot) continue;
        const auto index = result.graphs.size();
        for (const auto& n : slot->nodes) result.event_to_graph[n] = index;
        result.graphs.push_back({std::move(slot->nodes), std::move(slot->edges)});
    }
    return result;
}

json export_graph(const MergeResult& result) {
    json nodes = json::array();
    json edges = json::array();
    json graphs = json::array();
    for (std::size_t g = 0; g < result.graphs.size(); ++g) {
        const auto& graph = result.graphs[g];
        for (const auto& id : graph.nodes)
            nodes.push_back({{"id", id}, {"label", result.nodes.at(id).label}, {"graph", g}});
        for (const auto& [from, to] : graph.edges) edges.push_back({{"from", from}, {"to", to}});
        graphs.push_back(graph.nodes);
    }
    return {{"nodes", nodes}, {"edges", edges}, {"graphs", graphs}};
}

namespace {

std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string export_dot(const MergeResult& result) {
    std::string out = "digraph narrative {\n  node [shape=box];\n";
    for (std::size_t g = 0; g < result.graphs.size(); ++g) {
        const auto& graph = result.graphs[g];
        out += "  subgraph cluster_" + std::to_string(g) + " {\n";
        for (const auto& id : graph.nodes)
            out += "    " + dot_quote(id) + " [label=" + dot_quote(result.nodes.at(id).label) + "];\n";
        out += "  }\n";
        for (const auto& [from, to] : graph.edges) out += "  " + dot_quote(from) + " -> " + dot_quote(to) + ";\n";
    }
    return out + "}\n";
}

} // namespace loom
