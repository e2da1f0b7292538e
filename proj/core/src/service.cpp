#include "loom/service.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "loom/abstraction.hpp"
#include "loom/llm.hpp"
#include "loom/narrative_graph.hpp"
#include "loom/player_proxy.hpp"
#include "loom/session.hpp"

namespace loom {

using nlohmann::json;
namespace fs = std::filesystem;

json error_body(const std::string& code, const std::string& message) {
    return {{"error", {{"code", code}, {"message", message}}}};
}

ServiceConfig ServiceConfig::from_env() {
    ServiceConfig c;
    if (const char* d = std::getenv("DATA_DIR"); d && *d) c.data_dir = d;
    if (const char* d = std::getenv("LOOM_DOMAINS_DIR"); d && *d) c.domains_dir = d;
    return c;
}

// ---- DocumentStore ----

DocumentStore::DocumentStore(fs::path root) : root_(std::move(root)) {}

std::optional<json> DocumentStore::get(const std::string& kind, const std::string& id) const {
    if (id.empty() || !std::all_of(id.begin(), id.end(), [](unsigned char c) {
            return std::isalnum(c) || c == '-' || c == '_';
        }))
        return std::nullopt;
    std::ifstream in(root_ / kind / (id + ".json"));
    if (!in) return std::nullopt;
    std::ostringstream s;
    s << in.rdbuf();
    return json::parse(s.str());
}

void DocumentStore::put(const std::string& kind, const std::string& id, const json& doc) {
    const auto dir = root_ / kind;
    fs::create_directories(dir);
    const auto tmp = dir / (id + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("storage_error", "cannot write " + tmp.string());
        out << doc.dump(2) << "\n";
    }
    fs::rename(tmp, dir / (id + ".json"));
}

std::vector<std::string> DocumentStore::ids(const std::string& kind) const {
    std::vector<std::string> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root_ / kind, ec))
        if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string DocumentStore::next_id(const std::string& kind, const std::string& prefix) {
    std::lock_guard lock(mu_);
    auto it = counters_.find(kind);
    if (it == counters_.end()) {
        int highest = 0;
        for (const auto& id : ids(kind)) {
            if (id.rfind(prefix + "-", 0) != 0) continue;
            try {
                highest = std::max(highest, std::stoi(id.substr(prefix.size() + 1)));
            } catch (const std::exception&) {
            }
        }
        it = counters_.emplace(kind, highest).first;
    }
    return prefix + "-" + std::to_string(++it->second);
}

// ---- WorkQueue ----

WorkQueue::WorkQueue(int workers) {
    for (int i = 0; i < std::max(1, workers); ++i) threads_.emplace_back([this] { run(); });
}

WorkQueue::~WorkQueue() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
}

void WorkQueue::post(std::function<void()> task) {
    {
        std::lock_guard lock(mu_);
        tasks_.push_back(std::move(task));
    }
    cv_.notify_one();
}

void WorkQueue::wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [this] { return tasks_.empty() && running_ == 0; });
}

void WorkQueue::run() {
    for (;;) {
        std::function<void()> task;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [this] { return stop_ || !tasks_.empty(); });
            if (tasks_.empty()) return;
            task = std::move(tasks_.front());
            tasks_.pop_front();
            ++running_;
        }
        task();
        {
            std::lock_guard lock(mu_);
            --running_;
        }
        idle_cv_.notify_all();
    }
}

// ---- Service ----

namespace {

class HttpFailure : public Error {
public:
    HttpFailure(int status, std::string code, const std::string& message)
        : Error(std::move(code), message), status(status) {}
    int status;
};

int status_for(const Error& e) {
    const auto& code = e.code();
    if (code == "validation_error" || code == "parse_error" || code == "compilation_error") return 422;
    if (code == "not_found") return 404;
    if (code == "precondition_failed") return 409;
    if (code == "provider_error" || code == "missing_script" || code == "transport_error" ||
        code == "structured_output_error")
        return 502;
    return 500;
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : path.substr(0, path.find('?'))) {
        if (c == '/') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string require_string(const json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string())
        throw ValidationError(key, "required string field");
    return body[key].get<std::string>();
}

json session_view(const json& stored) {
    const auto& s = stored.at("session");
    json view = {{"id", stored.at("id")},
                 {"space_id", stored.at("space_id")},
                 {"domain_id", stored.at("domain_id")},
                 {"player_character", s.at("player_character")},
                 {"status", s.at("status")},
                 {"next_outline_index", s.at("next_event")},
                 {"world", s.at("world")},
                 {"plot", s.at("plot")},
                 {"warnings", s.at("warnings")}};
    const auto status = s.at("status").get<std::string>();
    const int per_turn = s.at("config").at("player_actions_per_turn").get<int>();
    view["pending_player_actions"] =
        status == "awaiting_player" ? per_turn - s.value("player_actions_this_turn", 0) : 0;
    return view;
}

} // namespace

Service::Service(ServiceConfig config, std::shared_ptr<Provider> provider)
    : config_(std::move(config)), provider_(std::move(provider)), store_(config_.data_dir) {
    validate_config(config_.compiler);
    if (!config_.synchronous) queue_ = std::make_unique<WorkQueue>(config_.workers);
    // Work interrupted by a restart: jobs are failed, compiling sessions resume.
    for (const auto& id : store_.ids("jobs")) {
        auto job = store_.get("jobs", id);
        if (job && job->value("status", "") == "running") {
            (*job)["status"] = "failed";
            (*job)["error"] = error_body("interrupted", "the service stopped while the job was running")["error"];
            store_.put("jobs", id, *job);
        }
    }
    for (const auto& id : store_.ids("sessions")) {
        auto doc = store_.get("sessions", id);
        if (doc && doc->at("session").value("status", "") == "compiling")
            background([this, id] { advance_session(id); });
    }
}

Service::~Service() {
    stop();
    queue_.reset();
}

void Service::wait_idle() {
    if (queue_) queue_->wait_idle();
}

void Service::background(std::function<void()> task) {
    if (queue_) queue_->post(std::move(task));
    else task();
}

std::mutex& Service::guard(const std::string& id) {
    std::lock_guard lock(guards_mu_);
    auto& g = guards_[id];
    if (!g) g = std::make_unique<Guarded>();
    return g->mu;
}

std::shared_ptr<const StoryDomain> Service::domain(const std::string& id) {
    std::lock_guard lock(domains_mu_);
    if (auto it = domains_.find(id); it != domains_.end()) return it->second;
    if (!is_identifier(id)) throw ValidationError("domain_id", "invalid domain id '" + id + "'");
    for (const auto& dir : {config_.data_dir / "domains", config_.domains_dir}) {
        if (dir.empty()) continue;
        const auto path = dir / (id + ".json");
        if (!fs::exists(path)) continue;
        auto d = std::make_shared<const StoryDomain>(load_domain_file(path));
        domains_.emplace(id, d);
        return d;
    }
    throw NotFoundError("unknown domain '" + id + "'");
}

json Service::load(const std::string& kind, const std::string& id) const {
    auto doc = store_.get(kind, id);
    if (!doc) throw NotFoundError("unknown " + kind.substr(0, kind.size() - 1) + " '" + id + "'");
    return *doc;
}

HttpResponse Service::handle(const HttpRequest& request) {
    try {
        json body = json::object();
        if (!request.body.empty()) {
            try {
                body = json::parse(request.body);
            } catch (const json::parse_error& e) {
                throw ParseError(std::string("request body is not JSON: ") + e.what());
            }
            if (!body.is_object()) throw ValidationError("body", "expected a JSON object");
        }
        const auto p = split_path(request.path);
        const auto& m = request.method;
        auto is = [&](std::initializer_list<const char*> shape) {
            if (p.size() != shape.size()) return false;
            std::size_t i = 0;
            for (const char* part : shape) {
                if (std::string_view(part) != "*" && p[i] != part) return false;
                ++i;
            }
            return true;
        };
        auto method = [&](const char* expected) {
            if (m != expected) throw HttpFailure(405, "method_not_allowed", m + " not allowed on " + request.path);
        };

        if (is({"health"})) return {200, {{"status", "ok"}}};
        if (is({"domains", "*"})) {
            method("GET");
            return get_domain(p[1]);
        }
        if (is({"spaces"})) {
            method("POST");
            return create_space(body);
        }
        if (is({"spaces", "*"})) {
            method("GET");
            return get_space(p[1]);
        }
        if (is({"spaces", "*", "pivot"})) {
            method("POST");
            return set_space_pivot(p[1], body);
        }
        if (is({"spaces", "*", "variants", "*", "reject"})) {
            method("POST");
            return toggle_variant(p[1], p[3], true);
        }
        if (is({"spaces", "*", "variants", "*", "restore"})) {
            method("POST");
            return toggle_variant(p[1], p[3], false);
        }
        if (is({"spaces", "*", "outline"})) {
            if (m == "PUT") return put_outline(p[1], body);
            method("POST");
            return generate_outline(p[1], body);
        }
        if (is({"spaces", "*", "outline", "suggest"})) {
            method("POST");
            return suggest(p[1], body);
        }
        if (is({"spaces", "*", "outline", "mapping"})) {
            method("GET");
            return outline_mapping(p[1]);
        }
        if (is({"spaces", "*", "variants"})) {
            method("POST");
            return start_variants(p[1], body);
        }
        if (is({"spaces", "*", "graph"})) {
            method("POST");
            return graph(p[1], body);
        }
        if (is({"jobs", "*"})) {
            method("GET");
            return get_job(p[1]);
        }
        if (is({"sessions"})) {
            method("POST");
            return create_session(body);
        }
        if (is({"sessions", "*"})) {
            method("GET");
            return get_session(p[1]);
        }
        if (is({"sessions", "*", "action"})) {
            method("POST");
            return session_action(p[1], body);
        }
        if (is({"sessions", "*", "plot"})) {
            method("GET");
            return session_plot(p[1]);
        }
        return {404, error_body("not_found", "no route for " + m + " " + request.path)};
    } catch (const HttpFailure& e) {
        return {e.status, error_body(e.code(), e.what())};
    } catch (const Error& e) {
        return {status_for(e), error_body(e.code(), e.what())};
    } catch (const json::exception& e) {
        return {422, error_body("validation_error", e.what())};
    } catch (const std::exception& e) {
        return {500, error_body("internal_error", e.what())};
    }
}

HttpResponse Service::get_domain(const std::string& id) { return {200, domain_to_json(*domain(id))}; }

HttpResponse Service::create_space(const json& body) {
    const auto domain_id = require_string(body, "domain_id");
    const auto text = body.value("narrative_text", std::string());
    const auto moral = body.value("moral", std::string());
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ValidationError("narrative_text", "empty narrative text");
    const auto d = domain(domain_id);

    NarrativeSpace space;
    space.domain_ref = domain_id;
    space.moral = moral;
    space.player_character = body.value("player_character", std::string());
    if (body.contains("placement")) space.placement = body["placement"].get<Placement>();
    resolve_player_character(space, *d);
    initial_world_for(space, *d);

    auto extraction = extract_pivot(text, *d, *provider_, "pivot");
    space.variants.push_back(std::move(extraction.pivot));
    space.pivot = "pivot";
    space.id = store_.next_id("spaces", "sp");
    check_space(space);
    auto doc = space_to_json(space);
    store_.put("spaces", space.id, doc);
    return {201, {{"space", doc}, {"warnings", extraction.warnings}}};
}

HttpResponse Service::get_space(const std::string& id) { return {200, load("spaces", id)}; }

HttpResponse Service::set_space_pivot(const std::string& id, const json& body) {
    std::lock_guard lock(guard(id));
    auto space = space_from_json(load("spaces", id));
    space = set_pivot(std::move(space), require_string(body, "variant_id"));
    auto doc = space_to_json(space);
    store_.put("spaces", id, doc);
    return {200, doc};
}

HttpResponse Service::toggle_variant(const std::string& id, const std::string& vid, bool reject) {
    std::lock_guard lock(guard(id));
    auto space = space_from_json(load("spaces", id));
    space = reject ? reject_variant(std::move(space), vid) : restore_variant(std::move(space), vid);
    auto doc = space_to_json(space);
    store_.put("spaces", id, doc);
    return {200, doc};
}

HttpResponse Service::generate_outline(const std::string& id, const json& body) {
    std::lock_guard lock(guard(id));
    auto space = space_from_json(load("spaces", id));
    const auto d = domain(space.domain_ref);
    const auto level = abstraction_level_from_string(body.value("level", std::string("act")));
    const auto source = body.value("source", std::string("pivot"));
    std::vector<Variant> instances;
    if (source == "pivot") {
        instances.push_back(space.pivot_variant());
    } else if (source == "variants") {
        for (const auto* v : space.active_variants()) instances.push_back(*v);
    } else {
        throw ValidationError("source", "expected 'pivot' or 'variants'");
    }
    OutlineOptions options;
    options.moral = space.moral;
    if (body.contains("user_spec") && body["user_spec"].is_string() && !body["user_spec"].get<std::string>().empty())
        options.user_spec = body["user_spec"].get<std::string>();
    auto result = instances_to_outline(instances, level, options, *d, *provider_);
    space.outline = result.outline;
    store_.put("spaces", id, space_to_json(space));
    json alternates = json::array();
    for (const auto& o : result.alternates) alternates.push_back(outline_to_json(o));
    json candidates = json::array();
    for (const auto& o : result.candidates) candidates.push_back(outline_to_json(o));
    return {200, {{"outline", outline_to_json(result.outline)}, {"candidates", candidates}, {"alternates", alternates}}};
}

HttpResponse Service::put_outline(const std::string& id, const json& body) {
    std::lock_guard lock(guard(id));
    auto space = space_from_json(load("spaces", id));
    if (!body.contains("outline")) throw ValidationError("outline", "required");
    auto outline = outline_from_json(body["outline"]);
    validate_outline(outline);
    space.outline = outline;
    auto doc = space_to_json(space);
    store_.put("spaces", id, doc);
    return {200, doc};
}

HttpResponse Service::suggest(const std::string& id, const json& body) {
    const auto space = space_from_json(load("spaces", id));
    if (!space.outline) throw PreconditionError("the space has no outline yet");
    const auto snippet = require_string(body, "snippet");
    const auto direction = abstraction_direction_from_string(require_string(body, "direction"));
    const auto count = body.value("count", default_suggestion_count);
    return {200, {{"suggestions", abstraction_suggest(snippet, direction, *space.outline, *provider_, count)}}};
}

HttpResponse Service::outline_mapping(const std::string& id) {
    const auto space = space_from_json(load("spaces", id));
    if (!space.outline) throw PreconditionError("the space has no outline yet");
    const auto mapping = map_outline_to_pivot(*space.outline, space.pivot_variant(), *provider_);
    json ranges = json::array();
    for (std::size_t i = 0; i < mapping.ranges.size(); ++i)
        ranges.push_back({{"event", i}, {"start", mapping.ranges[i].start}, {"end", mapping.ranges[i].end}});
    return {200, {{"ranges", ranges}, {"uncovered_entries", mapping.uncovered_entries}, {"warnings", mapping.warnings}}};
}

HttpResponse Service::start_variants(const std::string& id, const json& body) {
    const auto space = space_from_json(load("spaces", id));
    if (!body.contains("n_sets") || !body["n_sets"].is_number_integer())
        throw ValidationError("n_sets", "required integer");
    const int n_sets = body["n_sets"].get<int>();
    if (n_sets < 1 || n_sets > max_variant_sets)
        throw ValidationError("n_sets", "must be between 1 and " + std::to_string(max_variant_sets));
    if (!space.outline) throw PreconditionError("the space has no outline yet");

    const auto job_id = store_.next_id("jobs", "job");
    json job = {{"id", job_id}, {"kind", "variants"}, {"space_id", id}, {"n_sets", n_sets}, {"status", "running"}};
    store_.put("jobs", job_id, job);
    background([this, job_id, id, n_sets] { run_variant_job(job_id, id, n_sets); });
    return {202, load("jobs", job_id)};
}

void Service::run_variant_job(const std::string& job_id, const std::string& space_id, int n_sets) {
    json job = load("jobs", job_id);
    try {
        const auto snapshot = space_from_json(load("spaces", space_id));
        const auto d = domain(snapshot.domain_ref);
        VariantOptions options;
        options.config = config_.compiler;
        auto variants = generate_variants(snapshot, n_sets, *d, *provider_, options);

        std::lock_guard lock(guard(space_id));
        auto space = space_from_json(load("spaces", space_id));
        json ids = json::array();
        for (auto& v : variants) {
            // Ids may have been taken by a concurrent job.
            if (space.find_variant(v.id)) {
                int n = static_cast<int>(space.variants.size()) + 1;
                while (space.find_variant("v" + std::to_string(n))) ++n;
                v.id = "v" + std::to_string(n);
            }
            ids.push_back(v.id);
            space.variants.push_back(std::move(v));
        }
        store_.put("spaces", space_id, space_to_json(space));
        job["status"] = "succeeded";
        job["result"] = {{"variant_ids", ids}};
    } catch (const Error& e) {
        job["status"] = "failed";
        job["error"] = error_body(e.code(), e.what())["error"];
    } catch (const std::exception& e) {
        job["status"] = "failed";
        job["error"] = error_body("internal_error", e.what())["error"];
    }
    store_.put("jobs", job_id, job);
}

HttpResponse Service::get_job(const std::string& id) { return {200, load("jobs", id)}; }

HttpResponse Service::graph(const std::string& id, const json& body) {
    const auto space = space_from_json(load("spaces", id));
    const auto kind = body.value("comparator", std::string("exact"));
    std::vector<NodePath> paths;
    for (const auto* v : space.active_variants()) paths.push_back(path_from_plot(v->plot, v->id + "."));
    MergeResult merged;
    if (kind == "exact") {
        ExactComparator cmp;
        merged = merge_paths(paths, cmp);
    } else if (kind == "judged") {
        JudgedComparator cmp(*provider_);
        merged = merge_paths(paths, cmp);
    } else {
        throw ValidationError("comparator", "expected 'exact' or 'judged'");
    }
    auto doc = export_graph(merged);
    doc["dot"] = export_dot(merged);
    return {200, doc};
}

HttpResponse Service::create_session(const json& body) {
    const auto space_id = require_string(body, "space_id");
    auto space = space_from_json(load("spaces", space_id));
    if (!space.outline) throw PreconditionError("the space has no outline yet");
    if (body.contains("player_character")) space.player_character = require_string(body, "player_character");
    const auto d = domain(space.domain_ref);
    const auto player = resolve_player_character(space, *d);
    GameSession session(*d, *space.outline, initial_world_for(space, *d), player, config_.compiler);

    const auto id = store_.next_id("sessions", "se");
    json doc = {{"id", id}, {"space_id", space_id}, {"domain_id", space.domain_ref}, {"session", session.to_json()}};
    store_.put("sessions", id, doc);
    background([this, id] { advance_session(id); });
    return {201, session_view(load("sessions", id))};
}

void Service::advance_session(const std::string& id) {
    try {
        advance_session_steps(id);
    } catch (const std::exception& e) {
        std::lock_guard lock(guard(id));
        auto doc = store_.get("sessions", id);
        if (!doc) return;
        (*doc)["session"]["status"] = "failed";
        (*doc)["session"]["plot"]["complete"] = false;
        (*doc)["session"]["plot"]["failure"] = e.what();
        store_.put("sessions", id, *doc);
    }
}

void Service::advance_session_steps(const std::string& id) {
    for (;;) {
        json doc;
        std::shared_ptr<const StoryDomain> d;
        {
            std::lock_guard lock(guard(id));
            doc = load("sessions", id);
            if (doc["session"].value("status", "") != "compiling") return;
            d = domain(doc["domain_id"].get<std::string>());
        }
        // The session is only mutated here while compiling (actions get 409),
        // so the model calls can run without holding the guard.
        auto session = GameSession::from_json(*d, doc["session"]);
        session.advance(*provider_);
        std::lock_guard lock(guard(id));
        doc["session"] = session.to_json();
        store_.put("sessions", id, doc);
    }
}

HttpResponse Service::get_session(const std::string& id) { return {200, session_view(load("sessions", id))}; }

HttpResponse Service::session_action(const std::string& id, const json& body) {
    bool compile = false;
    {
        std::lock_guard lock(guard(id));
        auto doc = load("sessions", id);
        const auto d = domain(doc["domain_id"].get<std::string>());
        auto session = GameSession::from_json(*d, doc["session"]);
        if (session.status() != SessionStatus::awaiting_player)
            throw HttpFailure(409, "wrong_status",
                              "session is " + std::string(to_string(session.status())) + ", not awaiting_player");

        ActionInstance action;
        if (body.contains("call")) {
            action = parse_action_call(session.player(), require_string(body, "call"));
        } else if (body.contains("action") && body["action"].is_object()) {
            auto a = body["action"];
            if (!a.contains("subject")) a["subject"] = session.player();
            action = action_from_json(a);
        } else if (body.value("pass", false)) {
            session.end_player_turn();
        } else {
            throw ValidationError("action", "expected {\"action\": {...}}, {\"call\": \"...\"} or {\"pass\": true}");
        }
        if (!body.value("pass", false)) {
            if (auto v = session.submit_player_action(action); !v)
                throw HttpFailure(422, "not_executable", v.reason);
        }
        doc["session"] = session.to_json();
        store_.put("sessions", id, doc);
        compile = session.status() == SessionStatus::compiling;
    }
    if (compile) background([this, id] { advance_session(id); });
    return {200, session_view(load("sessions", id))};
}

HttpResponse Service::session_plot(const std::string& id) {
    const auto doc = load("sessions", id);
    const auto plot = plot_from_json(doc["session"]["plot"]);
    return {200, {{"plot", plot_to_json(plot)}, {"text", render_plot_story(plot)}}};
}

void Service::serve(const std::string& host, int port) {
    {
        std::lock_guard lock(server_mu_);
        server_ = std::make_unique<httplib::Server>();
        auto bind = [this](const httplib::Request& req, httplib::Response& res) {
            const auto out = handle({req.method, req.path, req.body});
            res.status = out.status;
            res.set_content(out.body.dump(), "application/json");
        };
        const auto pattern = R"(/.*)";
        server_->Get(pattern, bind);
        server_->Post(pattern, bind);
        server_->Put(pattern, bind);
        server_->Delete(pattern, bind);
        server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server_->Options(pattern, [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
    }
    if (!server_->listen(host, port)) throw Error("listen_failed", "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
    std::lock_guard lock(server_mu_);
    if (server_) server_->stop();
}

} // namespace loom
