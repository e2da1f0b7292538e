#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/compiler.hpp"
#include "loom/domain.hpp"

namespace httplib {
class Server;
}

namespace loom {

class Provider;

struct HttpRequest {
    std::string method;
    std::string path;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    nlohmann::json body;
};

struct ServiceConfig {
    // Documents live under <data_dir>/{spaces,sessions,jobs}.
    std::filesystem::path data_dir = "loom-data";
    // Domain files "<domain_id>.json" are looked up in <data_dir>/domains,
    // then here.
    std::filesystem::path domains_dir;
    CompilerConfig compiler;
    // Run background work (compiles, variant jobs) inline before replying.
    bool synchronous = false;
    int workers = 2;

    // DATA_DIR and LOOM_DOMAINS_DIR environment overrides.
    static ServiceConfig from_env();
};

// Persists JSON documents as <root>/<kind>/<id>.json, written atomically.
class DocumentStore {
public:
    explicit DocumentStore(std::filesystem::path root);

    std::optional<nlohmann::json> get(const std::string& kind, const std::string& id) const;
    void put(const std::string& kind, const std::string& id, const nlohmann::json& doc);
    std::vector<std::string> ids(const std::string& kind) const;
    // "<prefix>-<n>" with n one past the highest id of that kind on disk.
    std::string next_id(const std::string& kind, const std::string& prefix);

private:
    std::filesystem::path root_;
    std::mutex mu_;
    std::map<std::string, int> counters_;
};

// Fixed pool of worker threads draining a FIFO queue.
class WorkQueue {
public:
    explicit WorkQueue(int workers);
    ~WorkQueue();

    void post(std::function<void()> task);
    // Blocks until the queue is empty and no task is running.
    void wait_idle();

private:
    void run();

    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<std::function<void()>> tasks_;
    int running_ = 0;
    bool stop_ = false;
    std::vector<std::thread> threads_;
};

// The authoring and play API. handle() is transport-free; serve() binds it
// to an HTTP listener.
class Service {
public:
    Service(ServiceConfig config, std::shared_ptr<Provider> provider);
    ~Service();

    HttpResponse handle(const HttpRequest& request);
    void wait_idle();

    // Blocks serving HTTP until stop() is called.
    void serve(const std::string& host, int port);
    void stop();

private:
    struct Guarded {
        std::mutex mu;
    };

    std::mutex& guard(const std::string& id);
    std::shared_ptr<const StoryDomain> domain(const std::string& id);
    void background(std::function<void()> task);

    nlohmann::json load(const std::string& kind, const std::string& id) const;

    HttpResponse create_space(const nlohmann::json& body);
    HttpResponse get_space(const std::string& id);
    HttpResponse set_space_pivot(const std::string& id, const nlohmann::json& body);
    HttpResponse toggle_variant(const std::string& id, const std::string& vid, bool reject);
    HttpResponse generate_outline(const std::string& id, const nlohmann::json& body);
    HttpResponse put_outline(const std::string& id, const nlohmann::json& body);
    HttpResponse suggest(const std::string& id, const nlohmann::json& body);
    HttpResponse outline_mapping(const std::string& id);
    HttpResponse start_variants(const std::string& id, const nlohmann::json& body);
    HttpResponse graph(const std::string& id, const nlohmann::json& body);
    HttpResponse get_job(const std::string& id);
    HttpResponse get_domain(const std::string& id);
    HttpResponse create_session(const nlohmann::json& body);
    HttpResponse get_session(const std::string& id);
    HttpResponse session_action(const std::string& id, const nlohmann::json& body);
    HttpResponse session_plot(const std::string& id);

    void run_variant_job(const std::string& job_id, const std::string& space_id, int n_sets);
    void advance_session(const std::string& id);
    void advance_session_steps(const std::string& id);

    ServiceConfig config_;
    std::shared_ptr<Provider> provider_;
    DocumentStore store_;
    std::mutex guards_mu_;
    std::map<std::string, std::unique_ptr<Guarded>> guards_;
    std::mutex domains_mu_;
    std::map<std::string, std::shared_ptr<const StoryDomain>> domains_;
    std::unique_ptr<WorkQueue> queue_;
    std::mutex server_mu_;
    std::unique_ptr<httplib::Server> server_;
};

// {"error": {"code": ..., "message": ...}}
nlohmann::json error_body(const std::string& code, const std::string& message);

} // namespace loom
