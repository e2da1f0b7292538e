#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "loom/error.hpp"

namespace loom {

inline constexpr double generation_temperature = 0.7;
inline constexpr double judging_temperature = 0.0;
inline constexpr int default_parse_retries = 3;
inline constexpr int default_max_tokens = 1024;

struct CompletionRequest {
    std::string template_id;
    std::map<std::string, std::string> variables;
    double temperature = generation_temperature;
    int max_tokens = default_max_tokens;
    // Free label; scripted providers key their answers on it.
    std::string tag;
};

// A fully rendered prompt, as seen by a provider.
struct Prompt {
    std::string tag;
    std::string text;
    double temperature = generation_temperature;
    int max_tokens = default_max_tokens;
};

class ProviderError : public Error {
public:
    explicit ProviderError(const std::string& message, std::string code = "provider_error")
        : Error(std::move(code), message) {}
};

class MissingScriptError : public ProviderError {
public:
    explicit MissingScriptError(const std::string& tag)
        : ProviderError("no scripted response for tag '" + tag + "'", "missing_script"), tag_(tag) {}
    const std::string& tag() const noexcept { return tag_; }

private:
    std::string tag_;
};

// Raised when a structured answer could not be parsed even after re-asking.
// Keeps the last raw answer for diagnosis.
class StructuredOutputError : public ProviderError {
public:
    StructuredOutputError(const std::string& message, std::string raw)
        : ProviderError(message, "structured_output_error"), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

// FNV-1a over the prompt text, 16 lowercase hex digits. Stable across
// platforms, so it can key script entries.
std::string content_hash(std::string_view text);

struct CallRecord {
    std::string tag;
    std::string hash;
    std::string response;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    double latency_ms = 0;
    bool ok = true;
};

// Thread-safe log of provider calls. Can be turned into a script so an http
// session replays offline.
class CallLog {
public:
    void add(CallRecord record);
    std::vector<CallRecord> records() const;
    std::size_t size() const;
    // {"<tag>@<hash>": response, ...} for every successful call.
    nlohmann::json to_script() const;

private:
    mutable std::mutex mu_;
    std::vector<CallRecord> records_;
};

// Whitespace token estimate used for call accounting.
std::size_t approximate_tokens(std::string_view text);

class Provider {
public:
    virtual ~Provider() = default;

    virtual std::string_view kind() const = 0;

    // Times the call, logs it to the attached CallLog, returns the text.
    std::string call(const Prompt& prompt);

    void attach_log(std::shared_ptr<CallLog> log) { log_ = std::move(log); }
    const std::shared_ptr<CallLog>& log() const { return log_; }

protected:
    virtual std::string do_complete(const Prompt& prompt) = 0;

private:
    std::shared_ptr<CallLog> log_;
};

// Deterministic provider backed by a script document mapping keys to
// answers. Lookup order for a prompt: "<tag>@<content hash>", then "<tag>",
// then wildcard keys ('*' matches any run of characters), most specific
// (most literal characters) first.
class ScriptedProvider : public Provider {
public:
    ScriptedProvider() = default;
    explicit ScriptedProvider(std::map<std::string, std::string> entries);

    static ScriptedProvider from_json(const nlohmann::json& doc);
    static ScriptedProvider from_file(const std::filesystem::path& path);

    void set(std::string key, std::string response);
    std::optional<std::string> lookup(const Prompt& prompt) const;
    std::string_view kind() const override { return "scripted"; }

protected:
    std::string do_complete(const Prompt& prompt) override;

private:
    struct Pattern {
        std::string key;
        std::size_t literal = 0;
        std::string response;
    };

    std::map<std::string, std::string> exact_;
    // Most specific (most literal characters) first.
    std::vector<Pattern> patterns_;
};

bool wildcard_match(std::string_view pattern, std::string_view text);

struct HttpConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    std::string model = "gpt-4o";
    std::chrono::seconds timeout{60};
    int retries = 3;

    // LLM_BASE_URL, LLM_API_KEY, LLM_MODEL.
    static HttpConfig from_env();
};

// OpenAI-compatible chat-completions endpoint.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpConfig config);
    std::string_view kind() const override { return "http"; }
    const HttpConfig& config() const { return config_; }

protected:
    std::string do_complete(const Prompt& prompt) override;

private:
    HttpConfig config_;
};

// Prompt templates keyed by id. Placeholders are written {{name}}.
class TemplateStore {
public:
    // Templates compiled into the library from core/prompts/*.txt.
    static const TemplateStore& builtin();

    void set(std::string id, std::string text);
    // Reads every *.txt in `dir` (id = file stem), replacing builtins.
    void load_directory(const std::filesystem::path& dir);
    bool contains(std::string_view id) const;
    const std::string& text(std::string_view id) const;
    std::vector<std::string> placeholders(std::string_view id) const;

    // Throws ValidationError when a placeholder has no variable,
    // NotFoundError for unknown ids.
    std::string render(std::string_view id, const std::map<std::string, std::string>& vars) const;

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

// Renders the request and asks the provider once. Empty answers are errors.
std::string complete(Provider& provider, const CompletionRequest& request,
                     const TemplateStore& templates = TemplateStore::builtin());

// First JSON value embedded in `text`: a ```json fenced block if present,
// else the first balanced {...} or [...] that parses.
std::optional<nlohmann::json> extract_json(std::string_view text);

// Describes the expected answer. `validate` throws (ParseError or
// ValidationError) with a message that is fed back to the model.
struct StructuredSchema {
    std::string description;
    std::function<void(const nlohmann::json&)> validate;
};

// Asks, then re-asks up to `retries` times with the parse error appended
// to the prompt. Throws StructuredOutputError carrying the last raw answer.
template <typename T>
T complete_parsed(Provider& provider, const CompletionRequest& request,
                  const std::function<T(const std::string&)>& parse,
                  int retries = default_parse_retries,
                  const TemplateStore& templates = TemplateStore::builtin());

nlohmann::json complete_structured(Provider& provider, const CompletionRequest& request,
                                   const StructuredSchema& schema,
                                   int retries = default_parse_retries,
                                   const TemplateStore& templates = TemplateStore::builtin());

// Builds a provider from CLI/service settings: "scripted" (needs a script
// file) or "http" (reads the LLM_* environment).
std::unique_ptr<Provider> make_provider(std::string_view kind,
                                        const std::optional<std::filesystem::path>& script);

// ---- implementation of the retry loop ----

namespace detail {
std::string retry_suffix(const std::string& error);
}

template <typename T>
T complete_parsed(Provider& provider, const CompletionRequest& request,
                  const std::function<T(const std::string&)>& parse, int retries,
                  const TemplateStore& templates) {
    const auto base_text = templates.render(request.template_id, request.variables);
    std::string raw;
    std::string last_error;
    for (int attempt = 0; attempt <= retries; ++attempt) {
        Prompt prompt{request.tag, base_text, request.temperature, request.max_tokens};
        if (attempt > 0) {
            prompt.tag += "#retry" + std::to_string(attempt);
            prompt.text += detail::retry_suffix(last_error);
        }
        raw = provider.call(prompt);
        try {
            return parse(raw);
        } catch (const ParseError& e) {
            last_error = e.what();
        } catch (const ValidationError& e) {
            last_error = e.what();
        } catch (const nlohmann::json::exception& e) {
            last_error = e.what();
        }
    }
    throw StructuredOutputError("unusable answer for '" + request.tag + "' after " +
                                    std::to_string(retries + 1) + " attempt(s): " + last_error,
                                raw);
}

} // namespace loom
