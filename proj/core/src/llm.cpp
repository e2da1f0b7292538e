#include "loom/llm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

namespace loom {

using nlohmann::json;

std::string content_hash(std::string_view text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return out;
}

std::size_t approximate_tokens(std::string_view text) {
    std::size_t count = 0;
    bool in_word = false;
    for (unsigned char ch : text) {
        const bool space = std::isspace(ch) != 0;
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

void CallLog::add(CallRecord record) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(record));
}

std::vector<CallRecord> CallLog::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::size_t CallLog::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

json CallLog::to_script() const {
    std::lock_guard lock(mu_);
    json doc = json::object();
    for (const auto& r : records_)
        if (r.ok) doc[r.tag + "@" + r.hash] = r.response;
    return doc;
}

std::string Provider::call(const Prompt& prompt) {
    const auto start = std::chrono::steady_clock::now();
    CallRecord rec;
    rec.tag = prompt.tag;
    rec.hash = content_hash(prompt.text);
    rec.prompt_tokens = approximate_tokens(prompt.text);
    try {
        rec.response = do_complete(prompt);
    } catch (...) {
        rec.ok = false;
        rec.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (log_) log_->add(std::move(rec));
        throw;
    }
    rec.completion_tokens = approximate_tokens(rec.response);
    rec.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    auto text = rec.response;
    if (log_) log_->add(std::move(rec));
    return text;
}

bool wildcard_match(std::string_view pattern, std::string_view text) {
    // Iterative glob with single-star backtracking.
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && pattern[p] != '*' && pattern[p] == text[t]) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

ScriptedProvider::ScriptedProvider(std::map<std::string, std::string> entries) {
    for (auto& [k, v] : entries) set(k, std::move(v));
}

void ScriptedProvider::set(std::string key, std::string response) {
    if (key.find('*') == std::string::npos) {
        exact_[std::move(key)] = std::move(response);
        return;
    }
    const auto literal =
        static_cast<std::size_t>(std::count_if(key.begin(), key.end(), [](char c) { return c != '*'; }));
    std::erase_if(patterns_, [&](const Pattern& p) { return p.key == key; });
    patterns_.push_back({std::move(key), literal, std::move(response)});
    std::stable_sort(patterns_.begin(), patterns_.end(), [](const Pattern& a, const Pattern& b) {
        if (a.literal != b.literal) return a.literal > b.literal;
        return a.key < b.key;
    });
}

std::optional<std::string> ScriptedProvider::lookup(const Prompt& prompt) const {
    if (auto it = exact_.find(prompt.tag + "@" + content_hash(prompt.text)); it != exact_.end())
        return it->second;
    if (auto it = exact_.find(prompt.tag); it != exact_.end()) return it->second;
    for (const auto& p : patterns_)
        if (wildcard_match(p.key, prompt.tag)) return p.response;
    return std::nullopt;
}

std::string ScriptedProvider::do_complete(const Prompt& prompt) {
    if (auto hit = lookup(prompt)) return *hit;
    throw MissingScriptError(prompt.tag);
}

ScriptedProvider ScriptedProvider::from_json(const json& doc) {
    if (!doc.is_object()) throw ParseError("script document must be an object of tag -> response");
    ScriptedProvider p;
    for (const auto& [key, value] : doc.items()) {
        // Structured answers may be written inline as JSON values.
        p.set(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return p;
}

ScriptedProvider ScriptedProvider::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open script file '" + path.string() + "'");
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ParseError("script file '" + path.string() + "': " + e.what());
    }
}

HttpConfig HttpConfig::from_env() {
    HttpConfig cfg;
    if (const char* v = std::getenv("LLM_BASE_URL"); v && *v) cfg.base_url = v;
    if (const char* v = std::getenv("LLM_API_KEY"); v && *v) cfg.api_key = v;
    if (const char* v = std::getenv("LLM_MODEL"); v && *v) cfg.model = v;
    return cfg;
}

void TemplateStore::set(std::string id, std::string text) { templates_[std::move(id)] = std::move(text); }

void TemplateStore::load_directory(const std::filesystem::path& dir) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        set(entry.path().stem().string(), buf.str());
    }
}

bool TemplateStore::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

const std::string& TemplateStore::text(std::string_view id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw NotFoundError("unknown prompt template '" + std::string(id) + "'");
    return it->second;
}

std::vector<std::string> TemplateStore::placeholders(std::string_view id) const {
    static const std::regex re(R"(\{\{([A-Za-z0-9_]+)\}\})");
    const auto& t = text(id);
    std::vector<std::string> names;
    for (std::sregex_iterator it(t.begin(), t.end(), re), end; it != end; ++it) {
        auto name = (*it)[1].str();
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
    return names;
}

std::string TemplateStore::render(std::string_view id, const std::map<std::string, std::string>& vars) const {
    const auto& t = text(id);
    std::string out;
    out.reserve(t.size());
    std::size_t pos = 0;
    while (pos < t.size()) {
        const auto open = t.find("{{", pos);
        if (open == std::string::npos) {
            out.append(t, pos);
            break;
        }
        const auto close = t.find("}}", open + 2);
        if (close == std::string::npos) {
            out.append(t, pos);
            break;
        }
        out.append(t, pos, open - pos);
        const auto name = t.substr(open + 2, close - open - 2);
        auto it = vars.find(name);
        if (it == vars.end())
            throw ValidationError("template " + std::string(id), "no value for placeholder '" + name + "'");
        out += it->second;
        pos = close + 2;
    }
    return out;
}

std::string complete(Provider& provider, const CompletionRequest& request, const TemplateStore& templates) {
    Prompt prompt{request.tag, templates.render(request.template_id, request.variables), request.temperature,
                  request.max_tokens};
    auto text = provider.call(prompt);
    const bool blank = std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
    if (blank) throw ProviderError("empty completion for '" + request.tag + "'");
    return text;
}

namespace {

// End of the balanced JSON value starting at `start`, string-aware.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
    std::vector<char> stack;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_string) {
            if (ch == '\\') ++i;
            else if (ch == '"') in_string = false;
            continue;
        }
        if (ch == '"') in_string = true;
        else if (ch == '{' || ch == '[') stack.push_back(ch == '{' ? '}' : ']');
        else if (ch == '}' || ch == ']') {
            if (stack.empty() || stack.back() != ch) return std::nullopt;
            stack.pop_back();
            if (stack.empty()) return i;
        }
    }
    return std::nullopt;
}

} // namespace

std::optional<json> extract_json(std::string_view text) {
    if (auto fence = text.find("```"); fence != std::string_view::npos) {
        auto body_start = text.find('\n', fence);
        auto fence_end = body_start == std::string_view::npos ? body_start : text.find("```", body_start);
        if (fence_end != std::string_view::npos) {
            auto body = text.substr(body_start + 1, fence_end - body_start - 1);
            if (auto parsed = json::parse(body, nullptr, false); !parsed.is_discarded()) return parsed;
        }
    }
    if (auto whole = json::parse(text, nullptr, false); !whole.is_discarded()) return whole;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') continue;
        auto end = balanced_end(text, i);
        if (!end) continue;
        if (auto parsed = json::parse(text.substr(i, *end - i + 1), nullptr, false); !parsed.is_discarded())
            return parsed;
    }
    return std::nullopt;
}

namespace detail {
std::string retry_suffix(const std::string& error) {
    return "\n\nYour previous answer could not be used: " + error +
           "\nAnswer again, following the required format exactly.";
}
} // namespace detail

json complete_structured(Provider& provider, const CompletionRequest& request, const StructuredSchema& schema,
                         int retries, const TemplateStore& templates) {
    std::function<json(const std::string&)> parse = [&](const std::string& raw) {
        auto doc = extract_json(raw);
        if (!doc) throw ParseError("no JSON found; expected " + schema.description);
        if (schema.validate) schema.validate(*doc);
        return *doc;
    };
    return complete_parsed<json>(provider, request, parse, retries, templates);
}

std::unique_ptr<Provider> make_provider(std::string_view kind, const std::optional<std::filesystem::path>& script) {
    if (kind == "scripted") {
        if (!script) throw ValidationError("--script", "the scripted provider needs a script file");
        return std::make_unique<ScriptedProvider>(ScriptedProvider::from_file(*script));
    }
    if (kind == "http") return std::make_unique<HttpProvider>(HttpConfig::from_env());
    throw ValidationError("--provider", "unknown provider '" + std::string(kind) + "'");
}

} // namespace loom
