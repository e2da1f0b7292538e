#include <cctype>

#include "loom/error.hpp"
#include "loom/world.hpp"

namespace loom {

namespace {

bool needs_quotes(const std::string& arg) { return !is_identifier(arg); }

std::string quote(const std::string& text) {
    std::string out = "\"";
    for (char ch : text) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    out += '"';
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Index of the quote closing an argument that opened at `open`. A closing
// quote must be followed (after spaces) by ',' or by the final ')', which
// lets apostrophes survive inside single-quoted text ("the dove's promise").
std::size_t find_closing_quote(std::string_view body, std::size_t open) {
    const char q = body[open];
    for (std::size_t i = open + 1; i < body.size(); ++i) {
        if (q == '"' && body[i] == '\\') {
            ++i;
            continue;
        }
        if (body[i] != q) continue;
        std::size_t j = i + 1;
        while (j < body.size() && std::isspace(static_cast<unsigned char>(body[j]))) ++j;
        if (j == body.size() || body[j] == ',') return i;
    }
    return std::string_view::npos;
}

std::string unescape(std::string_view text, char q) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (q == '"' && text[i] == '\\' && i + 1 < text.size()) {
            out += text[++i];
            continue;
        }
        out += text[i];
    }
    return out;
}

} // namespace

std::string format_action_call(const ActionInstance& a, const ActionSpec* spec) {
    std::string out = a.action + "(";
    for (std::size_t i = 0; i < a.arguments.size(); ++i) {
        if (i) out += ", ";
        bool quoted = needs_quotes(a.arguments[i]);
        if (spec && i < spec->parameters.size())
            quoted = spec->parameters[i].kind == ParamKind::free_text;
        out += quoted ? quote(a.arguments[i]) : a.arguments[i];
    }
    return out + ")";
}

ActionInstance parse_action_call(std::string_view subject, std::string_view call) {
    const auto text = trim(call);
    const auto open = text.find('(');
    if (open == std::string_view::npos || text.back() != ')')
        throw ParseError("malformed action call '" + std::string(text) + "'");

    ActionInstance a;
    a.subject = std::string(trim(subject));
    a.action = std::string(trim(text.substr(0, open)));
    if (!is_identifier(a.action))
        throw ParseError("malformed action name in '" + std::string(text) + "'");

    // Body without the final ')'.
    const auto body = text.substr(open + 1, text.size() - open - 2);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < body.size() && std::isspace(static_cast<unsigned char>(body[pos]))) ++pos;
    };
    skip_space();
    if (pos == body.size()) return a;

    while (true) {
        skip_space();
        if (pos < body.size() && (body[pos] == '"' || body[pos] == '\'')) {
            const auto close = find_closing_quote(body, pos);
            if (close == std::string_view::npos)
                throw ParseError("unterminated quoted argument in '" + std::string(text) + "'");
            a.arguments.push_back(unescape(body.substr(pos + 1, close - pos - 1), body[pos]));
            pos = close + 1;
        } else {
            const auto comma = body.find(',', pos);
            const auto end = comma == std::string_view::npos ? body.size() : comma;
            const auto bare = trim(body.substr(pos, end - pos));
            if (bare.find('"') != std::string_view::npos)
                throw ParseError("stray quote in argument of '" + std::string(text) + "'");
            a.arguments.emplace_back(bare);
            pos = end;
        }
        skip_space();
        if (pos == body.size()) break;
        if (body[pos] != ',')
            throw ParseError("expected ',' between arguments in '" + std::string(text) + "'");
        ++pos;
    }
    return a;
}

} // namespace loom
