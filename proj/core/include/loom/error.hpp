#pragma once

#include <stdexcept>
#include <string>

namespace loom {

// Base of every error thrown by the library. `code()` is a stable,
// machine-readable identifier (used by the HTTP layer and the CLI).
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Malformed input document (JSON syntax, action-call syntax, ...).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& message) : Error("parse_error", message) {}
};

// Structurally valid input that violates a contract. `path` names the
// offending field, e.g. "actions[3].name".
class ValidationError : public Error {
public:
    ValidationError(std::string path, const std::string& message)
        : Error("validation_error", path.empty() ? message : path + ": " + message),
          path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

// An operation was attempted on a world state where it cannot run.
class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message)
        : Error("precondition_failed", message) {}
};

} // namespace loom
