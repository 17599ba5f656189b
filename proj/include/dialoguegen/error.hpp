#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dialoguegen {

/// Machine-readable error category. Every exception thrown by the library
/// derives from Error and carries one of these.
enum class ErrorKind {
    Precondition,
    Transport,
    Auth,
    ScriptExhausted,
    Parse,
    Template,
    Arity,
    Json,
    EmptyHub,
    Persistence,
    InsufficientPersonas,
    Selection,
    DegenerateText,
    EmptyDataset,
    NoScoreToken,
    MixedAspectSets,
    Schema,
    Io,
    Format,
    EmptyInput,
    Config,
    Usage,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Precondition: return "PreconditionError";
    case ErrorKind::Transport: return "TransportError";
    case ErrorKind::Auth: return "AuthError";
    case ErrorKind::ScriptExhausted: return "ScriptExhausted";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Template: return "TemplateError";
    case ErrorKind::Arity: return "ArityError";
    case ErrorKind::Json: return "JsonError";
    case ErrorKind::EmptyHub: return "EmptyHub";
    case ErrorKind::Persistence: return "PersistenceError";
    case ErrorKind::InsufficientPersonas: return "InsufficientPersonas";
    case ErrorKind::Selection: return "SelectionError";
    case ErrorKind::DegenerateText: return "DegenerateText";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NoScoreToken: return "NoScoreToken";
    case ErrorKind::MixedAspectSets: return "MixedAspectSets";
    case ErrorKind::Schema: return "SchemaError";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Usage: return "UsageError";
    }
    return "Error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// ParseError raised while reading a line-oriented file; line is 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// HTTP-level failure; status is 0 when no response was received.
class TransportError : public Error {
public:
    TransportError(int status, const std::string& message)
        : Error(ErrorKind::Transport, message), status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

} // namespace dialoguegen
