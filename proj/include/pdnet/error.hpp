#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pdnet {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
    Usage,          ///< bad flags, bad config values
    InvalidParams,  ///< synth parameters out of range
    Data,           ///< malformed/inconsistent input data
    MagicMismatch,
    LengthMismatch,
    EmptyClass,
    DegenerateRange,
    UnknownClass,
    BadLength,
    ShapeMismatch,
    ClassMismatch,
    MissingClass,
    LeakageDetected,
    Io,
};

constexpr std::string_view to_string(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::Usage: return "UsageError";
        case ErrorKind::InvalidParams: return "InvalidParams";
        case ErrorKind::Data: return "DataError";
        case ErrorKind::MagicMismatch: return "MagicMismatch";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::EmptyClass: return "EmptyClass";
        case ErrorKind::DegenerateRange: return "DegenerateRange";
        case ErrorKind::UnknownClass: return "UnknownClass";
        case ErrorKind::BadLength: return "BadLength";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::ClassMismatch: return "ClassMismatch";
        case ErrorKind::MissingClass: return "MissingClass";
        case ErrorKind::LeakageDetected: return "LeakageDetected";
        case ErrorKind::Io: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace pdnet
