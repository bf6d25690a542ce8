#pragma once

#include <stdexcept>
#include <string>

namespace tunnelex {

enum class ErrorKind {
    invalid_argument,
    config,
    domain_too_small,
    resolution,
    interaction_not_finished,
    degenerate_state,
    unsupported_energy,
    bracket,
    size,
    psd_violation,
    io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::config: return "config";
        case ErrorKind::domain_too_small: return "domain-too-small";
        case ErrorKind::resolution: return "resolution";
        case ErrorKind::interaction_not_finished: return "interaction-not-finished";
        case ErrorKind::degenerate_state: return "degenerate-state";
        case ErrorKind::unsupported_energy: return "unsupported-energy";
        case ErrorKind::bracket: return "bracket";
        case ErrorKind::size: return "size";
        case ErrorKind::psd_violation: return "psd-violation";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& message() const noexcept { return message_; }

    // Config-level problems versus violated numerical preconditions.
    bool is_config_error() const noexcept {
        return kind_ == ErrorKind::config || kind_ == ErrorKind::invalid_argument ||
               kind_ == ErrorKind::io;
    }

private:
    ErrorKind kind_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

}  // namespace tunnelex
