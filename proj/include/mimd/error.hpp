#pragma once

#include <stdexcept>
#include <string>

namespace mimd {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a command sequence violates DRAM protocol rules
/// (activating an already-open mat, dequeuing an empty mat queue, ...).
struct ProtocolError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

/// Kernel-source or bbop-assembly diagnostics; carries a line number.
struct ParseError : Error {
    ParseError(int line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line(line) {}
    int line;
};

struct AllocError : Error {
    using Error::Error;
};

}  // namespace mimd
