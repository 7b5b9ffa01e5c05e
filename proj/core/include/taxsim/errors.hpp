#pragma once

#include <stdexcept>
#include <string>

namespace taxsim {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input values (negative price, negative evasion gap, ...).
struct DomainError : Error {
    using Error::Error;
};

// Invalid or missing configuration / calibration data.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed file or text content; carries a line number where known.
struct ParseError : Error {
    explicit ParseError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_number(line) {}
    long line_number;
};

// Decision backend failure (remote transport, scripted misuse, unparseable reply).
struct BackendError : Error {
    using Error::Error;
};

// Non-finite loss or divergence during Q-network training.
struct TrainingError : Error {
    using Error::Error;
};

}  // namespace taxsim
