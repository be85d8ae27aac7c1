#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fogflow {

/// Input violated an operation's precondition (shape, range, finiteness).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A file did not match its binary/text format.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A training step produced a NaN/Inf loss; the step was not applied.
class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fogflow
