#pragma once

#include <stdexcept>
#include <string>

namespace splatloc {

// Forward/backward pass mismatch, stale caches and similar API misuse.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Non-finite values where the math requires finite ones.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Registration cannot produce a transform (too few pairs, zero total weight).
class DegenerateRegistrationError : public std::runtime_error {
public:
    explicit DegenerateRegistrationError(const std::string& what) : std::runtime_error(what) {}
};

namespace io {

// Malformed file content; carries a byte offset or line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, long offset = -1)
        : std::runtime_error(offset >= 0 ? what + " (at byte " + std::to_string(offset) + ")" : what),
          offset_(offset) {}
    long offset() const { return offset_; }

private:
    long offset_;
};

// Bad key, type mismatch or unknown key in a config file.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace io
}  // namespace splatloc
