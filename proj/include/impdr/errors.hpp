// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace impdr {

/// Violated precondition of a library call (shape mismatch, invalid parameters).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Bad numeric input to the solver, e.g. a non-finite objective at the start point.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, int line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] int line() const noexcept { return line_; }

private:
    int line_;
};

/// Invalid configuration value; names the file and the dotted field path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, const std::string& field, const std::string& what)
        : std::runtime_error(source + ": " + (field.empty() ? std::string("<root>") : field) + ": " + what),
          field_(field) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace impdr
