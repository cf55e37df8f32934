#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canids {

// Base for every error the library raises. category() is a short machine-parsable
// tag that the CLI prints verbatim.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* category() const noexcept = 0;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    const char* category() const noexcept override { return "parse"; }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "config"; }
};

class DimensionError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "dimension"; }
};

class StateError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "state"; }
};

class DataError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "data"; }
};

}  // namespace canids
