#pragma once

#include <stdexcept>
#include <string>

namespace ekmc {

// Base for everything the library throws on a contract violation.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes or counts that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A required second (or span of seconds) is absent from the input series.
class CoverageError : public Error {
public:
    using Error::Error;
};

// Values outside their domain: non-binary occupancy, NaN inputs.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Non-finite objective or factors.
class NumericalError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace ekmc
