#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hitl {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class MeshError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Statistical test cannot be evaluated (all-tied input, singular regression).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

// Session-store failure; `kind` decides the HTTP status.
class ServiceError : public Error {
public:
    enum class Kind { bad_request, not_found, conflict, not_ready, too_large };

    ServiceError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace hitl
