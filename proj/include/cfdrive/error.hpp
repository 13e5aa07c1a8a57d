#pragma once

#include <stdexcept>
#include <string>

namespace cfdrive {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed document or text. `line`/`offset` are 1-based where known, 0 otherwise.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0, std::size_t offset = 0)
        : Error(what), line_(line), offset_(offset) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t line_;
    std::size_t offset_;
};

/// A well-formed document that breaks a domain invariant. `field()` is a
/// JSON-path-like locator such as "signals[0].stop_line".
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& reason)
        : Error(field + ": " + reason), field_(std::move(field)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace cfdrive
