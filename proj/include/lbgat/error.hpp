#ifndef LBGAT_ERROR_HPP
#define LBGAT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace lbgat {

// Shape or contraction mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent configuration; carries the dotted field path when known.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& message, std::string field = {})
        : std::invalid_argument(field.empty() ? message : field + ": " + message),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// NaN or infinity produced where a finite value is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File cannot be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Byte stream or text file does not follow its declared format.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lbgat

#endif  // LBGAT_ERROR_HPP
