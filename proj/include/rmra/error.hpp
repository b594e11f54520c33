#pragma once

#include <stdexcept>
#include <string>

namespace rmra {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A precondition on call order or argument kind was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A configuration field is out of range; `field()` names it.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("invalid config field '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed file content: wrong magic, unparseable header, bad record.
class FormatError : public Error {
public:
    using Error::Error;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Header counts do not match the records actually present.
class CountError : public FormatError {
public:
    using FormatError::FormatError;
};

/// File ended early or carries trailing bytes.
class IntegrityError : public FormatError {
public:
    using FormatError::FormatError;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf appeared in a loss or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace rmra
