#pragma once

#include <stdexcept>
#include <string>

namespace frost {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Scalar hyperparameters out of their admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Inputs outside an operation's mathematical domain (e.g. log of a non-positive value).
class DomainError : public Error {
public:
    using Error::Error;
};

// A value became NaN or infinite.
class NumericError : public Error {
public:
    using Error::Error;
};

// Semantically invalid inputs: labels out of range, non one-hot targets, ...
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed documents and CSV files.
class ParseError : public Error {
public:
    using Error::Error;
};

// Inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Missing keys in a store.
class LookupError : public Error {
public:
    using Error::Error;
};

}  // namespace frost
