#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace piwf {

// Base for everything thrown by this library. The CLI maps these to exit
// codes: usage errors 1, data/validation errors 2, numeric failures 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class TruncationError : public FormatError {
public:
    TruncationError(const std::string& msg, std::size_t offset)
        : FormatError(msg + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class OrderError : public Error {
public:
    using Error::Error;
};

class RateError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class TopologyError : public Error {
public:
    using Error::Error;
};

class EmptyPersonError : public Error {
public:
    using Error::Error;
};

class EmptyEvalError : public Error {
public:
    using Error::Error;
};

class InsufficientEnvError : public Error {
public:
    using Error::Error;
};

class SingularityError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Numeric failure (non-finite value) naming the site that produced it.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace piwf
