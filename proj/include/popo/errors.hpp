#pragma once

#include <stdexcept>
#include <string>

namespace popo {

/// Bad or unsupported configuration (unknown family, invalid hyperparameter).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/vector dimensions do not agree.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or other floating-point breakdown.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An argument outside its documented domain (out-of-range index, k > n).
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller broke an operation's precondition that the algorithm is supposed
/// to have filtered out earlier (e.g. empty positive set past the skip branch).
class ContractViolation : public std::runtime_error {
public:
    explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / serialization failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace popo
