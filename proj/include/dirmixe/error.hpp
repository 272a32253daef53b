#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dirmixe {

/// A numeric argument outside its documented domain (shape <= 0, rho < 1, ...).
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inconsistent or unusable configuration, detected before any work starts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a precondition that the type system could not express (shape mismatch, NaN input).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A required on-disk artifact (checkpoint, dataset, manifest) is absent or unreadable.
class MissingArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite objective.
class NumericalAbort : public std::runtime_error {
public:
    NumericalAbort(const std::string& what, double last_lr, std::size_t pair_index)
        : std::runtime_error(what), last_lr_(last_lr), pair_index_(pair_index) {}

    double last_lr() const noexcept { return last_lr_; }
    std::size_t pair_index() const noexcept { return pair_index_; }

private:
    double last_lr_;
    std::size_t pair_index_;
};

}  // namespace dirmixe
