#pragma once

#include <stdexcept>
#include <string>

namespace fsgan {

/// Invalid model, training, or CLI configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Tensor or vector dimensions that do not match what an operation expects.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (ratio > 1, empty batch, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Input that is well-shaped but numerically unusable, e.g. a zero-norm activation.
class DegenerateInputError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Failure while reading a checkpoint, manifest, config file or dataset.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by the trainer when a loss becomes NaN or infinite.
class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fsgan
