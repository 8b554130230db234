#pragma once

#include <stdexcept>
#include <string>

namespace vitgan {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or axes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A layer, network or experiment configuration is invalid.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was violated by its caller.
class ContractError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

/// File could not be read, written or decoded.
class IoError : public Error {
public:
    using Error::Error;
};

/// Checkpoint container rejected on load.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Non-finite value or failed numerical routine.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A training step produced a non-finite loss.
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& what, long long step)
        : NumericError(what + " at step " + std::to_string(step)), step_(step) {}

    long long step() const noexcept { return step_; }

private:
    long long step_;
};

}  // namespace vitgan
