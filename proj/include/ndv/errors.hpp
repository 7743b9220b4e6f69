#pragma once

#include <stdexcept>
#include <string>

namespace ndv {

// Base of every error raised by the library. The CLI maps subclasses to
// process exit codes (see ExitCode in cli.hpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced by a forward op or a finite-difference evaluation.
class NumericError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : NumericError(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Raised by training routines that could not reach their target (probe).
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace ndv
