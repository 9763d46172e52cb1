#pragma once

#include <stdexcept>
#include <string>

namespace immunize {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Structural mismatch between arrays (dimensions, sizes, layer shapes).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value (epsilon <= 0, empty timestep set, bad manifest ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File-system or codec failure during image / report I/O.
class IoError : public Error {
public:
    using Error::Error;
};

/// A backend was asked for an operation it does not support (e.g. gradients
/// on an edit-only adapter).
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Transport-level backend failure. Carries retry metadata so callers can
/// report how hard the adapter tried.
class BackendError : public Error {
public:
    BackendError(const std::string& what, int attempts)
        : Error(what), attempts_(attempts) {}
    int attempts() const { return attempts_; }

private:
    int attempts_ = 0;
};

/// Judge transport failure after the configured backoff schedule.
class JudgeError : public Error {
public:
    JudgeError(const std::string& what, int attempts)
        : Error(what), attempts_(attempts) {}
    int attempts() const { return attempts_; }

private:
    int attempts_ = 0;
};

/// Raised when strict aggregation receives fewer than two valid verdicts;
/// the orchestrator converts it into a sample exclusion.
class InsufficientVerdicts : public Error {
public:
    using Error::Error;
};

}  // namespace immunize
