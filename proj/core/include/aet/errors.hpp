#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aet {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (shape mismatches, unit mismatches).
struct InvalidInput : Error {
    using Error::Error;
};

/// Invalid configuration values (degenerate maps, bad parameter files).
struct InvalidConfig : Error {
    using Error::Error;
};

/// A particle or acquisition spec that cannot be satisfied.
struct InfeasibleSpec : Error {
    using Error::Error;
};

/// Optimization aborted (non-finite gradients and similar).
struct OptimizerAbort : Error {
    using Error::Error;
};

/// File I/O failures. `kind` distinguishes the failure categories readers
/// must report; `byte_offset` is where a truncated payload ended.
struct IoError : Error {
    enum class Kind {
        OpenFailed,
        BadMagic,
        BadVersion,
        Truncated,
        Parse,
    };

    Kind kind;
    std::size_t byte_offset = 0;

    IoError(Kind k, const std::string& msg, std::size_t offset = 0)
        : Error(msg), kind(k), byte_offset(offset) {}
};

} // namespace aet
