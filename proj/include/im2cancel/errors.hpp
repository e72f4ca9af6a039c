#ifndef IM2CANCEL_ERRORS_HPP
#define IM2CANCEL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace im2cancel {

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid parameter, configuration key or precondition.
struct ConfigError : Error {
    using Error::Error;
};

/// Bad input data (non-finite samples, wrong rates, empty masks).
struct InputError : Error {
    using Error::Error;
};

/// Malformed recording or table file. `offset` is the byte position of the fault.
struct FormatError : Error {
    FormatError(const std::string& what, long long offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
    long long offset;
};

/// The adaptive filter blew up: a non-finite value or a weight above the guard.
struct DivergenceError : Error {
    DivergenceError(const std::string& what, long long sample)
        : Error(what + " (sample " + std::to_string(sample) + ")"), sample(sample) {}
    long long sample;
};

} // namespace im2cancel

#endif
