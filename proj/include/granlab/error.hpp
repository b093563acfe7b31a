#pragma once

#include <stdexcept>
#include <string>

namespace granlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes incompatible with the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf showed up where a finite value was required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid experiment configuration, invalid pairing, or invalid argument.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A mathematical precondition of an analysis routine does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace granlab
