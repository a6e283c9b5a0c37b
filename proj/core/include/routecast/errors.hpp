#pragma once

#include <stdexcept>
#include <string>

namespace routecast {

/// Base class for all routecast errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not conform for the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An invalid configuration value (dimensions, ratios, expert subsets).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or corrupt external input (datasets, edge lists, checkpoints).
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or numerically ill-posed requests.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace routecast
