#pragma once

#include <stdexcept>
#include <string>

namespace refield {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array or raster shapes that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed, missing or inconsistent input data (files, manifests, models).
class DataError : public Error {
public:
    using Error::Error;
};

/// Overlapping charts in a UV atlas.
class AtlasError : public DataError {
public:
    using DataError::DataError;
};

/// Non-finite values, divergence or an ill-posed solve.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace refield
