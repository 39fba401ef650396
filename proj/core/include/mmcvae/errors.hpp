#ifndef MMCVAE_ERRORS_HPP
#define MMCVAE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mmcvae {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A configuration value violates its documented range.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in a loss, gradient or estimator.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace mmcvae

#endif
