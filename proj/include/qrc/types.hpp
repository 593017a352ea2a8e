#pragma once

// Shared numeric aliases and the exception hierarchy used across the library.

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace qrc {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or data file.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A physical or structural invariant does not hold.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Integration or linear algebra produced an unusable result.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace qrc
