#ifndef CURVEMIX_ERRORS_HPP
#define CURVEMIX_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace curvemix {

/// Base class for all curvemix errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Problems with input data, files, or schemas (CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failures in factorizations or optimization (CLI exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class OptimizationFailed : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InvalidHyperparameter : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DimensionMismatch : public DataError {
public:
    using DataError::DataError;
};

class EmptyInput : public DataError {
public:
    using DataError::DataError;
};

class InsufficientData : public DataError {
public:
    using DataError::DataError;
};

class DegenerateTargets : public DataError {
public:
    using DataError::DataError;
};

class DegenerateAxis : public DataError {
public:
    using DataError::DataError;
};

class InvalidQuantile : public DataError {
public:
    using DataError::DataError;
};

class InvalidSimplex : public DataError {
public:
    using DataError::DataError;
};

class WrongDimension : public DataError {
public:
    using DataError::DataError;
};

class FileNotFound : public DataError {
public:
    using DataError::DataError;
};

class SchemaMismatch : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& msg, long row) : DataError(msg), row_(row) {}
    long row() const { return row_; }

private:
    long row_;
};

class IoError : public DataError {
public:
    using DataError::DataError;
};

class SchemaVersionMismatch : public DataError {
public:
    using DataError::DataError;
};

class CorruptModel : public DataError {
public:
    using DataError::DataError;
};

}  // namespace curvemix

#endif
