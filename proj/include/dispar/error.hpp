#pragma once

#include <stdexcept>
#include <string>

namespace dispar {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file, config document or schema violation.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Semantically invalid request (bad roles, unknown columns, bad query).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Rank-deficient design matrix; message names the offending columns.
class SingularDesignError : public Error {
public:
    using Error::Error;
};

/// Iterative fit failed to converge (often quasi-separation in logit fits).
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A required conditional law has no support, or too many simulated rows
/// fell outside the fitted covariate ranges.
class PositivityError : public Error {
public:
    using Error::Error;
};

/// A group or stratum is empty or otherwise unusable.
class DegenerateGroupError : public Error {
public:
    using Error::Error;
};

/// Estimation-time failure that is not a config problem.
class EstimationError : public Error {
public:
    using Error::Error;
};

}  // namespace dispar
