#pragma once

#include <stdexcept>
#include <string>

namespace ffbsde {

/// Simulation produced a non-finite state or value.
class BlowUpError : public std::runtime_error {
public:
    explicit BlowUpError(const std::string& what) : std::runtime_error(what) {}
};

/// A user-supplied coefficient callable returned a non-finite value.
class CoefficientEvaluationError : public std::runtime_error {
public:
    explicit CoefficientEvaluationError(const std::string& what) : std::runtime_error(what) {}
};

/// An oracle fixed point failed to converge; no partial truth is returned.
class OracleDivergenceError : public std::runtime_error {
public:
    explicit OracleDivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Requested the stacked reduction for a problem whose driver or terminal
/// map reads the anchor arguments.
class UnsupportedReductionError : public std::runtime_error {
public:
    explicit UnsupportedReductionError(const std::string& what) : std::runtime_error(what) {}
};

/// Control problem outside the supported class (e.g. non-convex Hamiltonian).
class UnsupportedProblemError : public std::runtime_error {
public:
    explicit UnsupportedProblemError(const std::string& what) : std::runtime_error(what) {}
};

/// A study produced no rows above its Monte Carlo noise floor.
class InconclusiveStudyError : public std::runtime_error {
public:
    explicit InconclusiveStudyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ffbsde
