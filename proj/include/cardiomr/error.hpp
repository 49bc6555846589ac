#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cardiomr {

/// Invalid or incomplete scenario/model parameters. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical breakdown during a run (degenerate CFL, solver failure). Exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear solve did not reach the requested residual within the iteration cap.
class SolverDivergence : public NumericalError {
public:
    SolverDivergence(const std::string& what, std::vector<double> history)
        : NumericalError(what), residual_history(std::move(history)) {}

    std::vector<double> residual_history;
};

/// Broken internal invariant (e.g. a flux link that should have been resolved).
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace cardiomr
