#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mvrds {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when an argument lies outside the domain of an operation
/// (off-grid times, mismatched grids, reversed intervals, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when a numerical solver aborts (blow-up guard, non-finite values,
/// step-size failure).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mvrds
