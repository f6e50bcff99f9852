#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mmpred {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Motion-model input, always two channels.
using Input = Eigen::Vector2d;

/// State covariance; kept symmetric by construction in the propagation code.
using Covariance = Mat;

struct BeliefState {
  Vec mean;
  Covariance cov;
};

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Numeric failures that map to CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A solver produced a non-finite state, with the offending step attached.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& what, int step)
      : NumericError(what + " (step " + std::to_string(step) + ")"), step_index(step) {}
  int step_index;
};

struct DegenerateCovarianceError : NumericError {
  using NumericError::NumericError;
};

/// Implicit corrector failed to converge; carries the last iterate.
struct CorrectorError : NumericError {
  CorrectorError(const std::string& what, Vec iterate)
      : NumericError(what), last_iterate(std::move(iterate)) {}
  Vec last_iterate;
};

/// Malformed input files (CSV schema, JSON config).
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mmpred
