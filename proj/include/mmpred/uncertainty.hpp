#pragma once

#include <vector>

#include "mmpred/models.hpp"
#include "mmpred/solvers.hpp"
#include "mmpred/types.hpp"

namespace mmpred {

/// Pre-activation process-noise parameters, as emitted by a fitted generator.
struct ProcessNoiseParams {
  double raw_sigma1 = 0.0;
  double raw_sigma2 = 0.0;
  double raw_rho = 0.0;
};

/// Activated 2x2 process-noise covariance:
///   sigma_i = softplus(raw_sigma_i) + 1e-6,  rho = 0.999 * tanh(raw_rho),
/// which keeps Q positive definite for any raw values.
Mat2 build_Q(const ProcessNoiseParams& params);

/// EKF prediction step: the mean advances by one solver interval and the
/// covariance by F P F^T + G Q G^T, where F linearizes the discrete solver
/// map and G injects noise into the two highest-order states. The result is
/// symmetrized to keep round-off from accumulating.
BeliefState ekf_predict(const ModelSpec& model, const SolverSpec& solver,
                        const BeliefState& belief, const Input& u, const Mat2& Q, double ts);

/// Horizon loop over ekf_predict with one input and one Q per step.
/// For models whose dynamics are linear in the state, F is computed once and
/// reused across the horizon under fixed-step solvers.
std::vector<BeliefState> propagate(const ModelSpec& model, const SolverSpec& solver,
                                   const BeliefState& belief0, const std::vector<Input>& inputs,
                                   const std::vector<Mat2>& qs, double ts);

}  // namespace mmpred
