#include "mmpred/uncertainty.hpp"

#include <cmath>
#include <stdexcept>

namespace mmpred {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

bool linear_in_state(const ModelSpec& model) {
  switch (model.kind) {
    case ModelKind::OneXI:
    case ModelKind::TwoXI:
    case ModelKind::ThreeXI:
    case ModelKind::ConstVel:
    case ModelKind::ConstAcc:
      return true;
    default:
      return false;
  }
}

bool fixed_step_kind(SolverKind kind) {
  return kind == SolverKind::EulerForward || kind == SolverKind::Heun ||
         kind == SolverKind::RK3 || kind == SolverKind::RK4;
}

void check_belief(const ModelSpec& model, const BeliefState& belief) {
  const int n = model.state_dim();
  if (belief.mean.size() != n || belief.cov.rows() != n || belief.cov.cols() != n) {
    throw std::invalid_argument("belief dimensions do not match model state");
  }
}

BeliefState predict_with_jacobian(const ModelSpec& model, const SolverSpec& solver,
                                  const BeliefState& belief, const Input& u, const Mat2& q,
                                  double ts, const Mat& f_disc, const Mat& g) {
  BeliefState out;
  out.mean = step(solver, model, belief.mean, u, ts);
  const Mat cov = f_disc * belief.cov * f_disc.transpose() + g * q * g.transpose();
  out.cov = symmetrized(cov);
  return out;
}

}  // namespace

Mat2 build_Q(const ProcessNoiseParams& params) {
  const double s1 = softplus(params.raw_sigma1) + 1e-6;
  const double s2 = softplus(params.raw_sigma2) + 1e-6;
  const double rho = 0.999 * std::tanh(params.raw_rho);
  Mat2 q;
  q << s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2;
  return q;
}

BeliefState ekf_predict(const ModelSpec& model, const SolverSpec& solver,
                        const BeliefState& belief, const Input& u, const Mat2& q, double ts) {
  check_belief(model, belief);
  const Mat f_disc = discrete_jacobian(solver, model, belief.mean, u, ts);
  const Mat g = noise_input_matrix(model, ts);
  return predict_with_jacobian(model, solver, belief, u, q, ts, f_disc, g);
}

std::vector<BeliefState> propagate(const ModelSpec& model, const SolverSpec& solver,
                                   const BeliefState& belief0, const std::vector<Input>& inputs,
                                   const std::vector<Mat2>& qs, double ts) {
  if (inputs.size() != qs.size()) {
    throw std::invalid_argument("propagate: inputs and process-noise sequences differ in length");
  }
  check_belief(model, belief0);

  const Mat g = noise_input_matrix(model, ts);
  const bool reuse_jacobian = linear_in_state(model) && fixed_step_kind(solver.kind);
  Mat f_cached;
  if (reuse_jacobian && !inputs.empty()) {
    f_cached = discrete_jacobian(solver, model, belief0.mean, inputs.front(), ts);
  }

  std::vector<BeliefState> beliefs;
  beliefs.reserve(inputs.size());
  BeliefState current = belief0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    try {
      const Mat& f_disc = reuse_jacobian
                              ? f_cached
                              : (f_cached = discrete_jacobian(solver, model, current.mean,
                                                              inputs[k], ts));
      current = predict_with_jacobian(model, solver, current, inputs[k], qs[k], ts, f_disc, g);
    } catch (const DivergenceError&) {
      throw DivergenceError("EKF propagation diverged", static_cast<int>(k));
    }
    beliefs.push_back(current);
  }
  return beliefs;
}

}  // namespace mmpred
