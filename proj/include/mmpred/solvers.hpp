#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mmpred/models.hpp"
#include "mmpred/types.hpp"

namespace mmpred {

enum class SolverKind {
  EulerForward,
  Heun,
  RK3,
  RK4,
  RK45,          // Dormand-Prince 5(4), adaptive step within each interval
  ImplicitAdams  // Adams-Bashforth predictor / Adams-Moulton corrector, orders 1-4
};

const char* solver_kind_name(SolverKind kind);
SolverKind parse_solver_kind(const std::string& name);

struct SolverSpec {
  SolverKind kind = SolverKind::RK4;
  double h = 0.2;       // fixed-step kinds
  double rtol = 1e-6;   // adaptive only
  double atol = 1e-8;   // adaptive only
  double corrector_tol = 1e-10;  // implicit Adams only
  int max_corrector_iters = 50;  // implicit Adams only
};

void validate(const SolverSpec& solver);

void to_json(nlohmann::json& j, const SolverSpec& solver);
void from_json(const nlohmann::json& j, SolverSpec& solver);

/// Counts right-hand-side evaluations across solver calls that receive it.
struct FevalCounter {
  long long count = 0;
};

/// Advances the model by one interval of length h under held input u.
/// This is the discrete transition the filtering layer linearizes: fixed-step
/// schemes take a single step, RK45 subdivides the interval adaptively, and
/// implicit Adams restarts from an order-1 history.
Vec step(const SolverSpec& solver, const ModelSpec& model, const Vec& x, const Input& u, double h,
         FevalCounter* fevals = nullptr);

struct AdaptiveStepResult {
  Vec x_next;
  double h_used = 0.0;  // accepted step size
  double h_next = 0.0;  // proposal for the following step
};

/// One accepted Dormand-Prince step starting from trial size h_try.
/// Shrinks the step until the scaled error norm accepts; throws NumericError
/// if the step size falls below 1e-6 s.
AdaptiveStepResult step_adaptive_rk45(const ModelSpec& model, const Vec& x, const Input& u,
                                      double h_try, double rtol, double atol,
                                      FevalCounter* fevals = nullptr);

struct AdamsHistoryEntry {
  Vec x;
  Vec f;  // rhs evaluated at x under the input active at that step
};

/// Most recent entry last; at most the four newest entries are consulted.
/// Callers that maintain this across steps get the genuine order ramp;
/// step() and integrate() restart from a single pair each interval.
using AdamsHistory = std::vector<AdamsHistoryEntry>;

/// Predictor-corrector step whose order ramps with the available history
/// (1 through 4). The Adams-Moulton corrector is solved by fixed-point
/// iteration; failure to contract within max_iters throws CorrectorError.
Vec step_implicit_adams(const ModelSpec& model, const AdamsHistory& history, const Input& u,
                        double h, double corrector_tol, int max_iters,
                        FevalCounter* fevals = nullptr);

/// Rolls a state forward by one step() per input, holding each input constant
/// across its interval. Adaptive and multistep internals restart every
/// interval, so state k+1 is a function of state k and input k alone. Returns
/// one state per input, x0 excluded. Non-finite states abort with
/// DivergenceError carrying the interval index.
std::vector<Vec> integrate(const SolverSpec& solver, const ModelSpec& model, const Vec& x0,
                           const std::vector<Input>& inputs, double ts,
                           FevalCounter* fevals = nullptr);

/// Jacobian of the one-interval map x -> step(solver, model, x, u, h) by
/// central differences with per-coordinate step 1e-5 * (1 + |x_i|).
Mat discrete_jacobian(const SolverSpec& solver, const ModelSpec& model, const Vec& x,
                      const Input& u, double h);

/// Closed form I + h * A(x, u) available for the forward Euler map.
Mat euler_discrete_jacobian(const ModelSpec& model, const Vec& x, const Input& u, double h);

/// Least-squares slope of log(error) against log(h).
double fit_loglog_slope(const std::vector<double>& hs, const std::vector<double>& errors);

struct OrderStudySeries {
  SolverKind solver = SolverKind::EulerForward;
  std::vector<double> hs;
  std::vector<double> errors;  // max_k |x_h(t_k) - x_exact(t_k)| over the grid
  double slope = 0.0;
};

/// Integrates dx/dt = -x + sin(t), x(0) = 1, to T = 2 at a ladder of fixed
/// steps and reports the grid-max global error with its observed convergence
/// slope for each of the four fixed-step schemes.
std::vector<OrderStudySeries> solver_order_study();

}  // namespace mmpred
