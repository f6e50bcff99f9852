#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mmpred/types.hpp"

// Scheme-level building blocks, templated on the RHS callable
// (Vec f(const Vec& x)). The solver front end in solvers.hpp binds motion
// models and inputs to these; tests drive them with plain lambdas.

namespace mmpred {

template <class F>
Vec euler_step(F&& f, const Vec& x, double h) {
  return x + h * f(x);
}

template <class F>
Vec heun_step(F&& f, const Vec& x, double h) {
  const Vec k1 = f(x);
  const Vec k2 = f(x + h * k1);
  return x + 0.5 * h * (k1 + k2);
}

/// Kutta's third-order scheme.
template <class F>
Vec rk3_step(F&& f, const Vec& x, double h) {
  const Vec k1 = f(x);
  const Vec k2 = f(x + 0.5 * h * k1);
  const Vec k3 = f(x - h * k1 + 2.0 * h * k2);
  return x + h / 6.0 * (k1 + 4.0 * k2 + k3);
}

template <class F>
Vec rk4_step(F&& f, const Vec& x, double h) {
  const Vec k1 = f(x);
  const Vec k2 = f(x + 0.5 * h * k1);
  const Vec k3 = f(x + 0.5 * h * k2);
  const Vec k4 = f(x + h * k3);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace dopri {

// Dormand-Prince 5(4) tableau; stage 7 equals the 5th-order solution (FSAL).
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace dopri

struct DopriAttempt {
  Vec x_next;
  Vec error;
  Vec k_end;  // f(x_next); reusable as k1 of the next step under FSAL
};

template <class F>
DopriAttempt dopri45_attempt(F&& f, const Vec& x, double h, const Vec* k1_cached) {
  using namespace dopri;
  const Vec k1 = k1_cached ? *k1_cached : Vec(f(x));
  const Vec k2 = f(x + h * (a21 * k1));
  const Vec k3 = f(x + h * (a31 * k1 + a32 * k2));
  const Vec k4 = f(x + h * (a41 * k1 + a42 * k2 + a43 * k3));
  const Vec k5 = f(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const Vec k6 = f(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
  DopriAttempt out;
  out.x_next = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  out.k_end = f(out.x_next);
  out.error = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * out.k_end);
  return out;
}

/// RMS of the componentwise error scaled by atol + rtol * max(|x|, |x_next|).
/// A value <= 1 means the step is acceptable.
inline double scaled_error_norm(const Vec& err, const Vec& x0, const Vec& x1, double rtol,
                                double atol) {
  double acc = 0.0;
  for (int i = 0; i < err.size(); ++i) {
    const double scale = atol + rtol * std::max(std::abs(x0[i]), std::abs(x1[i]));
    const double e = err[i] / scale;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

inline double dopri_step_factor(double err_norm) {
  if (err_norm == 0.0) return 5.0;
  return std::min(5.0, std::max(0.2, 0.9 * std::pow(err_norm, -0.2)));
}

inline constexpr double kMinAdaptiveStep = 1e-6;  // seconds

struct AdaptiveOutcome {
  Vec x_next;
  double h_used = 0.0;
  double h_next = 0.0;
  Vec k_end;
};

/// Repeats Dormand-Prince attempts, shrinking h until the scaled error norm
/// accepts. Throws on step underflow.
template <class F>
AdaptiveOutcome dopri45_controlled_step(F&& f, const Vec& x, double h_try, double rtol,
                                        double atol, const Vec* k1_cached) {
  if (h_try <= 0.0) throw std::invalid_argument("adaptive step: trial step size must be positive");
  if (rtol <= 0.0 || atol <= 0.0) throw std::invalid_argument("adaptive step: tolerances must be positive");
  double h = h_try;
  // k1 depends only on x, so it survives rejected attempts.
  const Vec k1 = k1_cached ? *k1_cached : Vec(f(x));
  for (int attempt = 0; attempt < 200; ++attempt) {
    DopriAttempt trial = dopri45_attempt(f, x, h, &k1);
    double err_norm;
    if (!trial.x_next.allFinite() || !trial.error.allFinite()) {
      err_norm = std::numeric_limits<double>::infinity();
    } else {
      err_norm = scaled_error_norm(trial.error, x, trial.x_next, rtol, atol);
    }
    if (err_norm <= 1.0) {
      return {std::move(trial.x_next), h, h * dopri_step_factor(err_norm), std::move(trial.k_end)};
    }
    h *= std::isinf(err_norm) ? 0.5 : dopri_step_factor(err_norm);
    if (h < kMinAdaptiveStep) {
      throw NumericError("adaptive step size underflow below 1e-6 s");
    }
  }
  throw NumericError("adaptive step: no acceptable step after 200 attempts");
}

namespace adams {

// Bashforth weights on (f_n, f_{n-1}, ...) and Moulton weights split into the
// lead coefficient on f_{n+1} plus history weights, per order 1..4.
inline constexpr double kBashforth[4][4] = {{1.0, 0.0, 0.0, 0.0},
                                            {3.0 / 2, -1.0 / 2, 0.0, 0.0},
                                            {23.0 / 12, -16.0 / 12, 5.0 / 12, 0.0},
                                            {55.0 / 24, -59.0 / 24, 37.0 / 24, -9.0 / 24}};
inline constexpr double kMoultonLead[4] = {1.0, 1.0 / 2, 5.0 / 12, 9.0 / 24};
inline constexpr double kMoultonHist[4][3] = {{0.0, 0.0, 0.0},
                                              {1.0 / 2, 0.0, 0.0},
                                              {8.0 / 12, -1.0 / 12, 0.0},
                                              {19.0 / 24, -5.0 / 24, 1.0 / 24}};

}  // namespace adams

/// Bashforth-predicted, Moulton-corrected step from state xn given the
/// derivative history [f_n, f_{n-1}, ...] (most recent first). The order is
/// min(4, history length). The corrector is iterated to a fixed point;
/// exhausting max_iters throws CorrectorError carrying the last iterate.
template <class F>
Vec implicit_adams_step(F&& f, const Vec& xn, const std::vector<Vec>& f_recent_first, double h,
                        double corrector_tol, int max_iters) {
  if (f_recent_first.empty()) {
    throw std::invalid_argument("implicit Adams: derivative history needs at least one entry");
  }
  if (max_iters < 1) throw std::invalid_argument("implicit Adams: max_iters must be at least 1");
  if (!(corrector_tol > 0.0)) {
    throw std::invalid_argument("implicit Adams: corrector_tol must be positive");
  }
  const int order = static_cast<int>(std::min<std::size_t>(4, f_recent_first.size()));

  Vec predicted = xn;
  for (int i = 0; i < order; ++i) {
    predicted += h * adams::kBashforth[order - 1][i] * f_recent_first[static_cast<std::size_t>(i)];
  }

  Vec known = xn;
  for (int i = 0; i + 1 < order; ++i) {
    known += h * adams::kMoultonHist[order - 1][i] * f_recent_first[static_cast<std::size_t>(i)];
  }
  const double beta0 = adams::kMoultonLead[order - 1];

  Vec y = std::move(predicted);
  for (int iter = 0; iter < max_iters; ++iter) {
    Vec y_next = known + (h * beta0) * f(y);
    if (!y_next.allFinite()) {
      throw DivergenceError("implicit Adams: corrector iterate diverged", iter);
    }
    const double change = (y_next - y).cwiseAbs().maxCoeff();
    y = std::move(y_next);
    if (change < corrector_tol) return y;
  }
  throw CorrectorError("implicit Adams: corrector failed to converge", y);
}

/// Advances from t=0 to t=duration with the Dormand-Prince controller,
/// clamping the final step onto the endpoint. h_prop carries the step-size
/// proposal across calls.
template <class F>
Vec dopri45_advance(F&& f, Vec x, double duration, double& h_prop, double rtol, double atol,
                    int* accepted_steps = nullptr) {
  double t = 0.0;
  std::optional<Vec> k_cache;
  while (t < duration * (1.0 - 1e-14)) {
    const double h_try = std::min(h_prop, duration - t);
    AdaptiveOutcome out =
        dopri45_controlled_step(f, x, h_try, rtol, atol, k_cache ? &*k_cache : nullptr);
    t += out.h_used;
    x = std::move(out.x_next);
    k_cache = std::move(out.k_end);
    h_prop = out.h_next;
    if (accepted_steps) ++*accepted_steps;
  }
  return x;
}

}  // namespace mmpred
