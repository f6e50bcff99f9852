#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "mmpred/integrators.hpp"
#include "mmpred/models.hpp"
#include "mmpred/rng.hpp"
#include "mmpred/solvers.hpp"

using namespace mmpred;

namespace {

Vec scalar(double v) {
  Vec x(1);
  x[0] = v;
  return x;
}

// dx/dt = x, the classic growth oracle for single steps.
const auto kGrowth = [](const Vec& x) { return Vec(x); };

SolverSpec make_spec(SolverKind kind) {
  SolverSpec s;
  s.kind = kind;
  return s;
}

const SolverKind kAllSolvers[] = {SolverKind::EulerForward, SolverKind::Heun, SolverKind::RK3,
                                  SolverKind::RK4,          SolverKind::RK45, SolverKind::ImplicitAdams};

}  // namespace

TEST_CASE("scheme kernels on exponential growth") {
  const Vec x = scalar(1.0);
  CHECK(euler_step(kGrowth, x, 0.2)[0] == doctest::Approx(1.2).epsilon(1e-14));
  CHECK(heun_step(kGrowth, x, 0.2)[0] == doctest::Approx(1.22).epsilon(1e-14));
  CHECK(rk3_step(kGrowth, x, 0.2)[0] == doctest::Approx(1.2213333333333333).epsilon(1e-14));
  CHECK(rk4_step(kGrowth, x, 0.2)[0] == doctest::Approx(1.2214).epsilon(1e-14));
}

TEST_CASE("order-1 corrector finds the backward-Euler fixed point") {
  // dx/dt = -x from x=1: the corrected step solves y = 1 - 0.2 y.
  const auto decay = [](const Vec& x) { return Vec(-x); };
  const std::vector<Vec> hist = {scalar(-1.0)};
  const Vec y = implicit_adams_step(decay, scalar(1.0), hist, 0.2, 1e-10, 50);
  CHECK(y[0] == doctest::Approx(1.0 / 1.2).epsilon(1e-9));
}

TEST_CASE("constant derivative corrects in a single iteration") {
  const auto constant = [](const Vec&) { return scalar(3.0); };
  const std::vector<Vec> hist = {scalar(3.0)};
  const Vec y = implicit_adams_step(constant, scalar(2.0), hist, 0.2, 1e-10, 1);
  CHECK(y[0] == doctest::Approx(2.6).epsilon(1e-14));
}

TEST_CASE("fourth-order corrector integrates cubics exactly") {
  // z = [x, t] with dx/dt = t^3; the four-node corrector interpolates the
  // cubic without error.
  const auto f = [](const Vec& z) {
    Vec d(2);
    d[0] = z[1] * z[1] * z[1];
    d[1] = 1.0;
    return d;
  };
  const double h = 0.1;
  std::vector<Vec> f_recent_first;
  for (double t : {0.3, 0.2, 0.1, 0.0}) {
    Vec z(2);
    z << 0.0, t;
    f_recent_first.push_back(f(z));
  }
  Vec zn(2);
  zn << std::pow(0.3, 4) / 4.0, 0.3;
  const Vec z_next = implicit_adams_step(f, zn, f_recent_first, h, 1e-13, 50);
  CHECK(z_next[0] == doctest::Approx(std::pow(0.4, 4) / 4.0).epsilon(1e-13));
  CHECK(z_next[1] == doctest::Approx(0.4).epsilon(1e-13));
}

TEST_CASE("corrector exhaustion reports the last iterate") {
  const auto decay = [](const Vec& x) { return Vec(-x); };
  const std::vector<Vec> hist = {scalar(-1.0)};
  try {
    implicit_adams_step(decay, scalar(1.0), hist, 0.2, 1e-10, 1);
    FAIL("expected CorrectorError");
  } catch (const CorrectorError& e) {
    REQUIRE(e.last_iterate.size() == 1);
    // Predictor 0.8, single correction 1 - 0.2*0.8.
    CHECK(e.last_iterate[0] == doctest::Approx(0.84).epsilon(1e-14));
  }
}

TEST_CASE("corrector argument validation") {
  const auto decay = [](const Vec& x) { return Vec(-x); };
  CHECK_THROWS_AS(implicit_adams_step(decay, scalar(1.0), {}, 0.2, 1e-10, 50),
                  std::invalid_argument);
  CHECK_THROWS_AS(implicit_adams_step(decay, scalar(1.0), {scalar(-1.0)}, 0.2, 1e-10, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(implicit_adams_step(decay, scalar(1.0), {scalar(-1.0)}, 0.2, 0.0, 50),
                  std::invalid_argument);
}

TEST_CASE("adaptive integration reaches e to tight tolerance") {
  double h_prop = 0.1;
  int accepted = 0;
  const Vec x1 = dopri45_advance(kGrowth, scalar(1.0), 1.0, h_prop, 1e-9, 1e-9, &accepted);
  CHECK(std::abs(x1[0] - std::exp(1.0)) < 1e-7);
  CHECK(accepted >= 1);
}

TEST_CASE("scaled error norm and step factor") {
  CHECK(scaled_error_norm(scalar(0.001), scalar(1.0), scalar(2.0), 0.1, 0.01) ==
        doctest::Approx(0.001 / 0.21).epsilon(1e-12));
  CHECK(dopri_step_factor(0.0) == doctest::Approx(5.0));
  CHECK(dopri_step_factor(1.0) == doctest::Approx(0.9));
  CHECK(dopri_step_factor(1e12) == doctest::Approx(0.2));
  CHECK(dopri_step_factor(1e-12) == doctest::Approx(5.0));
}

TEST_CASE("persistent rejection underflows the step size") {
  const auto bad = [](const Vec& x) {
    return Vec(Vec::Constant(x.size(), std::numeric_limits<double>::quiet_NaN()));
  };
  CHECK_THROWS_AS(dopri45_controlled_step(bad, scalar(1.0), 0.2, 1e-6, 1e-8, nullptr),
                  NumericError);
}

TEST_CASE("adaptive step on constant acceleration") {
  const ModelSpec m = make_model(ModelKind::TwoXI);
  Vec x = Vec::Zero(4);
  const AdaptiveStepResult r = step_adaptive_rk45(m, x, Input(1.0, 0.0), 0.2, 1e-6, 1e-8);
  // Quadratic dynamics carry no truncation error, so the trial step holds
  // and the proposal grows by the capped factor 5.
  CHECK(r.h_used == doctest::Approx(0.2));
  CHECK(r.h_next == doctest::Approx(1.0));
  CHECK(r.x_next[0] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(r.x_next[2] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(step_adaptive_rk45(m, x, Input(1.0, 0.0), 0.0, 1e-6, 1e-8),
                  std::invalid_argument);
}

TEST_CASE("rhs evaluation counts per fixed step") {
  const ModelSpec m = make_model(ModelKind::TwoXI);
  Vec x = Vec::Zero(4);
  const std::pair<SolverKind, long long> expected[] = {{SolverKind::EulerForward, 1},
                                                       {SolverKind::Heun, 2},
                                                       {SolverKind::RK3, 3},
                                                       {SolverKind::RK4, 4}};
  for (const auto& [kind, count] : expected) {
    FevalCounter fevals;
    step(make_spec(kind), m, x, Input(1.0, 0.0), 0.2, &fevals);
    CHECK(fevals.count == count);
  }

  FevalCounter rk45;
  step(make_spec(SolverKind::RK45), m, x, Input(1.0, 0.0), 0.2, &rk45);
  CHECK(rk45.count == 7);  // six stages plus the trailing evaluation

  FevalCounter adams;
  const ModelSpec one = make_model(ModelKind::OneXI);
  step(make_spec(SolverKind::ImplicitAdams), one, Vec::Zero(2), Input(1.0, 0.0), 0.2, &adams);
  CHECK(adams.count == 2);  // history seed plus one corrector pass
}

TEST_CASE("constant-derivative rollouts are exact for every solver") {
  const ModelSpec m = make_model(ModelKind::OneXI);
  Vec x0 = Vec::Zero(2);
  const std::vector<Input> inputs(25, Input(1.0, 0.0));
  for (SolverKind kind : kAllSolvers) {
    const std::vector<Vec> traj = integrate(make_spec(kind), m, x0, inputs, 0.2);
    REQUIRE(traj.size() == 25);
    CHECK(std::abs(traj.back()[0] - 5.0) < 1e-12);
    CHECK(std::abs(traj.back()[1]) < 1e-12);
  }
}

TEST_CASE("constant acceleration closed form per solver") {
  const ModelSpec m = make_model(ModelKind::TwoXI);
  Vec x0 = Vec::Zero(4);
  const std::vector<Input> inputs(25, Input(1.0, 0.0));
  const auto final_x = [&](SolverKind kind) {
    return integrate(make_spec(kind), m, x0, inputs, 0.2).back();
  };
  // 1/2 a t^2 over 5 s; schemes of order >= 2 integrate quadratics exactly.
  for (SolverKind kind : {SolverKind::Heun, SolverKind::RK3, SolverKind::RK4, SolverKind::RK45}) {
    const Vec xf = final_x(kind);
    CHECK(xf[0] == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(xf[2] == doctest::Approx(5.0).epsilon(1e-12));
  }
  // First-order maps bracket the closed form from the two rectangle rules.
  CHECK(final_x(SolverKind::EulerForward)[0] == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(final_x(SolverKind::ImplicitAdams)[0] == doctest::Approx(13.0).epsilon(1e-12));
}

TEST_CASE("empty input sequence yields empty output") {
  const ModelSpec m = make_model(ModelKind::OneXI);
  CHECK(integrate(make_spec(SolverKind::RK4), m, Vec::Zero(2), {}, 0.2).empty());
}

TEST_CASE("rollouts are a fold of single steps") {
  const ModelSpec m = make_model(ModelKind::Unicycle);
  Vec x0(4);
  x0 << 0.0, 0.0, 0.1, 6.0;
  Rng rng(21);
  std::vector<Input> inputs;
  for (int k = 0; k < 12; ++k) {
    inputs.emplace_back(rng.uniform(-0.5, 0.5), rng.uniform(-1.0, 1.0));
  }
  for (SolverKind kind : kAllSolvers) {
    const SolverSpec spec = make_spec(kind);
    const std::vector<Vec> traj = integrate(spec, m, x0, inputs, 0.2);
    Vec x = x0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      x = step(spec, m, x, inputs[k], 0.2);
      CHECK((x - traj[k]).norm() == 0.0);  // bitwise: no hidden state carries over
    }
  }
}

TEST_CASE("repeated rollouts are bit-identical") {
  const ModelSpec m = make_model(ModelKind::Unicycle);
  Vec x0(4);
  x0 << 0.0, 0.0, 0.1, 6.0;
  const std::vector<Input> inputs(30, Input(0.3, 0.5));
  const auto once = integrate(make_spec(SolverKind::RK45), m, x0, inputs, 0.2);
  const auto twice = integrate(make_spec(SolverKind::RK45), m, x0, inputs, 0.2);
  for (std::size_t k = 0; k < once.size(); ++k) CHECK((once[k] - twice[k]).norm() == 0.0);
}

TEST_CASE("discrete jacobian of trivial maps") {
  const ModelSpec one = make_model(ModelKind::OneXI);
  for (SolverKind kind : kAllSolvers) {
    const Mat J = discrete_jacobian(make_spec(kind), one, Vec::Zero(2), Input(1.0, -1.0), 0.2);
    CHECK((J - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
  }

  const ModelSpec two = make_model(ModelKind::TwoXI);
  Mat expected = Mat::Identity(4, 4);
  expected(0, 2) = 0.2;
  expected(1, 3) = 0.2;
  const Mat J2 =
      discrete_jacobian(make_spec(SolverKind::EulerForward), two, Vec::Zero(4), Input(0.0, 0.0), 0.2);
  CHECK((J2 - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("analytic Euler jacobian matches its numeric counterpart") {
  const ModelSpec m = make_model(ModelKind::Unicycle);
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Vec x(4);
    x << rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-3.0, 3.0),
        rng.uniform(1.0, 12.0);
    const Input u(rng.uniform(-1.0, 1.0), rng.uniform(-3.0, 3.0));
    const Mat analytic = euler_discrete_jacobian(m, x, u, 0.2);
    const Mat numeric = discrete_jacobian(make_spec(SolverKind::EulerForward), m, x, u, 0.2);
    CHECK((analytic - numeric).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("empirical convergence orders") {
  const std::vector<OrderStudySeries> series = solver_order_study();
  REQUIRE(series.size() == 4);
  const struct {
    SolverKind kind;
    double order;
    double tol;
  } expected[] = {{SolverKind::EulerForward, 1.0, 0.15},
                  {SolverKind::Heun, 2.0, 0.15},
                  {SolverKind::RK3, 3.0, 0.2},
                  {SolverKind::RK4, 4.0, 0.3}};
  for (std::size_t i = 0; i < series.size(); ++i) {
    CHECK(series[i].solver == expected[i].kind);
    REQUIRE(series[i].errors.size() == 4);
    CHECK(std::abs(series[i].slope - expected[i].order) <= expected[i].tol);
    // Errors shrink monotonically along the step ladder.
    for (std::size_t j = 1; j < series[i].errors.size(); ++j) {
      CHECK(series[i].errors[j] < series[i].errors[j - 1]);
    }
  }
}

TEST_CASE("adaptive endpoint error on the damped forced oscillator") {
  const auto f = [](const Vec& z) {
    Vec d(2);
    d[0] = -z[0] + std::sin(z[1]);
    d[1] = 1.0;
    return d;
  };
  Vec z0(2);
  z0 << 1.0, 0.0;
  double h_prop = 0.2;
  const Vec zf = dopri45_advance(f, z0, 2.0, h_prop, 1e-8, 1e-8);
  const double exact = 1.5 * std::exp(-2.0) + 0.5 * (std::sin(2.0) - std::cos(2.0));
  CHECK(std::abs(zf[0] - exact) < 1e-6);
}

TEST_CASE("log-log slope recovery") {
  const std::vector<double> hs = {0.2, 0.1, 0.05, 0.025};
  std::vector<double> errors;
  for (double h : hs) errors.push_back(7.0 * h * h * h);
  CHECK(fit_loglog_slope(hs, errors) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_loglog_slope({0.1}, {1.0}), std::invalid_argument);
}

TEST_CASE("solver names and serialization") {
  for (SolverKind kind : kAllSolvers) {
    CHECK(parse_solver_kind(solver_kind_name(kind)) == kind);
  }
  CHECK(parse_solver_kind("implicit_adams") == SolverKind::ImplicitAdams);
  CHECK_THROWS_AS(parse_solver_kind("bdf"), std::invalid_argument);

  SolverSpec spec;
  spec.kind = SolverKind::RK45;
  spec.h = 0.1;
  spec.rtol = 1e-7;
  spec.atol = 1e-9;
  nlohmann::json j = spec;
  const SolverSpec back = j.get<SolverSpec>();
  CHECK(back.kind == spec.kind);
  CHECK(back.h == doctest::Approx(spec.h));
  CHECK(back.rtol == doctest::Approx(spec.rtol));
  CHECK(back.atol == doctest::Approx(spec.atol));
}

TEST_CASE("spec validation rejects bad ranges") {
  SolverSpec s;
  s.h = 0.0;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = SolverSpec{};
  s.rtol = -1.0;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = SolverSpec{};
  s.max_corrector_iters = 0;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
}

TEST_CASE("divergence errors carry the step index") {
  const DivergenceError e("integration diverged", 3);
  CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  CHECK(e.step_index == 3);
}
