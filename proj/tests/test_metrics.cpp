#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "mmpred/metrics.hpp"
#include "mmpred/rng.hpp"

using namespace mmpred;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<Vec2> line_along_x(int n, double spacing, double y = 0.0) {
  std::vector<Vec2> pts;
  for (int k = 0; k < n; ++k) pts.emplace_back(spacing * (k + 1), y);
  return pts;
}

MixturePrediction mixture_from_positions(const std::vector<std::vector<Vec2>>& trajectories,
                                         const Vec& weights, double variance = 1.0) {
  MixturePrediction pred;
  pred.weights = weights;
  for (const auto& traj : trajectories) {
    MixtureComponent c;
    for (const Vec2& p : traj) {
      Vec mean(2);
      mean << p.x(), p.y();
      c.means.push_back(mean);
      c.covs.push_back(variance * Mat::Identity(2, 2));
    }
    pred.components.push_back(std::move(c));
  }
  return pred;
}

// Naive reference implementations used as oracles against the shipped loops.
double ade_reference(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) acc += (pred[k] - truth[k]).norm();
  return acc / static_cast<double>(pred.size());
}

double apde_reference(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  double acc = 0.0;
  for (const Vec2& p : pred) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& q : truth) best = std::min(best, (p - q).norm());
    acc += best;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace

TEST_CASE("largest weight wins with ties toward the front") {
  MixturePrediction pred = mixture_from_positions(
      {line_along_x(1, 1.0), line_along_x(1, 1.0), line_along_x(1, 1.0)}, Vec(3));
  pred.weights << 0.2, 0.5, 0.3;
  CHECK(best_component(pred) == 1);
  pred.weights << 0.5, 0.5, 0.0;
  CHECK(best_component(pred) == 0);
  MixturePrediction single =
      mixture_from_positions({line_along_x(1, 1.0)}, Vec::Constant(1, 1.0));
  CHECK(best_component(single) == 0);
}

TEST_CASE("displacement errors on identical and offset paths") {
  const std::vector<Vec2> truth = line_along_x(25, 0.5);
  CHECK(ade(truth, truth) == doctest::Approx(0.0));
  CHECK(fde(truth, truth) == doctest::Approx(0.0));

  const std::vector<Vec2> offset = line_along_x(25, 0.5, 0.3);
  CHECK(ade(offset, truth) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(fde(offset, truth) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("only the final sample disagrees") {
  // Truth at x = 1..5; prediction matches until the last point overshoots.
  std::vector<Vec2> truth = line_along_x(5, 1.0);
  std::vector<Vec2> pred = truth;
  pred.back().x() += 1.0;
  CHECK(fde(pred, truth) == doctest::Approx(1.0));
  CHECK(ade(pred, truth) == doctest::Approx(0.2));
}

TEST_CASE("miss rate threshold at two meters") {
  const Vec2 truth(0.0, 0.0);
  CHECK(miss_rate(Vec2(2.5, 0.0), truth) == doctest::Approx(1.0));
  CHECK(miss_rate(Vec2(1.9, 0.0), truth) == doctest::Approx(0.0));
  CHECK(miss_rate(Vec2(2.0, 0.0), truth) == doctest::Approx(0.0));  // boundary is a hit
}

TEST_CASE("path distance forgives time misalignment") {
  // Prediction runs one sample ahead along the same unit-spaced line.
  const std::vector<Vec2> truth = line_along_x(5, 1.0);
  std::vector<Vec2> pred;
  for (int k = 0; k < 5; ++k) pred.emplace_back(2.0 + k, 0.0);
  CHECK(ade(pred, truth) == doctest::Approx(1.0));
  CHECK(apde(pred, truth) == doctest::Approx(0.2));  // only the overshoot pays

  CHECK(apde(truth, truth) == doctest::Approx(0.0));
  CHECK(apde({Vec2(3.0, 4.0)}, {Vec2(0.0, 0.0)}) == doctest::Approx(5.0));
}

TEST_CASE("likelihood metrics at the entropy floor") {
  const std::vector<Vec2> truth = line_along_x(25, 0.5);
  const MixturePrediction exact =
      mixture_from_positions({truth}, Vec::Constant(1, 1.0), 1.0);
  CHECK(anll(exact, truth) == doctest::Approx(kLog2Pi).epsilon(1e-12));
  CHECK(fnll(exact, truth) == doctest::Approx(kLog2Pi).epsilon(1e-12));

  const MixturePrediction wide = mixture_from_positions({truth}, Vec::Constant(1, 1.0), 2.0);
  CHECK(anll(wide, truth) == doctest::Approx(std::log(4.0 * 3.14159265358979323846)).epsilon(1e-12));
}

TEST_CASE("anll ignores component order") {
  Rng rng(3);
  std::vector<Vec2> truth;
  for (int k = 0; k < 8; ++k) truth.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4));
  std::vector<Vec2> a, b;
  for (int k = 0; k < 8; ++k) {
    a.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4));
    b.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4));
  }
  Vec w(2);
  w << 0.4, 0.6;
  const MixturePrediction fwd = mixture_from_positions({a, b}, w);
  Vec wr(2);
  wr << 0.6, 0.4;
  const MixturePrediction rev = mixture_from_positions({b, a}, wr);
  CHECK(anll(fwd, truth) == doctest::Approx(anll(rev, truth)).epsilon(1e-12));
  CHECK(fnll(fwd, truth) == doctest::Approx(fnll(rev, truth)).epsilon(1e-12));
}

TEST_CASE("full mixture likelihood beats its degenerate best-only version") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec2> truth, a, b;
    for (int k = 0; k < 6; ++k) {
      truth.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
      a.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
      b.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
    }
    Vec w(2);
    const double w0 = rng.uniform(0.55, 0.95);
    w << w0, 1.0 - w0;
    const MixturePrediction full = mixture_from_positions({a, b}, w);

    // -log(sum_j pi_j phi_j) can never exceed -log(pi_best phi_best): the
    // other components only add probability mass.
    double degenerate_nll = 0.0;
    for (int k = 0; k < 6; ++k) {
      Vec mu(2);
      mu << a[static_cast<std::size_t>(k)].x(), a[static_cast<std::size_t>(k)].y();
      Vec t(2);
      t << truth[static_cast<std::size_t>(k)].x(), truth[static_cast<std::size_t>(k)].y();
      degenerate_nll -= std::log(w0) + gaussian_logpdf(t, mu, Mat::Identity(2, 2));
    }
    degenerate_nll /= 6.0;
    CHECK(degenerate_nll >= anll(full, truth) - 1e-12);
  }
}

TEST_CASE("metrics agree with brute-force references on random pairs") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int t_f = 1 + static_cast<int>(rng.uniform(0.0, 10.0));
    std::vector<Vec2> pred, truth;
    for (int k = 0; k < t_f; ++k) {
      pred.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10));
      truth.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10));
    }
    CHECK(ade(pred, truth) == ade_reference(pred, truth));
    CHECK(fde(pred, truth) == (pred.back() - truth.back()).norm());
    CHECK(apde(pred, truth) == apde_reference(pred, truth));
    CHECK(apde(pred, truth) <= ade(pred, truth) + 1e-15);
  }
}

TEST_CASE("displacement metrics are translation invariant") {
  Rng rng(19);
  std::vector<Vec2> pred, truth;
  for (int k = 0; k < 12; ++k) {
    pred.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5));
    truth.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5));
  }
  const Vec2 shift(123.4, -56.7);
  std::vector<Vec2> pred_s = pred, truth_s = truth;
  for (auto& p : pred_s) p += shift;
  for (auto& q : truth_s) q += shift;
  CHECK(ade(pred_s, truth_s) == doctest::Approx(ade(pred, truth)).epsilon(1e-12));
  CHECK(fde(pred_s, truth_s) == doctest::Approx(fde(pred, truth)).epsilon(1e-12));
  CHECK(apde(pred_s, truth_s) == doctest::Approx(apde(pred, truth)).epsilon(1e-12));
}

TEST_CASE("window evaluation uses the best component for displacement") {
  const std::vector<Vec2> truth = line_along_x(25, 0.4);
  const std::vector<Vec2> off = line_along_x(25, 0.4, 1.0);
  Vec w(2);
  w << 0.3, 0.7;
  // The heavier component is exact; the lighter one rides 1 m to the side.
  const MixturePrediction pred = mixture_from_positions({off, truth}, w);
  const MetricReport r = evaluate_window(pred, truth);
  CHECK(r.ade == doctest::Approx(0.0));
  CHECK(r.fde == doctest::Approx(0.0));
  CHECK(r.mr == doctest::Approx(0.0));
  CHECK(r.apde == doctest::Approx(0.0));
  CHECK(r.count == 1);
  CHECK(std::isfinite(r.anll));
  CHECK(std::isfinite(r.fnll));
}

TEST_CASE("aggregation averages reports and counts instances") {
  MetricReport a;
  a.ade = 1.0;
  a.fde = 2.0;
  a.mr = 0.0;
  a.apde = 0.5;
  a.anll = 3.0;
  a.fnll = 4.0;
  a.count = 1;
  MetricReport b = a;
  b.ade = 3.0;
  b.mr = 1.0;
  const MetricReport sum = aggregate({a, b});
  CHECK(sum.ade == doctest::Approx(2.0));
  CHECK(sum.fde == doctest::Approx(2.0));
  CHECK(sum.mr == doctest::Approx(0.5));
  CHECK(sum.apde == doctest::Approx(0.5));
  CHECK(sum.count == 2);

  const MetricReport identity = aggregate({a});
  CHECK(identity.ade == doctest::Approx(a.ade));
  CHECK(identity.mr == doctest::Approx(a.mr));
  CHECK(identity.count == 1);

  CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("reports serialize losslessly") {
  MetricReport r;
  r.ade = 0.125;
  r.fde = 0.5;
  r.mr = 1.0;
  r.apde = 0.0625;
  r.anll = -1.25;
  r.fnll = 2.75;
  r.count = 7;
  nlohmann::json j = r;
  const MetricReport back = j.get<MetricReport>();
  CHECK(back.ade == r.ade);
  CHECK(back.fde == r.fde);
  CHECK(back.mr == r.mr);
  CHECK(back.apde == r.apde);
  CHECK(back.anll == r.anll);
  CHECK(back.fnll == r.fnll);
  CHECK(back.count == r.count);
}
