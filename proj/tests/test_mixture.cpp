#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "mmpred/mixture.hpp"
#include "mmpred/rng.hpp"

using namespace mmpred;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

/// Uniform-weight mixture whose components hold a constant mean over the
/// horizon with identity covariance.
MixturePrediction constant_mixture(const std::vector<Vec>& means, int horizon) {
  MixturePrediction pred;
  pred.weights = Vec::Constant(static_cast<int>(means.size()),
                               1.0 / static_cast<double>(means.size()));
  for (const Vec& mean : means) {
    MixtureComponent c;
    c.means.assign(static_cast<std::size_t>(horizon), mean);
    c.covs.assign(static_cast<std::size_t>(horizon), Mat::Identity(2, 2));
    pred.components.push_back(std::move(c));
  }
  return pred;
}

}  // namespace

TEST_CASE("gaussian log density reference points") {
  CHECK(gaussian_logpdf(vec2(0, 0), vec2(0, 0), Mat::Identity(2, 2)) ==
        doctest::Approx(-kLog2Pi).epsilon(1e-12));

  Vec one(1);
  one << 1.0;
  Vec zero(1);
  zero << 0.0;
  CHECK(gaussian_logpdf(one, zero, Mat::Identity(1, 1)) ==
        doctest::Approx(-0.5 - 0.5 * kLog2Pi).epsilon(1e-12));

  CHECK_THROWS_AS(gaussian_logpdf(vec2(0, 0), vec2(0, 0), Mat::Zero(2, 2)),
                  DegenerateCovarianceError);
  Mat indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(gaussian_logpdf(vec2(0, 0), vec2(0, 0), indefinite),
                  DegenerateCovarianceError);
}

TEST_CASE("correlated density agrees with the closed form") {
  Mat sigma(2, 2);
  sigma << 2.0, 0.6, 0.6, 1.0;
  const Vec d = vec2(0.3, -0.7);
  const double expected =
      -std::log(2.0 * 3.14159265358979323846) - 0.5 * std::log(sigma.determinant()) -
      0.5 * d.dot(sigma.inverse() * d);
  CHECK(gaussian_logpdf(d, vec2(0, 0), sigma) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("perfect unimodal forecast scores the entropy floor") {
  TargetTrajectory target(25, vec2(3.0, 4.0));
  const MixturePrediction pred = constant_mixture({vec2(3.0, 4.0)}, 25);
  CHECK(nll_loss(pred, target) == doctest::Approx(25.0 * kLog2Pi).epsilon(1e-12));
}

TEST_CASE("duplicated components collapse to the unimodal value") {
  TargetTrajectory target(25, vec2(3.0, 4.0));
  const MixturePrediction one = constant_mixture({vec2(3.0, 4.0)}, 25);
  const MixturePrediction two = constant_mixture({vec2(3.0, 4.0), vec2(3.0, 4.0)}, 25);
  CHECK(nll_loss(two, target) == doctest::Approx(nll_loss(one, target)).epsilon(1e-12));
}

TEST_CASE("vanishing-weight component barely moves the loss") {
  TargetTrajectory target(25, vec2(0.0, 0.0));
  const MixturePrediction base = constant_mixture({vec2(0.0, 0.0)}, 25);
  MixturePrediction padded = constant_mixture({vec2(0.0, 0.0), vec2(500.0, 500.0)}, 25);
  padded.weights << 1.0 - 1e-12, 1e-12;
  CHECK(std::abs(nll_loss(padded, target) - nll_loss(base, target)) < 1e-9);
}

TEST_CASE("component order does not matter") {
  Rng rng(17);
  TargetTrajectory target;
  for (int k = 0; k < 10; ++k) target.push_back(vec2(rng.uniform(-5, 5), rng.uniform(-5, 5)));
  MixturePrediction pred =
      constant_mixture({vec2(1.0, 0.0), vec2(-2.0, 3.0), vec2(0.5, 0.5)}, 10);
  pred.weights << 0.5, 0.3, 0.2;
  const double forward = nll_loss(pred, target);

  MixturePrediction shuffled = pred;
  std::swap(shuffled.components[0], shuffled.components[2]);
  shuffled.weights << 0.2, 0.3, 0.5;
  CHECK(nll_loss(shuffled, target) == doctest::Approx(forward).epsilon(1e-12));
}

TEST_CASE("deeply negative log densities stay finite") {
  TargetTrajectory target(5, vec2(0.0, 0.0));
  // 2000 sigma away: per-component logpdf near -2e6.
  const MixturePrediction pred = constant_mixture({vec2(2000.0, 0.0), vec2(0.0, 2000.0)}, 5);
  const double loss = nll_loss(pred, target);
  CHECK(std::isfinite(loss));
  CHECK(loss > 1e5);
}

TEST_CASE("huber reference values") {
  Vec r(1);
  r << 0.0;
  CHECK(huber(r) == doctest::Approx(0.0));
  r << 0.5;
  CHECK(huber(r) == doctest::Approx(0.125).epsilon(1e-14));
  r << 2.0;
  CHECK(huber(r) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(huber(vec2(3.0, 4.0)) == doctest::Approx(4.5).epsilon(1e-14));  // norm 5
  CHECK_THROWS_AS(huber(r, 0.0), std::invalid_argument);
}

TEST_CASE("winner selection keeps only the closest component") {
  const TargetTrajectory target(1, vec2(0.0, 0.0));
  const MixturePrediction pred =
      constant_mixture({vec2(0.9, 0.0), vec2(0.1, 0.0), vec2(3.0, 0.0)}, 1);
  CHECK(ewta_loss(pred, target, 1) == doctest::Approx(0.5 * 0.1 * 0.1).epsilon(1e-14));
  CHECK(ewta_loss(pred, target, 2) == doctest::Approx(0.005 + 0.405).epsilon(1e-14));
  // K = M sums every component; the far one is in its linear regime.
  CHECK(ewta_loss(pred, target, 3) == doctest::Approx(0.005 + 0.405 + 2.5).epsilon(1e-14));
}

TEST_CASE("exact single component has zero winner loss") {
  const TargetTrajectory target(7, vec2(1.0, -1.0));
  CHECK(ewta_loss(constant_mixture({vec2(1.0, -1.0)}, 7), target, 1) == doctest::Approx(0.0));
}

TEST_CASE("winner loss grows with the number of winners") {
  Rng rng(23);
  TargetTrajectory target;
  for (int k = 0; k < 12; ++k) target.push_back(vec2(rng.uniform(-3, 3), rng.uniform(-3, 3)));
  std::vector<Vec> means;
  for (int j = 0; j < 5; ++j) means.push_back(vec2(rng.uniform(-3, 3), rng.uniform(-3, 3)));
  const MixturePrediction pred = constant_mixture(means, 12);
  double previous = 0.0;
  for (int k = 1; k <= 5; ++k) {
    const double loss = ewta_loss(pred, target, k);
    CHECK(loss >= previous);
    previous = loss;
  }
  CHECK_THROWS_AS(ewta_loss(pred, target, 0), std::invalid_argument);
  CHECK_THROWS_AS(ewta_loss(pred, target, 6), std::invalid_argument);
}

TEST_CASE("warm-up schedule walks K down then switches objective") {
  CHECK(ewta_schedule(0, 3, 9).mode == LossMode::WTA);
  CHECK(ewta_schedule(0, 3, 9).k == 3);
  CHECK(ewta_schedule(2, 3, 9).k == 3);
  CHECK(ewta_schedule(3, 3, 9).k == 2);
  CHECK(ewta_schedule(8, 3, 9).mode == LossMode::WTA);
  CHECK(ewta_schedule(8, 3, 9).k == 1);
  CHECK(ewta_schedule(9, 3, 9).mode == LossMode::NLL);
  CHECK(ewta_schedule(500, 3, 9).mode == LossMode::NLL);

  // Disabled warm-up trains on the likelihood from the first epoch.
  CHECK(ewta_schedule(0, 3, 0).mode == LossMode::NLL);

  CHECK_THROWS_AS(ewta_schedule(0, 3, 2), std::invalid_argument);
  CHECK_THROWS_AS(ewta_schedule(-1, 3, 9), std::invalid_argument);
  CHECK_THROWS_AS(ewta_schedule(0, 0, 9), std::invalid_argument);
}

TEST_CASE("softmax lands on the simplex for extreme scores") {
  Vec raw(3);
  raw << 1e4, -1e4, 0.0;
  const Vec w = softmax(raw);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.minCoeff() >= 0.0);
  CHECK(w[0] == doctest::Approx(1.0));

  Vec shifted = raw;
  shifted.array() += 123.0;
  CHECK((softmax(shifted) - w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("numeric nll gradient matches the responsibility-weighted score") {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    MixturePrediction pred =
        constant_mixture({vec2(rng.uniform(-2, 2), rng.uniform(-2, 2)),
                          vec2(rng.uniform(-2, 2), rng.uniform(-2, 2))},
                         1);
    pred.weights << 0.7, 0.3;
    const TargetTrajectory target(1, vec2(rng.uniform(-2, 2), rng.uniform(-2, 2)));

    // Responsibilities under identity covariances.
    double logp[2];
    for (int j = 0; j < 2; ++j) {
      logp[j] = std::log(pred.weights[j]) +
                gaussian_logpdf(target[0], pred.components[j].means[0], Mat::Identity(2, 2));
    }
    const double lse = std::max(logp[0], logp[1]) +
                       std::log(std::exp(logp[0] - std::max(logp[0], logp[1])) +
                                std::exp(logp[1] - std::max(logp[0], logp[1])));
    for (int j = 0; j < 2; ++j) {
      const double resp = std::exp(logp[j] - lse);
      const Vec analytic = -resp * (target[0] - pred.components[j].means[0]);
      for (int d = 0; d < 2; ++d) {
        MixturePrediction bumped = pred;
        bumped.components[j].means[0][d] += 1e-6;
        MixturePrediction dropped = pred;
        dropped.components[j].means[0][d] -= 1e-6;
        const double numeric =
            (nll_loss(bumped, target) - nll_loss(dropped, target)) / 2e-6;
        CHECK(numeric == doctest::Approx(analytic[d]).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("structural validation catches malformed mixtures") {
  MixturePrediction pred = constant_mixture({vec2(0, 0), vec2(1, 1)}, 5);
  validate(pred);

  MixturePrediction bad_sum = pred;
  bad_sum.weights << 0.6, 0.6;
  CHECK_THROWS_AS(validate(bad_sum), std::invalid_argument);

  MixturePrediction negative = pred;
  negative.weights << 1.5, -0.5;
  CHECK_THROWS_AS(validate(negative), std::invalid_argument);

  MixturePrediction ragged = pred;
  ragged.components[1].means.pop_back();
  CHECK_THROWS_AS(validate(ragged), std::invalid_argument);

  MixturePrediction missing_cov = pred;
  missing_cov.components[0].covs.pop_back();
  CHECK_THROWS_AS(validate(missing_cov), std::invalid_argument);
}

TEST_CASE("mixtures survive a json round trip") {
  Rng rng(41);
  MixturePrediction pred = constant_mixture({vec2(0.5, -0.25), vec2(2.0, 1.0)}, 3);
  pred.weights << 0.25, 0.75;
  pred.components[0].covs[1](0, 1) = 0.1;
  pred.components[0].covs[1](1, 0) = 0.1;
  nlohmann::json j = pred;
  const MixturePrediction back = j.get<MixturePrediction>();
  CHECK((back.weights - pred.weights).norm() == doctest::Approx(0.0));
  REQUIRE(back.components.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK((back.components[c].means[k] - pred.components[c].means[k]).norm() == 0.0);
      CHECK((back.components[c].covs[k] - pred.components[c].covs[k]).norm() == 0.0);
    }
  }
}
