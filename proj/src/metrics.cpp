#include "mmpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mmpred {

namespace {

void check_lengths(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw std::invalid_argument("metric inputs must be equal-length and non-empty");
  }
}

double logsumexp(const std::vector<double>& terms) {
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

/// -log of the mixture density of the (x, y) marginal at one step.
double step_nll(const MixturePrediction& pred, const Vec2& truth, int k) {
  std::vector<double> terms(static_cast<std::size_t>(pred.num_components()));
  const Vec target = truth;
  for (int j = 0; j < pred.num_components(); ++j) {
    const MixtureComponent& comp = pred.components[static_cast<std::size_t>(j)];
    const Vec& mean = comp.means[static_cast<std::size_t>(k)];
    const Covariance& cov = comp.covs[static_cast<std::size_t>(k)];
    Vec mu(2);
    mu << mean[0], mean[1];
    Mat sigma(2, 2);
    sigma << cov(0, 0), cov(0, 1), cov(1, 0), cov(1, 1);
    const double logw = pred.weights[j] > 0.0 ? std::log(pred.weights[j])
                                              : -std::numeric_limits<double>::infinity();
    terms[static_cast<std::size_t>(j)] = logw + gaussian_logpdf(target, mu, sigma);
  }
  return -logsumexp(terms);
}

}  // namespace

int best_component(const MixturePrediction& pred) {
  if (pred.num_components() < 1) throw std::invalid_argument("mixture has no components");
  int best = 0;
  for (int j = 1; j < pred.num_components(); ++j) {
    if (pred.weights[j] > pred.weights[best]) best = j;
  }
  return best;
}

std::vector<Vec2> component_positions(const MixtureComponent& component) {
  std::vector<Vec2> out;
  out.reserve(component.means.size());
  for (const Vec& mean : component.means) out.push_back(Vec2(mean[0], mean[1]));
  return out;
}

double ade(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  check_lengths(pred, truth);
  double total = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) total += (pred[k] - truth[k]).norm();
  return total / static_cast<double>(pred.size());
}

double fde(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  check_lengths(pred, truth);
  return (pred.back() - truth.back()).norm();
}

double miss_rate(const Vec2& pred_final, const Vec2& truth_final) {
  return (pred_final - truth_final).norm() > 2.0 ? 1.0 : 0.0;
}

double apde(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  check_lengths(pred, truth);
  double total = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    double nearest = (pred[k] - truth[0]).norm();
    for (std::size_t i = 1; i < truth.size(); ++i) {
      nearest = std::min(nearest, (pred[k] - truth[i]).norm());
    }
    total += nearest;
  }
  return total / static_cast<double>(pred.size());
}

double anll(const MixturePrediction& pred, const std::vector<Vec2>& truth) {
  validate(pred);
  if (static_cast<int>(truth.size()) != pred.horizon() || truth.empty()) {
    throw std::invalid_argument("truth length does not match prediction horizon");
  }
  double total = 0.0;
  for (int k = 0; k < pred.horizon(); ++k) {
    total += step_nll(pred, truth[static_cast<std::size_t>(k)], k);
  }
  return total / static_cast<double>(pred.horizon());
}

double fnll(const MixturePrediction& pred, const std::vector<Vec2>& truth) {
  validate(pred);
  if (static_cast<int>(truth.size()) != pred.horizon() || truth.empty()) {
    throw std::invalid_argument("truth length does not match prediction horizon");
  }
  return step_nll(pred, truth.back(), pred.horizon() - 1);
}

MetricReport evaluate_window(const MixturePrediction& pred, const std::vector<Vec2>& truth) {
  validate(pred);
  const std::vector<Vec2> best =
      component_positions(pred.components[static_cast<std::size_t>(best_component(pred))]);
  MetricReport report;
  report.ade = ade(best, truth);
  report.fde = fde(best, truth);
  report.mr = miss_rate(best.back(), truth.back());
  report.apde = apde(best, truth);
  report.anll = anll(pred, truth);
  report.fnll = fnll(pred, truth);
  report.count = 1;
  return report;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  MetricReport out;
  for (const MetricReport& r : reports) {
    out.ade += r.ade;
    out.fde += r.fde;
    out.mr += r.mr;
    out.apde += r.apde;
    out.anll += r.anll;
    out.fnll += r.fnll;
    out.count += r.count;
  }
  const auto n = static_cast<double>(reports.size());
  out.ade /= n;
  out.fde /= n;
  out.mr /= n;
  out.apde /= n;
  out.anll /= n;
  out.fnll /= n;
  return out;
}

void to_json(nlohmann::json& j, const MetricReport& report) {
  j = nlohmann::json{{"ade", report.ade},   {"fde", report.fde},   {"mr", report.mr},
                     {"apde", report.apde}, {"anll", report.anll}, {"fnll", report.fnll},
                     {"count", report.count}};
}

void from_json(const nlohmann::json& j, MetricReport& report) {
  report.ade = j.at("ade").get<double>();
  report.fde = j.at("fde").get<double>();
  report.mr = j.at("mr").get<double>();
  report.apde = j.at("apde").get<double>();
  report.anll = j.at("anll").get<double>();
  report.fnll = j.at("fnll").get<double>();
  report.count = j.at("count").get<int>();
}

}  // namespace mmpred
