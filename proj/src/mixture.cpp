#include "mmpred/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

namespace mmpred {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Vec select_dims(const Vec& v, const std::vector<int>& dims) {
  Vec out(static_cast<int>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) out[static_cast<int>(i)] = v[dims[i]];
  return out;
}

Mat select_block(const Mat& m, const std::vector<int>& dims) {
  const int n = static_cast<int>(dims.size());
  Mat out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out(r, c) = m(dims[r], dims[c]);
  return out;
}

void check_dims_argument(const std::vector<int>& dims, int state_dim) {
  if (dims.empty()) throw std::invalid_argument("eval_dims must not be empty");
  for (int d : dims) {
    if (d < 0 || d >= state_dim) throw std::invalid_argument("eval_dims index out of range");
  }
}

double logsumexp(const std::vector<double>& terms) {
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;  // all -inf (or a stray inf) dominates
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

void check_target(const MixturePrediction& pred, const TargetTrajectory& target) {
  if (static_cast<int>(target.size()) != pred.horizon()) {
    throw std::invalid_argument("target length does not match prediction horizon");
  }
}

}  // namespace

void validate(const MixturePrediction& pred) {
  const int m = pred.num_components();
  if (pred.weights.size() != m) {
    throw std::invalid_argument("mixture: weight count does not match component count");
  }
  if (m == 0) throw std::invalid_argument("mixture: needs at least one component");
  if ((pred.weights.array() < 0.0).any()) {
    throw std::invalid_argument("mixture: weights must be non-negative");
  }
  if (std::abs(pred.weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture: weights must sum to one");
  }
  const int t_f = pred.horizon();
  for (const MixtureComponent& comp : pred.components) {
    if (static_cast<int>(comp.means.size()) != t_f ||
        static_cast<int>(comp.covs.size()) != t_f) {
      throw std::invalid_argument("mixture: components must share one horizon length");
    }
    for (int k = 0; k < t_f; ++k) {
      const auto n = comp.means[k].size();
      if (comp.covs[k].rows() != n || comp.covs[k].cols() != n) {
        throw std::invalid_argument("mixture: covariance shape does not match mean");
      }
    }
  }
}

Vec softmax(const Vec& raw_scores) {
  const double m = raw_scores.maxCoeff();
  Vec e = (raw_scores.array() - m).exp();
  return e / e.sum();
}

double gaussian_logpdf(const Vec& x, const Vec& mu, const Mat& sigma) {
  const auto n = x.size();
  if (mu.size() != n || sigma.rows() != n || sigma.cols() != n) {
    throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
  }
  Eigen::LLT<Mat> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw DegenerateCovarianceError("covariance failed Cholesky factorization");
  }
  const Mat l = llt.matrixL();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pivot = l(i, i);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      throw DegenerateCovarianceError("covariance has a non-positive pivot");
    }
    logdet += 2.0 * std::log(pivot);
  }
  const Vec z = l.template triangularView<Eigen::Lower>().solve(x - mu);
  return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + z.squaredNorm());
}

double nll_loss(const MixturePrediction& pred, const TargetTrajectory& target,
                const std::vector<int>& eval_dims) {
  validate(pred);
  check_target(pred, target);
  const int m = pred.num_components();
  const int t_f = pred.horizon();

  std::vector<double> log_w(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    log_w[static_cast<std::size_t>(j)] = pred.weights[j] > 0.0
                                             ? std::log(pred.weights[j])
                                             : -std::numeric_limits<double>::infinity();
  }

  double total = 0.0;
  std::vector<double> terms(static_cast<std::size_t>(m));
  for (int k = 0; k < t_f; ++k) {
    check_dims_argument(eval_dims, static_cast<int>(target[static_cast<std::size_t>(k)].size()));
    const Vec target_sub = select_dims(target[static_cast<std::size_t>(k)], eval_dims);
    for (int j = 0; j < m; ++j) {
      const MixtureComponent& comp = pred.components[static_cast<std::size_t>(j)];
      check_dims_argument(eval_dims, static_cast<int>(comp.means[static_cast<std::size_t>(k)].size()));
      const double lp = gaussian_logpdf(target_sub,
                                        select_dims(comp.means[static_cast<std::size_t>(k)], eval_dims),
                                        select_block(comp.covs[static_cast<std::size_t>(k)], eval_dims));
      terms[static_cast<std::size_t>(j)] = log_w[static_cast<std::size_t>(j)] + lp;
    }
    total -= logsumexp(terms);
  }
  return total;
}

double huber(const Vec& residual, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber: delta must be positive");
  const double r = residual.norm();
  if (r <= delta) return 0.5 * r * r;
  return delta * (r - 0.5 * delta);
}

double ewta_loss(const MixturePrediction& pred, const TargetTrajectory& target, int k_winners,
                 const std::vector<int>& eval_dims) {
  validate(pred);
  check_target(pred, target);
  const int m = pred.num_components();
  if (k_winners < 1 || k_winners > m) {
    throw std::invalid_argument("ewta_loss: winner count must lie in [1, M]");
  }
  const int t_f = pred.horizon();

  double total = 0.0;
  std::vector<double> losses(static_cast<std::size_t>(m));
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int k = 0; k < t_f; ++k) {
    check_dims_argument(eval_dims, static_cast<int>(target[static_cast<std::size_t>(k)].size()));
    const Vec target_sub = select_dims(target[static_cast<std::size_t>(k)], eval_dims);
    for (int j = 0; j < m; ++j) {
      const Vec mean_sub =
          select_dims(pred.components[static_cast<std::size_t>(j)].means[static_cast<std::size_t>(k)],
                      eval_dims);
      losses[static_cast<std::size_t>(j)] = huber(mean_sub - target_sub);
    }
    std::iota(order.begin(), order.end(), 0);
    // Ties break toward the lower component index for determinism.
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return losses[static_cast<std::size_t>(a)] < losses[static_cast<std::size_t>(b)];
    });
    for (int r = 0; r < k_winners; ++r) total += losses[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
  }
  return total;
}

SchedulePoint ewta_schedule(int epoch, int num_components, int warmup_epochs) {
  if (epoch < 0) throw std::invalid_argument("ewta_schedule: epoch must be non-negative");
  if (num_components < 1) throw std::invalid_argument("ewta_schedule: M must be at least 1");
  if (warmup_epochs == 0 || epoch >= warmup_epochs) return {LossMode::NLL, 0};
  if (warmup_epochs < num_components) {
    throw std::invalid_argument("ewta_schedule: warm-up must span at least M epochs");
  }
  const int block = warmup_epochs / num_components;
  const int k = std::max(1, num_components - epoch / block);
  return {LossMode::WTA, k};
}

void to_json(nlohmann::json& j, const MixtureComponent& component) {
  nlohmann::json means = nlohmann::json::array();
  for (const Vec& mu : component.means) {
    means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
  }
  nlohmann::json covs = nlohmann::json::array();
  for (const Covariance& cov : component.covs) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < cov.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(cov.cols()));
      for (Eigen::Index c = 0; c < cov.cols(); ++c) row[static_cast<std::size_t>(c)] = cov(r, c);
      rows.push_back(row);
    }
    covs.push_back(rows);
  }
  j = nlohmann::json{{"means", std::move(means)}, {"covs", std::move(covs)}};
}

void from_json(const nlohmann::json& j, MixtureComponent& component) {
  component.means.clear();
  component.covs.clear();
  for (const auto& mean_j : j.at("means")) {
    const auto values = mean_j.get<std::vector<double>>();
    component.means.push_back(Eigen::Map<const Vec>(values.data(), static_cast<int>(values.size())));
  }
  for (const auto& cov_j : j.at("covs")) {
    const auto n = static_cast<Eigen::Index>(cov_j.size());
    Covariance cov(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto row = cov_j.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != n) {
        throw SchemaError("mixture covariance rows must form a square matrix");
      }
      for (Eigen::Index c = 0; c < n; ++c) cov(r, c) = row[static_cast<std::size_t>(c)];
    }
    component.covs.push_back(std::move(cov));
  }
}

void to_json(nlohmann::json& j, const MixturePrediction& pred) {
  j = nlohmann::json{
      {"weights", std::vector<double>(pred.weights.data(), pred.weights.data() + pred.weights.size())},
      {"components", pred.components}};
}

void from_json(const nlohmann::json& j, MixturePrediction& pred) {
  const auto weights = j.at("weights").get<std::vector<double>>();
  pred.weights = Eigen::Map<const Vec>(weights.data(), static_cast<int>(weights.size()));
  pred.components = j.at("components").get<std::vector<MixtureComponent>>();
}

}  // namespace mmpred
