#pragma once

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mmpred/types.hpp"

namespace mmpred {

/// One mixture component: a horizon of predicted means with covariances.
struct MixtureComponent {
  std::vector<Vec> means;
  std::vector<Covariance> covs;
};

/// Multi-modal forecast: mixing weights on the simplex, constant over the
/// horizon, with one trajectory of (mean, covariance) pairs per component.
struct MixturePrediction {
  Vec weights;
  std::vector<MixtureComponent> components;

  int num_components() const { return static_cast<int>(components.size()); }
  int horizon() const {
    return components.empty() ? 0 : static_cast<int>(components.front().means.size());
  }
};

using TargetTrajectory = std::vector<Vec>;

/// Checks simplex weights (sum 1 to 1e-9), equal horizons, and matching
/// mean/covariance dimensions. Throws std::invalid_argument on violation.
void validate(const MixturePrediction& pred);

Vec softmax(const Vec& raw_scores);

/// log N(x | mu, sigma) through a Cholesky factorization; sigma that fails to
/// factor (or has a non-positive pivot) raises DegenerateCovarianceError.
double gaussian_logpdf(const Vec& x, const Vec& mu, const Mat& sigma);

inline const std::vector<int> kPositionDims = {0, 1};

/// Sequence negative log-likelihood of the target under the mixture,
/// restricted to eval_dims via the marginal sub-blocks of mean and
/// covariance. Summed over the horizon with log-sum-exp across components.
double nll_loss(const MixturePrediction& pred, const TargetTrajectory& target,
                const std::vector<int>& eval_dims = kPositionDims);

/// Huber penalty of the residual norm: quadratic inside delta, linear beyond.
double huber(const Vec& residual, double delta = 1.0);

/// Per time step, ranks components by the Huber loss of their mean against
/// the target (over eval_dims) and sums the K smallest; the total runs over
/// the horizon.
double ewta_loss(const MixturePrediction& pred, const TargetTrajectory& target, int k_winners,
                 const std::vector<int>& eval_dims = kPositionDims);

enum class LossMode { WTA, NLL };

struct SchedulePoint {
  LossMode mode = LossMode::NLL;
  int k = 0;  // winners per step; meaningful in WTA mode only
};

/// Warm-up schedule: K steps down from M to 1 in equal blocks of
/// floor(warmup_epochs / M) epochs, then the objective switches to NLL.
/// warmup_epochs == 0 disables the warm-up entirely.
SchedulePoint ewta_schedule(int epoch, int num_components, int warmup_epochs);

void to_json(nlohmann::json& j, const MixtureComponent& component);
void from_json(const nlohmann::json& j, MixtureComponent& component);
void to_json(nlohmann::json& j, const MixturePrediction& pred);
void from_json(const nlohmann::json& j, MixturePrediction& pred);

}  // namespace mmpred
