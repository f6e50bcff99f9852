#pragma once

#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mmpred/mixture.hpp"
#include "mmpred/types.hpp"

namespace mmpred {

/// The six displacement and likelihood metrics for one or more evaluated
/// prediction instances.
struct MetricReport {
  double ade = 0.0;   // mean position error, best component
  double fde = 0.0;   // final position error, best component
  double mr = 0.0;    // miss indicator / miss fraction after aggregation
  double apde = 0.0;  // mean distance to the nearest truth sample
  double anll = 0.0;  // mean per-step mixture negative log-likelihood
  double fnll = 0.0;  // final-step mixture negative log-likelihood
  int count = 0;      // instances aggregated into this report
};

/// Index of the largest weight; ties break toward the lowest index.
int best_component(const MixturePrediction& pred);

std::vector<Vec2> component_positions(const MixtureComponent& component);

double ade(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth);
double fde(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth);

/// 1 when the final position misses the truth by more than 2 m; exactly 2 m
/// counts as a hit.
double miss_rate(const Vec2& pred_final, const Vec2& truth_final);

/// Average path displacement error: each predicted point is charged its
/// distance to the nearest truth sample, whatever its index.
double apde(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth);

/// Negative log-likelihood of the truth positions under the mixture's (x, y)
/// marginal, averaged over the horizon (anll) or taken at the final step
/// (fnll).
double anll(const MixturePrediction& pred, const std::vector<Vec2>& truth);
double fnll(const MixturePrediction& pred, const std::vector<Vec2>& truth);

/// All six metrics for one prediction instance against its truth positions.
MetricReport evaluate_window(const MixturePrediction& pred, const std::vector<Vec2>& truth);

/// Unweighted mean over per-instance reports; mr becomes the miss fraction.
MetricReport aggregate(const std::vector<MetricReport>& reports);

void to_json(nlohmann::json& j, const MetricReport& report);
void from_json(const nlohmann::json& j, MetricReport& report);

}  // namespace mmpred
