#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mmpred/mixture.hpp"
#include "mmpred/models.hpp"
#include "mmpred/scenarios.hpp"
#include "mmpred/solvers.hpp"
#include "mmpred/types.hpp"
#include "mmpred/uncertainty.hpp"

namespace mmpred {

enum class GeneratorKind {
  Constant,             // one input + one noise triple for the whole horizon
  PiecewisePolynomial,  // per-segment polynomial inputs over scaled time
  Lookup,               // verbatim per-step inputs and noise (replay)
  Fitted                // free per-step inputs with one shared noise triple
};

const char* generator_kind_name(GeneratorKind kind);
GeneratorKind parse_generator_kind(const std::string& name);

struct GeneratorShape {
  GeneratorKind kind = GeneratorKind::PiecewisePolynomial;
  int segments = 2;  // piecewise only
  int degree = 3;    // piecewise only
};

void to_json(nlohmann::json& j, const GeneratorShape& shape);
void from_json(const nlohmann::json& j, GeneratorShape& shape);

/// Open-loop input schedule: emits one raw model input and one raw
/// process-noise triple per horizon step from a flat parameter vector.
/// Stands in for a learned decoder.
struct InputGenerator {
  GeneratorKind kind = GeneratorKind::Constant;
  int horizon = 25;
  int segments = 1;  // piecewise only
  int degree = 0;    // piecewise only
  Vec params;

  static InputGenerator constant(const Input& u, const ProcessNoiseParams& noise);
  static InputGenerator lookup(const std::vector<Input>& schedule,
                               const ProcessNoiseParams& noise);
  static InputGenerator make(const GeneratorShape& shape, int horizon);

  int param_count() const;
  std::pair<Input, ProcessNoiseParams> emit(int k) const;
};

void to_json(nlohmann::json& j, const InputGenerator& gen);
void from_json(const nlohmann::json& j, InputGenerator& gen);

struct Rollout {
  std::vector<BeliefState> beliefs;  // length t_f
  std::vector<Input> inputs_used;    // after clamping to the model bounds
};

/// Forecast of one (model, solver, generator) triple: per step the generator
/// output is clamped, its noise activated into Q, and the belief advanced by
/// one EKF prediction.
Rollout rollout(const ModelSpec& model, const SolverSpec& solver, const InputGenerator& gen,
                const BeliefState& belief0, int t_f, double ts);

/// One rollout per generator; weights from the softmax of raw_weights.
MixturePrediction predict_mixture(const ModelSpec& model, const SolverSpec& solver,
                                  const std::vector<InputGenerator>& gens,
                                  const Vec& raw_weights, const BeliefState& belief0, int t_f,
                                  double ts);

/// Wraps a single rollout as a one-component mixture with weight 1.
MixturePrediction mixture_from_rollout(const Rollout& r);

/// Reference forecasts: hold the last observed velocity (CV) or acceleration
/// (CA) and advance by exact kinematics, with a fixed Q = diag(0.25, 0.25)
/// for plotting-scale uncertainty.
Rollout cv_baseline(const std::vector<FeatureRow>& history, int t_f, double ts);
Rollout ca_baseline(const std::vector<FeatureRow>& history, int t_f, double ts);

/// Maps a recorded feature row into the state layout of the given model
/// (orientation models take v = hypot(vx, vy) and the recorded heading).
Vec state_from_row(ModelKind kind, const FeatureRow& row);

/// One fitting scenario: the belief at the cut plus the future to match.
struct TrainingWindow {
  BeliefState belief0;
  TargetTrajectory target;
};

TrainingWindow make_training_window(ModelKind kind, const PredictionWindow& window,
                                    double initial_variance = 0.25);

/// All trainable state of a mixture: M generators plus raw weight scores.
struct MixtureParams {
  std::vector<InputGenerator> gens;
  Vec raw_weights;

  int num_components() const { return static_cast<int>(gens.size()); }
  int param_count() const;
  Vec flatten() const;
  void unflatten(const Vec& flat);
};

void to_json(nlohmann::json& j, const MixtureParams& params);
void from_json(const nlohmann::json& j, MixtureParams& params);

/// Seeded uniform(-0.5, 0.5) generator parameters with zero weight scores.
MixtureParams init_mixture_params(const GeneratorShape& shape, int num_components, int horizon,
                                  std::uint64_t seed);

MixturePrediction predict_from_params(const ModelSpec& model, const SolverSpec& solver,
                                      const MixtureParams& params, const BeliefState& belief0,
                                      int t_f, double ts, bool uniform_weights = false);

struct FitConfig {
  int epochs = 200;
  int warmup_epochs = 60;  // 0 disables the winner-takes-all phase
  double lr = 0.01;
  double momentum = 0.9;
  int plateau_epochs = 5;  // halve lr after this many non-improving epochs
  std::vector<int> train_dims = {0, 1};
  double grad_step_scale = 1e-4;
  double ts = 0.2;
};

void to_json(nlohmann::json& j, const FitConfig& cfg);
void from_json(const nlohmann::json& j, FitConfig& cfg);

struct FitResult {
  MixtureParams params;
  std::vector<double> loss_trace;  // scheduled loss per epoch, start of epoch
};

/// Gradient descent with momentum on numeric central-difference gradients of
/// the scheduled loss (winner-takes-all warm-up, then NLL), averaged over the
/// training windows. Mixture weights stay uniform during warm-up.
FitResult fit_mixture(const ModelSpec& model, const SolverSpec& solver, MixtureParams init,
                      const std::vector<TrainingWindow>& windows, const FitConfig& cfg);

/// Central differences with per-coordinate step step_scale * (1 + |p_i|).
/// A non-finite loss at any probe point raises NumericError.
Vec numeric_gradient(const std::function<double(const Vec&)>& loss, const Vec& params,
                     double step_scale = 1e-4);

}  // namespace mmpred
