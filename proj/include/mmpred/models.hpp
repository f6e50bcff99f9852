#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json_fwd.hpp>

#include "mmpred/types.hpp"

namespace mmpred {

/// Controllable continuous-time motion models. The first nine are the
/// prediction models; ConstVel/ConstAcc are the zero-input reference models.
enum class ModelKind {
  OneXI,        // [x, y],                 u = planar velocities
  TwoXI,        // [x, y, vx, vy],         u = accelerations
  ThreeXI,      // [x, y, vx, vy, ax, ay], u = jerks
  Curvilinear,  // [x, y, psi, v],         u1 = perpendicular acceleration
  Curvature,    // [x, y, psi, v],         u1 = path curvature
  Unicycle,     // [x, y, psi, v],         u1 = turn rate
  SingleTrack,  // [x, y, psi, v],         u1 = steering angle
  Node1,        // [x, y],                 learned first-order dynamics
  Node2,        // [x, y, vx, vy],         learned acceleration dynamics
  ConstVel,     // [x, y, vx, vy],         inputs ignored
  ConstAcc,     // [x, y, vx, vy, ax, ay], inputs ignored
};

int state_dim(ModelKind kind);
std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Symmetric input box: channel i is clamped to [-ui_max, ui_max].
struct InputBounds {
  double u1_max = 0.0;
  double u2_max = 0.0;
};

struct Wheelbase {
  double lf = 0.0;
  double lr = 0.0;
};

/// One scalar network with signature (a, b, u) -> dx, two hidden layers of
/// width 16 and ELU activations.
struct ScalarMlp {
  static constexpr int kHidden = 16;

  Eigen::Matrix<double, kHidden, 3> w1;
  Eigen::Matrix<double, kHidden, 1> b1;
  Eigen::Matrix<double, kHidden, kHidden> w2;
  Eigen::Matrix<double, kHidden, 1> b2;
  Eigen::Matrix<double, 1, kHidden> w3;
  double b3 = 0.0;

  double eval(double a, double b, double u) const;

  static constexpr int param_count() { return kHidden * 3 + kHidden + kHidden * kHidden + kHidden + kHidden + 1; }
};

/// Parameters of the two networks driving a neural-ODE model. f1 feeds the
/// first derivative channel, f2 the second; each sees two state entries and
/// its own input channel only.
struct NeuralRhsParams {
  ScalarMlp f1;
  ScalarMlp f2;

  static constexpr int param_count() { return 2 * ScalarMlp::param_count(); }

  Vec flatten() const;
  static NeuralRhsParams unflatten(const Vec& p);
  static NeuralRhsParams random(std::uint64_t seed);
};

/// Immutable description of one motion model. Safe to share across threads.
struct ModelSpec {
  ModelKind kind = ModelKind::OneXI;
  InputBounds bounds;
  std::optional<Wheelbase> wheelbase;   // SingleTrack only
  std::optional<NeuralRhsParams> node;  // Node1/Node2 only

  int state_dim() const { return mmpred::state_dim(kind); }
};

/// Physical-insight default bounds for each model's input channels.
InputBounds default_bounds(ModelKind kind);

/// Model with default bounds; SingleTrack gets the wheelbase of a 4.5 m car,
/// NODE kinds a seeded random network.
ModelSpec make_model(ModelKind kind, std::uint64_t node_seed = 0);

void validate(const ModelSpec& model);

/// Continuous dynamics dx/dt = f(x, u). u is assumed already clamped.
Vec rhs(const ModelSpec& model, const Vec& x, const Input& u);

/// HardTanh bounding of raw inputs.
Input clamp_input(const Input& u_raw, const InputBounds& bounds);

/// Analytic df/dx, except for NODE kinds which use central differences with
/// step 1e-5 * (1 + |x_i|).
Mat state_jacobian_continuous(const ModelSpec& model, const Vec& x, const Input& u);

/// Constant noise-input matrix G: Ts times identity on the two highest-order
/// state rows, zero elsewhere. For two-state models this is Ts * I2.
Mat noise_input_matrix(const ModelSpec& model, double ts);

/// Wheelbase estimate from vehicle length: 0.6 * length split evenly.
Wheelbase wheelbase_from_dimensions(double length);

void to_json(nlohmann::json& j, const ModelSpec& model);
void from_json(const nlohmann::json& j, ModelSpec& model);

}  // namespace mmpred
