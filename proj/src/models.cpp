#include "mmpred/models.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "mmpred/rng.hpp"

namespace mmpred {
namespace {

// Floor applied to |v| in the curvilinear yaw-rate denominator so the RHS and
// its Jacobian stay finite at standstill.
constexpr double kCurvilinearSpeedFloor = 0.1;

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

double sign_pos(double v) { return v < 0.0 ? -1.0 : 1.0; }

double slip_angle(const Wheelbase& wb, double steer) {
  return std::atan(wb.lr / (wb.lf + wb.lr) * std::tan(steer));
}

void check_state(const ModelSpec& model, const Vec& x) {
  if (x.size() != model.state_dim()) {
    throw std::invalid_argument("state length " + std::to_string(x.size()) +
                                " does not match model " + model_kind_name(model.kind));
  }
}

}  // namespace

int state_dim(ModelKind kind) {
  switch (kind) {
    case ModelKind::OneXI: return 2;
    case ModelKind::TwoXI: return 4;
    case ModelKind::ThreeXI: return 6;
    case ModelKind::Curvilinear: return 4;
    case ModelKind::Curvature: return 4;
    case ModelKind::Unicycle: return 4;
    case ModelKind::SingleTrack: return 4;
    case ModelKind::Node1: return 2;
    case ModelKind::Node2: return 4;
    case ModelKind::ConstVel: return 4;
    case ModelKind::ConstAcc: return 6;
  }
  throw std::invalid_argument("unknown model kind");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::OneXI: return "1xi";
    case ModelKind::TwoXI: return "2xi";
    case ModelKind::ThreeXI: return "3xi";
    case ModelKind::Curvilinear: return "cl";
    case ModelKind::Curvature: return "c";
    case ModelKind::Unicycle: return "u";
    case ModelKind::SingleTrack: return "st";
    case ModelKind::Node1: return "node1";
    case ModelKind::Node2: return "node2";
    case ModelKind::ConstVel: return "cv";
    case ModelKind::ConstAcc: return "ca";
  }
  throw std::invalid_argument("unknown model kind");
}

ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::OneXI, ModelKind::TwoXI, ModelKind::ThreeXI,
                      ModelKind::Curvilinear, ModelKind::Curvature, ModelKind::Unicycle,
                      ModelKind::SingleTrack, ModelKind::Node1, ModelKind::Node2,
                      ModelKind::ConstVel, ModelKind::ConstAcc}) {
    if (model_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown model name: " + name);
}

double ScalarMlp::eval(double a, double b, double u) const {
  Eigen::Vector3d in(a, b, u);
  Eigen::Matrix<double, kHidden, 1> h1 = (w1 * in + b1).unaryExpr([](double v) { return elu(v); });
  Eigen::Matrix<double, kHidden, 1> h2 = (w2 * h1 + b2).unaryExpr([](double v) { return elu(v); });
  return w3 * h2 + b3;
}

namespace {

int pack(const ScalarMlp& m, Vec& out, int at) {
  auto put = [&](const double* data, int n) {
    out.segment(at, n) = Eigen::Map<const Vec>(data, n);
    at += n;
  };
  put(m.w1.data(), m.w1.size());
  put(m.b1.data(), m.b1.size());
  put(m.w2.data(), m.w2.size());
  put(m.b2.data(), m.b2.size());
  put(m.w3.data(), m.w3.size());
  out[at++] = m.b3;
  return at;
}

int unpack(ScalarMlp& m, const Vec& in, int at) {
  auto take = [&](double* data, int n) {
    Eigen::Map<Vec>(data, n) = in.segment(at, n);
    at += n;
  };
  take(m.w1.data(), m.w1.size());
  take(m.b1.data(), m.b1.size());
  take(m.w2.data(), m.w2.size());
  take(m.b2.data(), m.b2.size());
  take(m.w3.data(), m.w3.size());
  m.b3 = in[at++];
  return at;
}

}  // namespace

Vec NeuralRhsParams::flatten() const {
  Vec p(param_count());
  int at = pack(f1, p, 0);
  at = pack(f2, p, at);
  return p;
}

NeuralRhsParams NeuralRhsParams::unflatten(const Vec& p) {
  if (p.size() != param_count()) {
    throw std::invalid_argument("neural rhs parameter vector has wrong length");
  }
  NeuralRhsParams n;
  int at = unpack(n.f1, p, 0);
  at = unpack(n.f2, p, at);
  return n;
}

NeuralRhsParams NeuralRhsParams::random(std::uint64_t seed) {
  Rng rng(seed);
  Vec p(param_count());
  for (int i = 0; i < p.size(); ++i) p[i] = rng.uniform(-0.5, 0.5);
  return unflatten(p);
}

InputBounds default_bounds(ModelKind kind) {
  constexpr double accel = 5.0;      // m/s^2
  constexpr double jerk = 10.0;      // m/s^3
  constexpr double steer = 0.6;      // rad
  constexpr double turn_rate = 1.0;  // rad/s
  constexpr double curvature = 0.2;  // 1/m
  constexpr double speed = 60.0;     // m/s
  switch (kind) {
    case ModelKind::OneXI: return {speed, speed};
    case ModelKind::TwoXI: return {accel, accel};
    case ModelKind::ThreeXI: return {jerk, jerk};
    case ModelKind::Curvilinear: return {accel, accel};
    case ModelKind::Curvature: return {curvature, accel};
    case ModelKind::Unicycle: return {turn_rate, accel};
    case ModelKind::SingleTrack: return {steer, accel};
    case ModelKind::Node1: return {speed, speed};
    case ModelKind::Node2: return {accel, accel};
    case ModelKind::ConstVel: return {speed, speed};
    case ModelKind::ConstAcc: return {accel, accel};
  }
  throw std::invalid_argument("unknown model kind");
}

ModelSpec make_model(ModelKind kind, std::uint64_t node_seed) {
  ModelSpec m;
  m.kind = kind;
  m.bounds = default_bounds(kind);
  if (kind == ModelKind::SingleTrack) {
    m.wheelbase = wheelbase_from_dimensions(4.5);
  }
  if (kind == ModelKind::Node1 || kind == ModelKind::Node2) {
    m.node = NeuralRhsParams::random(node_seed);
  }
  validate(m);
  return m;
}

void validate(const ModelSpec& model) {
  if (model.bounds.u1_max <= 0.0 || model.bounds.u2_max <= 0.0) {
    throw std::invalid_argument("input bounds must be positive");
  }
  if (model.kind == ModelKind::SingleTrack) {
    if (!model.wheelbase || model.wheelbase->lf <= 0.0 || model.wheelbase->lr <= 0.0) {
      throw std::invalid_argument("single-track model requires positive wheelbase lengths");
    }
  }
  if ((model.kind == ModelKind::Node1 || model.kind == ModelKind::Node2) && !model.node) {
    throw std::invalid_argument("neural model requires network parameters");
  }
}

Vec rhs(const ModelSpec& model, const Vec& x, const Input& u) {
  check_state(model, x);
  Vec dx(x.size());
  switch (model.kind) {
    case ModelKind::OneXI:
      dx << u[0], u[1];
      break;
    case ModelKind::TwoXI:
      dx << x[2], x[3], u[0], u[1];
      break;
    case ModelKind::ThreeXI:
      dx << x[2], x[3], x[4], x[5], u[0], u[1];
      break;
    case ModelKind::Curvilinear: {
      const double psi = x[2], v = x[3];
      const double denom = std::max(std::abs(v), kCurvilinearSpeedFloor);
      dx << v * std::cos(psi), v * std::sin(psi), u[0] * sign_pos(v) / denom, u[1];
      break;
    }
    case ModelKind::Curvature: {
      const double psi = x[2], v = x[3];
      dx << v * std::cos(psi), v * std::sin(psi), u[0] * v, u[1];
      break;
    }
    case ModelKind::Unicycle: {
      const double psi = x[2], v = x[3];
      dx << v * std::cos(psi), v * std::sin(psi), u[0], u[1];
      break;
    }
    case ModelKind::SingleTrack: {
      const double psi = x[2], v = x[3];
      const double beta = slip_angle(*model.wheelbase, u[0]);
      dx << v * std::cos(psi + beta), v * std::sin(psi + beta),
          v / model.wheelbase->lr * std::sin(beta), u[1];
      break;
    }
    case ModelKind::Node1:
      dx << model.node->f1.eval(x[0], x[1], u[0]), model.node->f2.eval(x[0], x[1], u[1]);
      break;
    case ModelKind::Node2:
      dx << x[2], x[3], model.node->f1.eval(x[2], x[3], u[0]),
          model.node->f2.eval(x[2], x[3], u[1]);
      break;
    case ModelKind::ConstVel:
      dx << x[2], x[3], 0.0, 0.0;
      break;
    case ModelKind::ConstAcc:
      dx << x[2], x[3], x[4], x[5], 0.0, 0.0;
      break;
  }
  return dx;
}

Input clamp_input(const Input& u_raw, const InputBounds& bounds) {
  if (bounds.u1_max <= 0.0 || bounds.u2_max <= 0.0) {
    throw std::invalid_argument("input bounds must be positive");
  }
  return {std::clamp(u_raw[0], -bounds.u1_max, bounds.u1_max),
          std::clamp(u_raw[1], -bounds.u2_max, bounds.u2_max)};
}

Mat state_jacobian_continuous(const ModelSpec& model, const Vec& x, const Input& u) {
  check_state(model, x);
  const int n = model.state_dim();
  Mat j = Mat::Zero(n, n);
  switch (model.kind) {
    case ModelKind::OneXI:
      break;
    case ModelKind::TwoXI:
    case ModelKind::ConstVel:
      j(0, 2) = 1.0;
      j(1, 3) = 1.0;
      break;
    case ModelKind::ThreeXI:
    case ModelKind::ConstAcc:
      j(0, 2) = 1.0;
      j(1, 3) = 1.0;
      j(2, 4) = 1.0;
      j(3, 5) = 1.0;
      break;
    case ModelKind::Curvilinear: {
      const double psi = x[2], v = x[3];
      j(0, 2) = -v * std::sin(psi);
      j(0, 3) = std::cos(psi);
      j(1, 2) = v * std::cos(psi);
      j(1, 3) = std::sin(psi);
      if (std::abs(v) > kCurvilinearSpeedFloor) j(2, 3) = -u[0] / (v * v);
      break;
    }
    case ModelKind::Curvature: {
      const double psi = x[2], v = x[3];
      j(0, 2) = -v * std::sin(psi);
      j(0, 3) = std::cos(psi);
      j(1, 2) = v * std::cos(psi);
      j(1, 3) = std::sin(psi);
      j(2, 3) = u[0];
      break;
    }
    case ModelKind::Unicycle: {
      const double psi = x[2], v = x[3];
      j(0, 2) = -v * std::sin(psi);
      j(0, 3) = std::cos(psi);
      j(1, 2) = v * std::cos(psi);
      j(1, 3) = std::sin(psi);
      break;
    }
    case ModelKind::SingleTrack: {
      const double psi = x[2], v = x[3];
      const double beta = slip_angle(*model.wheelbase, u[0]);
      j(0, 2) = -v * std::sin(psi + beta);
      j(0, 3) = std::cos(psi + beta);
      j(1, 2) = v * std::cos(psi + beta);
      j(1, 3) = std::sin(psi + beta);
      j(2, 3) = std::sin(beta) / model.wheelbase->lr;
      break;
    }
    case ModelKind::Node1:
    case ModelKind::Node2: {
      for (int i = 0; i < n; ++i) {
        const double h = 1e-5 * (1.0 + std::abs(x[i]));
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        j.col(i) = (rhs(model, xp, u) - rhs(model, xm, u)) / (2.0 * h);
      }
      break;
    }
  }
  return j;
}

Mat noise_input_matrix(const ModelSpec& model, double ts) {
  if (ts <= 0.0) throw std::invalid_argument("sample period must be positive");
  const int n = model.state_dim();
  Mat g = Mat::Zero(n, 2);
  g(n - 2, 0) = ts;
  g(n - 1, 1) = ts;
  return g;
}

Wheelbase wheelbase_from_dimensions(double length) {
  if (length <= 0.0) throw std::invalid_argument("vehicle length must be positive");
  const double half = 0.3 * length;
  return {half, half};
}

void to_json(nlohmann::json& j, const ModelSpec& model) {
  j = nlohmann::json{{"kind", model_kind_name(model.kind)},
                     {"bounds", {{"u1_max", model.bounds.u1_max}, {"u2_max", model.bounds.u2_max}}}};
  if (model.wheelbase) {
    j["wheelbase"] = {{"lf", model.wheelbase->lf}, {"lr", model.wheelbase->lr}};
  }
  if (model.node) {
    const Vec p = model.node->flatten();
    j["node_params"] = std::vector<double>(p.data(), p.data() + p.size());
  }
}

void from_json(const nlohmann::json& j, ModelSpec& model) {
  model = ModelSpec{};
  model.kind = parse_model_kind(j.at("kind").get<std::string>());
  model.bounds.u1_max = j.at("bounds").at("u1_max").get<double>();
  model.bounds.u2_max = j.at("bounds").at("u2_max").get<double>();
  if (j.contains("wheelbase")) {
    model.wheelbase = Wheelbase{j["wheelbase"].at("lf").get<double>(),
                                j["wheelbase"].at("lr").get<double>()};
  }
  if (j.contains("node_params")) {
    const auto raw = j["node_params"].get<std::vector<double>>();
    model.node = NeuralRhsParams::unflatten(Eigen::Map<const Vec>(raw.data(), raw.size()));
  }
  validate(model);
}

}  // namespace mmpred
