#include "mmpred/predictor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mmpred/rng.hpp"

namespace mmpred {

const char* generator_kind_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::Constant:
      return "constant";
    case GeneratorKind::PiecewisePolynomial:
      return "piecewise";
    case GeneratorKind::Lookup:
      return "lookup";
    case GeneratorKind::Fitted:
      return "fitted";
  }
  throw std::invalid_argument("unknown generator kind");
}

GeneratorKind parse_generator_kind(const std::string& name) {
  if (name == "constant") return GeneratorKind::Constant;
  if (name == "piecewise") return GeneratorKind::PiecewisePolynomial;
  if (name == "lookup") return GeneratorKind::Lookup;
  if (name == "fitted") return GeneratorKind::Fitted;
  throw std::invalid_argument("unknown generator kind: " + name);
}

void to_json(nlohmann::json& j, const GeneratorShape& shape) {
  j = nlohmann::json{{"kind", generator_kind_name(shape.kind)},
                     {"segments", shape.segments},
                     {"degree", shape.degree}};
}

void from_json(const nlohmann::json& j, GeneratorShape& shape) {
  GeneratorShape defaults;
  shape.kind = parse_generator_kind(j.value("kind", std::string(generator_kind_name(defaults.kind))));
  shape.segments = j.value("segments", defaults.segments);
  shape.degree = j.value("degree", defaults.degree);
}

InputGenerator InputGenerator::constant(const Input& u, const ProcessNoiseParams& noise) {
  InputGenerator gen;
  gen.kind = GeneratorKind::Constant;
  gen.params = Vec(5);
  gen.params << u[0], u[1], noise.raw_sigma1, noise.raw_sigma2, noise.raw_rho;
  return gen;
}

InputGenerator InputGenerator::lookup(const std::vector<Input>& schedule,
                                      const ProcessNoiseParams& noise) {
  InputGenerator gen;
  gen.kind = GeneratorKind::Lookup;
  gen.horizon = static_cast<int>(schedule.size());
  gen.params = Vec(5 * gen.horizon);
  for (int k = 0; k < gen.horizon; ++k) {
    gen.params.segment(5 * k, 5) << schedule[static_cast<std::size_t>(k)][0],
        schedule[static_cast<std::size_t>(k)][1], noise.raw_sigma1, noise.raw_sigma2,
        noise.raw_rho;
  }
  return gen;
}

InputGenerator InputGenerator::make(const GeneratorShape& shape, int horizon) {
  if (horizon < 1) throw std::invalid_argument("generator horizon must be at least 1");
  InputGenerator gen;
  gen.kind = shape.kind;
  gen.horizon = horizon;
  if (shape.kind == GeneratorKind::PiecewisePolynomial) {
    if (shape.segments < 1 || shape.degree < 0) {
      throw std::invalid_argument("piecewise generator needs segments >= 1 and degree >= 0");
    }
    gen.segments = shape.segments;
    gen.degree = shape.degree;
  }
  gen.params = Vec::Zero(gen.param_count());
  return gen;
}

int InputGenerator::param_count() const {
  switch (kind) {
    case GeneratorKind::Constant:
      return 5;
    case GeneratorKind::PiecewisePolynomial:
      return segments * (degree + 1) * 2 + 3;
    case GeneratorKind::Lookup:
      return 5 * horizon;
    case GeneratorKind::Fitted:
      return 2 * horizon + 3;
  }
  throw std::invalid_argument("unknown generator kind");
}

std::pair<Input, ProcessNoiseParams> InputGenerator::emit(int k) const {
  if (k < 0 || k >= horizon) throw std::invalid_argument("generator step out of range");
  if (params.size() != param_count()) {
    throw std::invalid_argument("generator parameter vector has the wrong size");
  }
  switch (kind) {
    case GeneratorKind::Constant:
      return {Input(params[0], params[1]), {params[2], params[3], params[4]}};
    case GeneratorKind::PiecewisePolynomial: {
      const double tau = (k + 0.5) / static_cast<double>(horizon);
      const int seg = std::min(segments - 1, static_cast<int>(tau * segments));
      const double xi = tau * segments - seg;
      Input u = Input::Zero();
      double pow_xi = 1.0;
      for (int m = 0; m <= degree; ++m) {
        const int base = (seg * (degree + 1) + m) * 2;
        u[0] += params[base] * pow_xi;
        u[1] += params[base + 1] * pow_xi;
        pow_xi *= xi;
      }
      const int noise_base = segments * (degree + 1) * 2;
      return {u, {params[noise_base], params[noise_base + 1], params[noise_base + 2]}};
    }
    case GeneratorKind::Lookup: {
      const int base = 5 * k;
      return {Input(params[base], params[base + 1]),
              {params[base + 2], params[base + 3], params[base + 4]}};
    }
    case GeneratorKind::Fitted: {
      const int base = 2 * k;
      const int noise_base = 2 * horizon;
      return {Input(params[base], params[base + 1]),
              {params[noise_base], params[noise_base + 1], params[noise_base + 2]}};
    }
  }
  throw std::invalid_argument("unknown generator kind");
}

void to_json(nlohmann::json& j, const InputGenerator& gen) {
  j = nlohmann::json{
      {"kind", generator_kind_name(gen.kind)},
      {"horizon", gen.horizon},
      {"segments", gen.segments},
      {"degree", gen.degree},
      {"params", std::vector<double>(gen.params.data(), gen.params.data() + gen.params.size())}};
}

void from_json(const nlohmann::json& j, InputGenerator& gen) {
  gen.kind = parse_generator_kind(j.at("kind").get<std::string>());
  gen.horizon = j.at("horizon").get<int>();
  gen.segments = j.value("segments", 1);
  gen.degree = j.value("degree", 0);
  const auto params = j.at("params").get<std::vector<double>>();
  gen.params = Eigen::Map<const Vec>(params.data(), static_cast<int>(params.size()));
  if (gen.params.size() != gen.param_count()) {
    throw SchemaError("generator parameter count does not match its shape");
  }
}

Rollout rollout(const ModelSpec& model, const SolverSpec& solver, const InputGenerator& gen,
                const BeliefState& belief0, int t_f, double ts) {
  if (t_f < 1) throw std::invalid_argument("rollout: horizon must be at least 1");
  if (gen.horizon < t_f) throw std::invalid_argument("rollout: generator horizon too short");

  std::vector<Input> inputs;
  std::vector<Mat2> qs;
  inputs.reserve(static_cast<std::size_t>(t_f));
  qs.reserve(static_cast<std::size_t>(t_f));
  for (int k = 0; k < t_f; ++k) {
    const auto [raw_u, raw_noise] = gen.emit(k);
    inputs.push_back(clamp_input(raw_u, model.bounds));
    qs.push_back(build_Q(raw_noise));
  }
  Rollout out;
  out.beliefs = propagate(model, solver, belief0, inputs, qs, ts);
  out.inputs_used = std::move(inputs);
  return out;
}

MixturePrediction predict_mixture(const ModelSpec& model, const SolverSpec& solver,
                                  const std::vector<InputGenerator>& gens,
                                  const Vec& raw_weights, const BeliefState& belief0, int t_f,
                                  double ts) {
  if (gens.empty()) throw std::invalid_argument("predict_mixture: needs at least one generator");
  if (raw_weights.size() != static_cast<int>(gens.size())) {
    throw std::invalid_argument("predict_mixture: one raw weight per generator required");
  }
  MixturePrediction pred;
  pred.weights = softmax(raw_weights);
  pred.components.reserve(gens.size());
  for (const InputGenerator& gen : gens) {
    const Rollout r = rollout(model, solver, gen, belief0, t_f, ts);
    MixtureComponent comp;
    comp.means.reserve(r.beliefs.size());
    comp.covs.reserve(r.beliefs.size());
    for (const BeliefState& b : r.beliefs) {
      comp.means.push_back(b.mean);
      comp.covs.push_back(b.cov);
    }
    pred.components.push_back(std::move(comp));
  }
  return pred;
}

MixturePrediction mixture_from_rollout(const Rollout& r) {
  MixturePrediction pred;
  pred.weights = Vec::Ones(1);
  MixtureComponent comp;
  comp.means.reserve(r.beliefs.size());
  comp.covs.reserve(r.beliefs.size());
  for (const BeliefState& b : r.beliefs) {
    comp.means.push_back(b.mean);
    comp.covs.push_back(b.cov);
  }
  pred.components.push_back(std::move(comp));
  return pred;
}

namespace {

Rollout kinematic_baseline(ModelKind kind, const std::vector<FeatureRow>& history, int t_f,
                           double ts) {
  if (history.empty()) throw std::invalid_argument("baseline: history must not be empty");
  if (t_f < 1) throw std::invalid_argument("baseline: horizon must be at least 1");
  const ModelSpec model = make_model(kind);
  SolverSpec solver;
  solver.kind = SolverKind::RK4;
  solver.h = ts;

  BeliefState belief0;
  belief0.mean = state_from_row(kind, history.back());
  // Noise enters through the velocity rows only, so a zero P0 would leave the
  // first predicted position singular; floor it at the same plotting scale.
  belief0.cov = 0.25 * Covariance::Identity(model.state_dim(), model.state_dim());

  Mat2 q = Mat2::Zero();
  q(0, 0) = q(1, 1) = 0.25;  // 0.5 m std per axis, plotting-scale only
  const std::vector<Input> inputs(static_cast<std::size_t>(t_f), Input::Zero());
  const std::vector<Mat2> qs(static_cast<std::size_t>(t_f), q);

  Rollout out;
  out.beliefs = propagate(model, solver, belief0, inputs, qs, ts);
  out.inputs_used = inputs;
  return out;
}

}  // namespace

Rollout cv_baseline(const std::vector<FeatureRow>& history, int t_f, double ts) {
  return kinematic_baseline(ModelKind::ConstVel, history, t_f, ts);
}

Rollout ca_baseline(const std::vector<FeatureRow>& history, int t_f, double ts) {
  return kinematic_baseline(ModelKind::ConstAcc, history, t_f, ts);
}

Vec state_from_row(ModelKind kind, const FeatureRow& row) {
  switch (kind) {
    case ModelKind::OneXI:
    case ModelKind::Node1: {
      Vec x(2);
      x << row.x, row.y;
      return x;
    }
    case ModelKind::TwoXI:
    case ModelKind::Node2:
    case ModelKind::ConstVel: {
      Vec x(4);
      x << row.x, row.y, row.vx, row.vy;
      return x;
    }
    case ModelKind::ThreeXI:
    case ModelKind::ConstAcc: {
      Vec x(6);
      x << row.x, row.y, row.vx, row.vy, row.ax, row.ay;
      return x;
    }
    case ModelKind::Curvilinear:
    case ModelKind::Curvature:
    case ModelKind::Unicycle:
    case ModelKind::SingleTrack: {
      Vec x(4);
      x << row.x, row.y, row.psi, std::hypot(row.vx, row.vy);
      return x;
    }
  }
  throw std::invalid_argument("unknown model kind");
}

TrainingWindow make_training_window(ModelKind kind, const PredictionWindow& window,
                                    double initial_variance) {
  if (window.history.empty()) throw std::invalid_argument("window has no history");
  if (initial_variance < 0.0) throw std::invalid_argument("initial variance must be >= 0");
  const int n = state_dim(kind);
  TrainingWindow out;
  out.belief0.mean = state_from_row(kind, window.history.back());
  out.belief0.cov = initial_variance * Covariance::Identity(n, n);
  out.target.reserve(window.future.size());
  for (const FeatureRow& row : window.future) out.target.push_back(state_from_row(kind, row));
  return out;
}

int MixtureParams::param_count() const {
  int total = static_cast<int>(raw_weights.size());
  for (const InputGenerator& gen : gens) total += gen.param_count();
  return total;
}

Vec MixtureParams::flatten() const {
  Vec flat(param_count());
  int offset = 0;
  for (const InputGenerator& gen : gens) {
    flat.segment(offset, gen.params.size()) = gen.params;
    offset += static_cast<int>(gen.params.size());
  }
  flat.segment(offset, raw_weights.size()) = raw_weights;
  return flat;
}

void MixtureParams::unflatten(const Vec& flat) {
  if (flat.size() != param_count()) {
    throw std::invalid_argument("flat parameter vector has the wrong size");
  }
  int offset = 0;
  for (InputGenerator& gen : gens) {
    gen.params = flat.segment(offset, gen.param_count());
    offset += gen.param_count();
  }
  raw_weights = flat.segment(offset, raw_weights.size());
}

void to_json(nlohmann::json& j, const MixtureParams& params) {
  j = nlohmann::json{{"raw_weights", std::vector<double>(params.raw_weights.data(),
                                                         params.raw_weights.data() +
                                                             params.raw_weights.size())},
                     {"generators", params.gens}};
}

void from_json(const nlohmann::json& j, MixtureParams& params) {
  const auto weights = j.at("raw_weights").get<std::vector<double>>();
  params.raw_weights = Eigen::Map<const Vec>(weights.data(), static_cast<int>(weights.size()));
  params.gens = j.at("generators").get<std::vector<InputGenerator>>();
  if (params.raw_weights.size() != static_cast<int>(params.gens.size())) {
    throw SchemaError("mixture parameters need one raw weight per generator");
  }
}

MixtureParams init_mixture_params(const GeneratorShape& shape, int num_components, int horizon,
                                  std::uint64_t seed) {
  if (num_components < 1) throw std::invalid_argument("mixture needs at least one component");
  Rng rng(seed);
  MixtureParams params;
  params.gens.reserve(static_cast<std::size_t>(num_components));
  for (int j = 0; j < num_components; ++j) {
    InputGenerator gen = InputGenerator::make(shape, horizon);
    for (int i = 0; i < gen.params.size(); ++i) gen.params[i] = rng.uniform(-0.5, 0.5);
    params.gens.push_back(std::move(gen));
  }
  params.raw_weights = Vec::Zero(num_components);
  return params;
}

MixturePrediction predict_from_params(const ModelSpec& model, const SolverSpec& solver,
                                      const MixtureParams& params, const BeliefState& belief0,
                                      int t_f, double ts, bool uniform_weights) {
  const Vec raw = uniform_weights ? Vec::Zero(params.num_components()) : params.raw_weights;
  return predict_mixture(model, solver, params.gens, raw, belief0, t_f, ts);
}

void to_json(nlohmann::json& j, const FitConfig& cfg) {
  j = nlohmann::json{{"epochs", cfg.epochs},
                     {"warmup_epochs", cfg.warmup_epochs},
                     {"lr", cfg.lr},
                     {"momentum", cfg.momentum},
                     {"plateau_epochs", cfg.plateau_epochs},
                     {"train_dims", cfg.train_dims},
                     {"grad_step_scale", cfg.grad_step_scale},
                     {"ts", cfg.ts}};
}

void from_json(const nlohmann::json& j, FitConfig& cfg) {
  FitConfig defaults;
  cfg.epochs = j.value("epochs", defaults.epochs);
  cfg.warmup_epochs = j.value("warmup_epochs", defaults.warmup_epochs);
  cfg.lr = j.value("lr", defaults.lr);
  cfg.momentum = j.value("momentum", defaults.momentum);
  cfg.plateau_epochs = j.value("plateau_epochs", defaults.plateau_epochs);
  cfg.train_dims = j.value("train_dims", defaults.train_dims);
  cfg.grad_step_scale = j.value("grad_step_scale", defaults.grad_step_scale);
  cfg.ts = j.value("ts", defaults.ts);
}

FitResult fit_mixture(const ModelSpec& model, const SolverSpec& solver, MixtureParams init,
                      const std::vector<TrainingWindow>& windows, const FitConfig& cfg) {
  if (windows.empty()) throw std::invalid_argument("fit: needs at least one training scenario");
  if (cfg.epochs < 1) throw std::invalid_argument("fit: epochs must be at least 1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("fit: learning rate must be positive");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw std::invalid_argument("fit: momentum must lie in [0, 1)");
  }
  const int m = init.num_components();
  const int horizon = static_cast<int>(windows.front().target.size());
  for (const TrainingWindow& w : windows) {
    if (static_cast<int>(w.target.size()) != horizon) {
      throw std::invalid_argument("fit: training windows must share one horizon");
    }
  }

  MixtureParams scratch = init;
  const auto loss_at = [&](const Vec& flat, const SchedulePoint& sp) {
    scratch.unflatten(flat);
    double total = 0.0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const MixturePrediction pred =
          predict_from_params(model, solver, scratch, windows[w].belief0, horizon, cfg.ts,
                              sp.mode == LossMode::WTA);
      const double loss = sp.mode == LossMode::WTA
                              ? ewta_loss(pred, windows[w].target, sp.k, cfg.train_dims)
                              : nll_loss(pred, windows[w].target, cfg.train_dims);
      if (!std::isfinite(loss)) {
        throw NumericError("fit: non-finite loss on training scenario " + std::to_string(w));
      }
      total += loss;
    }
    return total / static_cast<double>(windows.size());
  };

  Vec p = init.flatten();
  if (!p.allFinite()) throw std::invalid_argument("fit: initial parameters must be finite");
  Vec velocity = Vec::Zero(p.size());
  Vec gradient = Vec::Zero(p.size());

  double lr = cfg.lr;
  double best = std::numeric_limits<double>::infinity();
  int plateau = 0;
  LossMode prev_mode = LossMode::WTA;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const SchedulePoint sp = ewta_schedule(epoch, m, cfg.warmup_epochs);
    if (epoch == 0 || sp.mode != prev_mode) {
      // The objective changed shape; restart the step-size bookkeeping.
      best = std::numeric_limits<double>::infinity();
      plateau = 0;
      velocity.setZero();
      lr = cfg.lr;
      prev_mode = sp.mode;
    }

    const double loss = loss_at(p, sp);
    trace.push_back(loss);
    if (loss < best - 1e-12) {
      best = loss;
      plateau = 0;
    } else if (++plateau >= cfg.plateau_epochs) {
      lr *= 0.5;
      plateau = 0;
    }

    // Weights are trained only once the NLL phase begins.
    const int active = sp.mode == LossMode::WTA ? static_cast<int>(p.size()) - m
                                                : static_cast<int>(p.size());
    gradient.setZero();
    for (int i = 0; i < active; ++i) {
      const double dp = cfg.grad_step_scale * (1.0 + std::abs(p[i]));
      Vec probe = p;
      probe[i] = p[i] + dp;
      const double up = loss_at(probe, sp);
      probe[i] = p[i] - dp;
      const double down = loss_at(probe, sp);
      gradient[i] = (up - down) / (2.0 * dp);
    }

    velocity = cfg.momentum * velocity - lr * gradient;
    p += velocity;
    if (!p.allFinite()) {
      throw NumericError("fit: parameters diverged at epoch " + std::to_string(epoch));
    }
  }

  FitResult result;
  result.params = init;
  result.params.unflatten(p);
  result.loss_trace = std::move(trace);
  return result;
}

Vec numeric_gradient(const std::function<double(const Vec&)>& loss, const Vec& params,
                     double step_scale) {
  if (!(step_scale > 0.0)) throw std::invalid_argument("numeric_gradient: step must be positive");
  Vec grad(params.size());
  for (int i = 0; i < params.size(); ++i) {
    const double dp = step_scale * (1.0 + std::abs(params[i]));
    Vec probe = params;
    probe[i] = params[i] + dp;
    const double up = loss(probe);
    probe[i] = params[i] - dp;
    const double down = loss(probe);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("numeric_gradient: non-finite loss at a probe point");
    }
    grad[i] = (up - down) / (2.0 * dp);
  }
  return grad;
}

}  // namespace mmpred
