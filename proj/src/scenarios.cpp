#include "mmpred/scenarios.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <nlohmann/json.hpp>

#include "mmpred/rng.hpp"

namespace mmpred {

namespace {

constexpr double kGridTol = 1e-9;
constexpr double kPi = 3.14159265358979323846;

void append_row(std::vector<FeatureRow>& rows, double t, double x, double y, double vx, double vy,
                double ax, double ay, double psi) {
  FeatureRow row;
  row.t = t;
  row.x = x;
  row.y = y;
  row.vx = vx;
  row.vy = vy;
  row.ax = ax;
  row.ay = ay;
  row.psi = psi;
  rows.push_back(row);
}

}  // namespace

const char* agent_class_name(AgentClass cls) {
  switch (cls) {
    case AgentClass::Motorcycle:
      return "motorcycle";
    case AgentClass::Automobile:
      return "automobile";
    case AgentClass::Truck:
      return "truck";
  }
  throw std::invalid_argument("unknown agent class");
}

AgentClass parse_agent_class(const std::string& name) {
  if (name == "motorcycle") return AgentClass::Motorcycle;
  if (name == "automobile") return AgentClass::Automobile;
  if (name == "truck") return AgentClass::Truck;
  throw SchemaError("unknown agent class: " + name);
}

Eigen::Vector3d one_hot(AgentClass cls) {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  v[static_cast<int>(cls)] = 1.0;
  return v;
}

double lane_context(double y_local, double lane_left_y, double lane_width) {
  if (!(lane_width > 0.0)) throw std::invalid_argument("lane_context: lane width must be positive");
  return 2.0 * (y_local - lane_left_y) / lane_width - 1.0;
}

PolarContext polar_context(double x, double y, double x0, double y0) {
  const double dx = x0 - x;
  const double dy = y0 - y;
  PolarContext out;
  out.r = std::sqrt(dx * dx + dy * dy);
  out.theta = out.r == 0.0 ? 0.0 : std::atan2(y0 - y, x - x0);
  return out;
}

void validate(const HighwayParams& params) {
  if (params.lanes < 1) throw std::invalid_argument("highway: needs at least one lane");
  if (!(params.lane_width > 0.0)) throw std::invalid_argument("highway: lane width must be positive");
  if (!params.speeds.empty() && static_cast<int>(params.speeds.size()) != params.lanes) {
    throw std::invalid_argument("highway: speeds must be empty or one per lane");
  }
  if (!(params.ts > 0.0)) throw std::invalid_argument("highway: ts must be positive");
  if (!(params.duration > 0.0)) throw std::invalid_argument("highway: duration must be positive");
  if (params.change_agent >= params.lanes) {
    throw std::invalid_argument("highway: change agent index out of range");
  }
  if (params.change_agent >= 0 && !(params.change_duration > 0.0)) {
    throw std::invalid_argument("highway: change duration must be positive");
  }
  if (params.start_jitter < 0.0) throw std::invalid_argument("highway: jitter must be non-negative");
}

void validate(const RoundaboutParams& params) {
  if (!(params.radius > 0.0)) throw std::invalid_argument("roundabout: radius must be positive");
  if (!(params.arc_speed > 0.0) || !(params.entry_speed > 0.0)) {
    throw std::invalid_argument("roundabout: speeds must be positive");
  }
  if (params.arc_speed > params.entry_speed) {
    throw std::invalid_argument("roundabout: arc speed must not exceed entry speed");
  }
  if (params.decel_steps < 0 || params.decel_steps > params.entry_steps) {
    throw std::invalid_argument("roundabout: decel steps must fit inside the entry");
  }
  if (params.decel_steps == 0 && params.entry_speed != params.arc_speed) {
    throw std::invalid_argument("roundabout: speed change requires decel steps");
  }
  if (params.arc_steps < 1) throw std::invalid_argument("roundabout: needs at least one arc step");
  if (params.entry_steps < 0 || params.exit_steps < 0) {
    throw std::invalid_argument("roundabout: step counts must be non-negative");
  }
  if (!(params.ts > 0.0)) throw std::invalid_argument("roundabout: ts must be positive");
  if (params.turn_directions.empty()) {
    throw std::invalid_argument("roundabout: needs at least one agent");
  }
  for (int d : params.turn_directions) {
    if (d != 1 && d != -1) throw std::invalid_argument("roundabout: directions must be +1 or -1");
  }
  if (params.speed_jitter < 0.0 || params.speed_jitter >= params.arc_speed) {
    throw std::invalid_argument("roundabout: jitter must be non-negative and below arc speed");
  }
}

void to_json(nlohmann::json& j, const HighwayParams& params) {
  j = nlohmann::json{{"lanes", params.lanes},
                     {"lane_width", params.lane_width},
                     {"speeds", params.speeds},
                     {"duration", params.duration},
                     {"ts", params.ts},
                     {"change_agent", params.change_agent},
                     {"change_start", params.change_start},
                     {"change_duration", params.change_duration},
                     {"change_lateral", params.change_lateral},
                     {"start_jitter", params.start_jitter},
                     {"seed", params.seed}};
}

void from_json(const nlohmann::json& j, HighwayParams& params) {
  HighwayParams defaults;
  params.lanes = j.value("lanes", defaults.lanes);
  params.lane_width = j.value("lane_width", defaults.lane_width);
  params.speeds = j.value("speeds", defaults.speeds);
  params.duration = j.value("duration", defaults.duration);
  params.ts = j.value("ts", defaults.ts);
  params.change_agent = j.value("change_agent", defaults.change_agent);
  params.change_start = j.value("change_start", defaults.change_start);
  params.change_duration = j.value("change_duration", defaults.change_duration);
  params.change_lateral = j.value("change_lateral", defaults.change_lateral);
  params.start_jitter = j.value("start_jitter", defaults.start_jitter);
  params.seed = j.value("seed", defaults.seed);
}

void to_json(nlohmann::json& j, const RoundaboutParams& params) {
  j = nlohmann::json{{"radius", params.radius},
                     {"entry_speed", params.entry_speed},
                     {"arc_speed", params.arc_speed},
                     {"decel_steps", params.decel_steps},
                     {"entry_steps", params.entry_steps},
                     {"arc_steps", params.arc_steps},
                     {"exit_steps", params.exit_steps},
                     {"ts", params.ts},
                     {"turn_directions", params.turn_directions},
                     {"speed_jitter", params.speed_jitter},
                     {"origin_at_first_center", params.origin_at_first_center},
                     {"seed", params.seed}};
}

void from_json(const nlohmann::json& j, RoundaboutParams& params) {
  RoundaboutParams defaults;
  params.radius = j.value("radius", defaults.radius);
  params.entry_speed = j.value("entry_speed", defaults.entry_speed);
  params.arc_speed = j.value("arc_speed", defaults.arc_speed);
  params.decel_steps = j.value("decel_steps", defaults.decel_steps);
  params.entry_steps = j.value("entry_steps", defaults.entry_steps);
  params.arc_steps = j.value("arc_steps", defaults.arc_steps);
  params.exit_steps = j.value("exit_steps", defaults.exit_steps);
  params.ts = j.value("ts", defaults.ts);
  params.turn_directions = j.value("turn_directions", defaults.turn_directions);
  params.speed_jitter = j.value("speed_jitter", defaults.speed_jitter);
  params.origin_at_first_center =
      j.value("origin_at_first_center", defaults.origin_at_first_center);
  params.seed = j.value("seed", defaults.seed);
}

double lane_change_offset(double tau) {
  if (tau <= 0.0) return 0.0;
  if (tau >= 1.0) return 1.0;
  return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

double lane_change_offset_rate(double tau) {
  if (tau <= 0.0 || tau >= 1.0) return 0.0;
  return tau * tau * (30.0 + tau * (-60.0 + 30.0 * tau));
}

double lane_change_offset_accel(double tau) {
  if (tau <= 0.0 || tau >= 1.0) return 0.0;
  return tau * (60.0 + tau * (-180.0 + 120.0 * tau));
}

Scene synth_highway(const HighwayParams& params) {
  validate(params);
  Rng rng(params.seed);

  Scene scene;
  scene.ts = params.ts;
  scene.input_model = ModelKind::TwoXI;
  const auto samples = static_cast<int>(std::lround(params.duration / params.ts)) + 1;

  for (int lane = 0; lane < params.lanes; ++lane) {
    const double speed = params.speeds.empty() ? 25.0 + 2.0 * lane
                                               : params.speeds[static_cast<std::size_t>(lane)];
    const double x_start =
        params.start_jitter > 0.0 ? rng.uniform(-params.start_jitter, params.start_jitter) : 0.0;
    const double y_lane = (lane + 0.5) * params.lane_width;
    const bool changes = lane == params.change_agent && params.change_lateral != 0.0;
    const double t0 = params.change_start;
    const double dur = params.change_duration;
    const double dy = params.change_lateral;

    AgentTrack track;
    track.id = lane;
    track.cls = AgentClass::Automobile;
    track.samples.reserve(static_cast<std::size_t>(samples));

    const auto lateral = [&](double t) {
      const double tau = (t - t0) / dur;
      return y_lane + (changes ? dy * lane_change_offset(tau) : 0.0);
    };
    const auto lateral_rate = [&](double t) {
      const double tau = (t - t0) / dur;
      return changes ? dy * lane_change_offset_rate(tau) / dur : 0.0;
    };
    const auto lateral_accel = [&](double t) {
      const double tau = (t - t0) / dur;
      return changes ? dy * lane_change_offset_accel(tau) / (dur * dur) : 0.0;
    };

    for (int k = 0; k < samples; ++k) {
      const double t = k * params.ts;
      const double vy = lateral_rate(t);
      append_row(track.samples, t, x_start + speed * t, lateral(t), speed, vy, 0.0,
                 lateral_accel(t), std::atan2(vy, speed));
    }

    std::vector<Input> inputs;
    inputs.reserve(static_cast<std::size_t>(samples) - 1);
    for (int k = 0; k + 1 < samples; ++k) {
      // Hold the interval-average acceleration: the velocity difference over
      // ts. A held average reproduces every grid velocity exactly, so the
      // recorded inputs integrate back onto the sampled profile.
      const double a_mean =
          (lateral_rate((k + 1) * params.ts) - lateral_rate(k * params.ts)) / params.ts;
      inputs.push_back(Input(0.0, a_mean));
    }
    scene.tracks.push_back(std::move(track));
    scene.true_inputs.push_back(std::move(inputs));
  }
  return scene;
}

Scene synth_roundabout(const RoundaboutParams& params) {
  validate(params);
  Rng rng(params.seed);

  Scene scene;
  scene.ts = params.ts;
  scene.input_model = ModelKind::Unicycle;

  const double ts = params.ts;
  const int total_steps = params.entry_steps + params.arc_steps + params.exit_steps;
  Vec2 origin_shift = Vec2::Zero();

  for (std::size_t agent = 0; agent < params.turn_directions.size(); ++agent) {
    const double dir = params.turn_directions[agent];
    const double dv =
        params.speed_jitter > 0.0 ? rng.uniform(-params.speed_jitter, params.speed_jitter) : 0.0;
    const double v_entry = params.entry_speed + dv;
    const double v_arc = params.arc_speed + dv;
    const double t_dec = params.decel_steps * ts;
    const double decel = params.decel_steps > 0 ? (v_entry - v_arc) / t_dec : 0.0;
    const double omega = dir * v_arc / params.radius;

    // Approach runs along y = 0 toward +x and reaches (0, 0) exactly when the
    // arc begins; the turn circle sits one radius above (+1) or below (-1).
    const double entry_dist = v_entry * t_dec - 0.5 * decel * t_dec * t_dec +
                              v_arc * (params.entry_steps - params.decel_steps) * ts;
    const Vec2 center(0.0, dir * params.radius);
    const double phi0 = -dir * kPi / 2.0;
    if (agent == 0 && params.origin_at_first_center) origin_shift = center;

    AgentTrack track;
    track.id = static_cast<long>(agent);
    track.cls = AgentClass::Automobile;
    track.samples.reserve(static_cast<std::size_t>(total_steps) + 1);
    std::vector<Input> inputs;
    inputs.reserve(static_cast<std::size_t>(total_steps));

    double exit_x = 0.0, exit_y = 0.0, exit_psi = 0.0;  // filled at the arc end
    for (int k = 0; k <= total_steps; ++k) {
      const double t = k * ts;
      double x, y, vx, vy, ax, ay, psi, v;
      if (k <= params.entry_steps) {
        const double td = std::min(t, t_dec);
        v = v_entry - decel * td;
        const double dist = v_entry * td - 0.5 * decel * td * td + v_arc * (t - td);
        x = -entry_dist + dist;
        y = 0.0;
        psi = 0.0;
        vx = v;
        vy = 0.0;
        ax = t < t_dec ? -decel : 0.0;
        ay = 0.0;
      } else if (k <= params.entry_steps + params.arc_steps) {
        const double ta = t - params.entry_steps * ts;
        const double phi = phi0 + omega * ta;
        x = center.x() + params.radius * std::cos(phi);
        y = center.y() + params.radius * std::sin(phi);
        psi = omega * ta;
        v = v_arc;
        vx = v * std::cos(psi);
        vy = v * std::sin(psi);
        ax = -v * omega * std::sin(psi);
        ay = v * omega * std::cos(psi);
        if (k == params.entry_steps + params.arc_steps) {
          exit_x = x;
          exit_y = y;
          exit_psi = psi;
        }
      } else {
        const double te = t - (params.entry_steps + params.arc_steps) * ts;
        v = v_arc;
        psi = exit_psi;
        x = exit_x + v * te * std::cos(psi);
        y = exit_y + v * te * std::sin(psi);
        vx = v * std::cos(psi);
        vy = v * std::sin(psi);
        ax = 0.0;
        ay = 0.0;
      }
      append_row(track.samples, t, x - origin_shift.x(), y - origin_shift.y(), vx, vy, ax, ay,
                 psi);
      if (k < total_steps) {
        const bool braking = k < params.decel_steps;
        const bool on_arc = k >= params.entry_steps && k < params.entry_steps + params.arc_steps;
        inputs.push_back(Input(on_arc ? omega : 0.0, braking ? -decel : 0.0));
      }
    }
    scene.tracks.push_back(std::move(track));
    scene.true_inputs.push_back(std::move(inputs));
  }
  return scene;
}

AgentTrack downsample(const AgentTrack& track, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be at least 1");
  AgentTrack out = track;
  out.samples.clear();
  for (std::size_t i = 0; i < track.samples.size(); i += static_cast<std::size_t>(factor)) {
    out.samples.push_back(track.samples[i]);
  }
  return out;
}

Scene downsample(const Scene& scene, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be at least 1");
  if (factor == 1) return scene;
  Scene out;
  out.ts = scene.ts * factor;
  out.input_model = scene.input_model;
  for (const AgentTrack& track : scene.tracks) out.tracks.push_back(downsample(track, factor));
  return out;
}

std::vector<PredictionWindow> make_windows(const Scene& scene, int history_max, int horizon) {
  if (history_max < 1) throw std::invalid_argument("make_windows: history_max must be at least 1");
  if (horizon < 1) throw std::invalid_argument("make_windows: horizon must be at least 1");

  std::vector<PredictionWindow> windows;
  for (std::size_t i = 0; i < scene.tracks.size(); ++i) {
    const AgentTrack& track = scene.tracks[i];
    const auto n = static_cast<int>(track.samples.size());
    const bool has_inputs = i < scene.true_inputs.size() &&
                            scene.true_inputs[i].size() + 1 == track.samples.size();
    for (int cut = 1; cut + horizon <= n; ++cut) {
      PredictionWindow w;
      w.agent = {track.id, track.cls, track.length, track.width};
      w.cut = cut;
      const int h_begin = std::max(0, cut - history_max);
      w.history.assign(track.samples.begin() + h_begin, track.samples.begin() + cut);
      w.future.assign(track.samples.begin() + cut, track.samples.begin() + cut + horizon);
      if (has_inputs) {
        const auto& inputs = scene.true_inputs[i];
        w.true_future_inputs.assign(inputs.begin() + cut, inputs.begin() + cut + horizon);
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& field, const std::string& what) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw SchemaError("cannot parse " + what + " value: '" + field + "'");
  }
  return value;
}

long parse_long(const std::string& field, const std::string& what) {
  long value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw SchemaError("cannot parse " + what + " value: '" + field + "'");
  }
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

const std::vector<std::string> kTrackColumns = {"track_id", "t",  "x",   "y",     "vx",     "vy",
                                                "ax",       "ay", "psi", "class", "length", "width"};

}  // namespace

Scene load_tracks_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open track file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("track file is empty: " + path);
  const std::vector<std::string> header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const std::string& name : kTrackColumns) {
    if (!col.count(name)) throw SchemaError("missing column: " + name);
  }

  std::map<long, std::size_t> track_index;
  Scene scene;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() < header.size()) {
      throw SchemaError("row " + std::to_string(line_no) + " has too few fields");
    }
    const auto get = [&](const std::string& name) -> const std::string& {
      return fields[col.at(name)];
    };
    const long id = parse_long(get("track_id"), "track_id");
    FeatureRow row;
    row.t = parse_double(get("t"), "t");
    row.x = parse_double(get("x"), "x");
    row.y = parse_double(get("y"), "y");
    row.vx = parse_double(get("vx"), "vx");
    row.vy = parse_double(get("vy"), "vy");
    row.ax = parse_double(get("ax"), "ax");
    row.ay = parse_double(get("ay"), "ay");
    row.psi = parse_double(get("psi"), "psi");
    const AgentClass cls = parse_agent_class(get("class"));
    const double length = parse_double(get("length"), "length");
    const double width = parse_double(get("width"), "width");

    auto it = track_index.find(id);
    if (it == track_index.end()) {
      track_index.emplace(id, scene.tracks.size());
      AgentTrack track;
      track.id = id;
      track.cls = cls;
      track.length = length;
      track.width = width;
      scene.tracks.push_back(std::move(track));
      it = track_index.find(id);
    } else {
      const AgentTrack& track = scene.tracks[it->second];
      if (track.cls != cls || track.length != length || track.width != width) {
        throw SchemaError("track " + std::to_string(id) + " has inconsistent static features");
      }
    }
    scene.tracks[it->second].samples.push_back(row);
  }

  // Timestamps must step uniformly and share one spacing across tracks.
  double common_dt = 0.0;
  for (const AgentTrack& track : scene.tracks) {
    if (track.samples.size() < 2) continue;
    const double dt = track.samples[1].t - track.samples[0].t;
    if (!(dt > 0.0)) {
      throw SchemaError("track " + std::to_string(track.id) + " has non-increasing timestamps");
    }
    for (std::size_t k = 1; k < track.samples.size(); ++k) {
      const double step = track.samples[k].t - track.samples[k - 1].t;
      if (!(step > 0.0)) {
        throw SchemaError("track " + std::to_string(track.id) + " has non-increasing timestamps");
      }
      if (std::abs(step - dt) > kGridTol) {
        throw SchemaError("track " + std::to_string(track.id) + " is not uniformly sampled");
      }
    }
    if (common_dt == 0.0) {
      common_dt = dt;
    } else if (std::abs(common_dt - dt) > kGridTol) {
      throw SchemaError("tracks use different sample spacings");
    }
  }
  if (common_dt > 0.0) scene.ts = common_dt;
  return scene;
}

void write_tracks_csv(const std::string& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < kTrackColumns.size(); ++i) {
    if (i) out << ',';
    out << kTrackColumns[i];
  }
  out << '\n';
  for (const AgentTrack& track : scene.tracks) {
    for (const FeatureRow& row : track.samples) {
      out << track.id << ',' << format_double(row.t) << ',' << format_double(row.x) << ','
          << format_double(row.y) << ',' << format_double(row.vx) << ',' << format_double(row.vy)
          << ',' << format_double(row.ax) << ',' << format_double(row.ay) << ','
          << format_double(row.psi) << ',' << agent_class_name(track.cls) << ','
          << format_double(track.length) << ',' << format_double(track.width) << '\n';
    }
  }
}

void write_inputs_csv(const std::string& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open for writing: " + path);
  out << "track_id,t,u1,u2\n";
  for (std::size_t i = 0; i < scene.true_inputs.size(); ++i) {
    const AgentTrack& track = scene.tracks[i];
    for (std::size_t k = 0; k < scene.true_inputs[i].size(); ++k) {
      const Input& u = scene.true_inputs[i][k];
      out << track.id << ',' << format_double(track.samples[k].t) << ',' << format_double(u[0])
          << ',' << format_double(u[1]) << '\n';
    }
  }
}

void to_json(nlohmann::json& j, const WindowPrediction& wp) {
  j = nlohmann::json{{"agent_id", wp.agent_id}, {"cut", wp.cut}, {"mixture", wp.mixture}};
}

void from_json(const nlohmann::json& j, WindowPrediction& wp) {
  wp.agent_id = j.at("agent_id").get<long>();
  wp.cut = j.at("cut").get<int>();
  wp.mixture = j.at("mixture").get<MixturePrediction>();
}

void to_json(nlohmann::json& j, const PredictionSet& set) {
  j = nlohmann::json{{"ts", set.ts}, {"horizon", set.horizon}, {"windows", set.windows}};
}

void from_json(const nlohmann::json& j, PredictionSet& set) {
  set.ts = j.at("ts").get<double>();
  set.horizon = j.at("horizon").get<int>();
  set.windows = j.at("windows").get<std::vector<WindowPrediction>>();
}

void write_predictions_csv(const std::string& path, const PredictionSet& set) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open for writing: " + path);
  out << "agent_id,cut,component,weight,step,x,y,var_x,cov_xy,var_y\n";
  for (const WindowPrediction& wp : set.windows) {
    for (int j = 0; j < wp.mixture.num_components(); ++j) {
      const MixtureComponent& comp = wp.mixture.components[static_cast<std::size_t>(j)];
      for (std::size_t k = 0; k < comp.means.size(); ++k) {
        const Vec& mu = comp.means[k];
        const Covariance& cov = comp.covs[k];
        out << wp.agent_id << ',' << wp.cut << ',' << j << ','
            << format_double(wp.mixture.weights[j]) << ',' << k << ',' << format_double(mu[0])
            << ',' << format_double(mu[1]) << ',' << format_double(cov(0, 0)) << ','
            << format_double(cov(0, 1)) << ',' << format_double(cov(1, 1)) << '\n';
      }
    }
  }
}

}  // namespace mmpred
