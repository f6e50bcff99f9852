#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mmpred/mixture.hpp"
#include "mmpred/models.hpp"
#include "mmpred/types.hpp"

namespace mmpred {

enum class AgentClass { Motorcycle, Automobile, Truck };

const char* agent_class_name(AgentClass cls);
AgentClass parse_agent_class(const std::string& name);
Eigen::Vector3d one_hot(AgentClass cls);

/// One time sample of an agent: pose, velocity, acceleration, heading, and an
/// optional road-context pair ((d_l, d_r) on lanes, (r, theta) on arcs).
struct FeatureRow {
  double t = 0.0;
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  double ax = 0.0, ay = 0.0;
  double psi = 0.0;
  std::optional<Vec2> context;
};

struct AgentTrack {
  long id = 0;
  AgentClass cls = AgentClass::Automobile;
  double length = 4.5;
  double width = 1.8;
  std::vector<FeatureRow> samples;  // time-ordered, uniform spacing
};

/// A set of tracks on one uniform sampling grid. For synthetic scenes,
/// true_inputs[i][k] is the generating model input held over
/// [t_k, t_{k+1}) for track i (size = samples - 1); empty when unknown.
struct Scene {
  double ts = 0.2;
  std::vector<AgentTrack> tracks;
  std::vector<std::vector<Input>> true_inputs;
  std::optional<ModelKind> input_model;
};

struct AgentMeta {
  long id = 0;
  AgentClass cls = AgentClass::Automobile;
  double length = 4.5;
  double width = 1.8;
};

/// A prediction instance: up to 15 history rows (most recent last) and
/// exactly `horizon` future rows starting at sample index `cut`.
struct PredictionWindow {
  AgentMeta agent;
  int cut = 0;
  std::vector<FeatureRow> history;
  std::vector<FeatureRow> future;
  std::vector<Input> true_future_inputs;  // empty when the scene has none
};

// --- context features -------------------------------------------------------

/// Scaled lateral lane position: -1 at the left divider, +1 one lane width to
/// the right of it, 0 at the lane center.
double lane_context(double y_local, double lane_left_y, double lane_width);

struct PolarContext {
  double r = 0.0;
  double theta = 0.0;
};

/// Range and bearing relative to the scene origin, with theta defined as 0
/// when r is 0.
PolarContext polar_context(double x, double y, double x0, double y0);

// --- synthetic scenes -------------------------------------------------------

struct HighwayParams {
  int lanes = 3;
  double lane_width = 3.5;
  std::vector<double> speeds;     // per lane; empty selects 25 + 2*lane m/s
  double duration = 13.0;         // seconds of track
  double ts = 0.2;
  int change_agent = 0;           // lane index performing the change; -1 for none
  double change_start = 2.0;      // seconds into the scene
  double change_duration = 4.0;   // seconds
  double change_lateral = 3.5;    // signed lateral displacement, meters
  double start_jitter = 0.0;      // longitudinal start offset amplitude, meters
  std::uint64_t seed = 0;
};

struct RoundaboutParams {
  double radius = 10.0;
  double entry_speed = 8.0;   // m/s on approach
  double arc_speed = 6.0;     // m/s on the circle
  int decel_steps = 5;        // uniform braking from entry to arc speed
  int entry_steps = 10;       // straight approach samples before the arc
  int arc_steps = 26;         // constant-turn-rate samples
  int exit_steps = 10;        // straight samples after the arc
  double ts = 0.2;
  std::vector<int> turn_directions = {1, -1};  // +1 left exit, -1 right exit
  double speed_jitter = 0.0;  // +-amplitude added per agent, m/s
  bool origin_at_first_center = true;
  std::uint64_t seed = 0;
};

void validate(const HighwayParams& params);
void validate(const RoundaboutParams& params);

void to_json(nlohmann::json& j, const HighwayParams& params);
void from_json(const nlohmann::json& j, HighwayParams& params);
void to_json(nlohmann::json& j, const RoundaboutParams& params);
void from_json(const nlohmann::json& j, RoundaboutParams& params);

/// Quintic lane-change profile q(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5 on
/// [0, 1], clamped to {0, 1} outside; rest-to-rest in offset, rate, and
/// acceleration at both ends.
double lane_change_offset(double tau);
double lane_change_offset_rate(double tau);   // dq/dtau
double lane_change_offset_accel(double tau);  // d2q/dtau2

/// Straight lanes of constant-speed agents; at most one agent blends across
/// to an adjacent lane on the quintic profile. Double-integrator inputs
/// (a_x, a_y) are recorded per interval at interval midpoints.
Scene synth_highway(const HighwayParams& params);

/// Straight approach with braking, a constant-turn-rate circular arc, and a
/// straight exit, sampled from closed forms so the arc lies on an exact
/// circle. Unicycle inputs (turn rate, acceleration) are recorded per
/// interval and hold exactly over each interval.
Scene synth_roundabout(const RoundaboutParams& params);

// --- windowing / down-sampling ---------------------------------------------

AgentTrack downsample(const AgentTrack& track, int factor = 5);

/// Keeps every factor-th sample from index 0. Any recorded true inputs are
/// dropped unless factor == 1, since held inputs are not well defined on the
/// coarser grid.
Scene downsample(const Scene& scene, int factor = 5);

/// Sliding windows with stride 1: every cut c with at least one history
/// sample (c >= 1) and a full future (c + horizon <= track length). History
/// keeps the most recent history_max rows.
std::vector<PredictionWindow> make_windows(const Scene& scene, int history_max = 15,
                                           int horizon = 25);

// --- CSV / JSON I/O ---------------------------------------------------------

/// Shortest round-trip decimal formatting (std::to_chars).
std::string format_double(double value);

/// Columns: track_id,t,x,y,vx,vy,ax,ay,psi,class,length,width.
/// Columns are located by header name; a missing column raises SchemaError
/// naming it. Timestamps must be strictly increasing and uniformly spaced
/// per track, with one common spacing across the scene.
Scene load_tracks_csv(const std::string& path);
void write_tracks_csv(const std::string& path, const Scene& scene);

/// Columns: track_id,t,u1,u2 — the recorded per-interval inputs.
void write_inputs_csv(const std::string& path, const Scene& scene);

/// One mixture forecast attached to its window identity.
struct WindowPrediction {
  long agent_id = 0;
  int cut = 0;
  MixturePrediction mixture;
};

struct PredictionSet {
  double ts = 0.2;
  int horizon = 25;
  std::vector<WindowPrediction> windows;
};

void to_json(nlohmann::json& j, const WindowPrediction& wp);
void from_json(const nlohmann::json& j, WindowPrediction& wp);
void to_json(nlohmann::json& j, const PredictionSet& set);
void from_json(const nlohmann::json& j, PredictionSet& set);

/// Columns: agent_id,cut,component,weight,step,x,y,var_x,cov_xy,var_y —
/// the position marginal of every component at every step.
void write_predictions_csv(const std::string& path, const PredictionSet& set);

}  // namespace mmpred
