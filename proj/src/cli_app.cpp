#include "mmpred/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "mmpred/metrics.hpp"
#include "mmpred/scenarios.hpp"

namespace mmpred {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
  j = nlohmann::json::object();
  if (cfg.scene_csv) j["scene_csv"] = *cfg.scene_csv;
  if (!cfg.scenario.is_null()) j["scenario"] = cfg.scenario;
  j["model"] = cfg.model;
  j["solver"] = cfg.solver;
  j["ts"] = cfg.ts;
  j["horizon"] = cfg.horizon;
  j["history_max"] = cfg.history_max;
  j["mixture_size"] = cfg.mixture_size;
  j["generator"] = cfg.generator;
  j["fit"] = cfg.fit;
  j["initial_variance"] = cfg.initial_variance;
  if (cfg.cut_filter) j["cut_filter"] = *cfg.cut_filter;
  if (!cfg.baseline.empty()) j["baseline"] = cfg.baseline;
  if (cfg.params_file) j["params_file"] = *cfg.params_file;
  j["models"] = cfg.models;
  j["solvers"] = cfg.solvers;
  j["steps"] = cfg.steps;
  j["repeats"] = cfg.repeats;
  if (cfg.predictions_path) j["predictions"] = *cfg.predictions_path;
  if (cfg.truth_path) j["truth"] = *cfg.truth_path;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["jobs"] = cfg.jobs;
}

void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  ExperimentConfig defaults;
  if (j.contains("scene_csv")) cfg.scene_csv = j.at("scene_csv").get<std::string>();
  cfg.scenario = j.value("scenario", nlohmann::json());
  cfg.model = j.value("model", defaults.model);
  cfg.solver = j.value("solver", defaults.solver);
  cfg.ts = j.value("ts", defaults.ts);
  cfg.horizon = j.value("horizon", defaults.horizon);
  cfg.history_max = j.value("history_max", defaults.history_max);
  cfg.mixture_size = j.value("mixture_size", defaults.mixture_size);
  cfg.generator = j.value("generator", defaults.generator);
  cfg.fit = j.value("fit", defaults.fit);
  cfg.initial_variance = j.value("initial_variance", defaults.initial_variance);
  if (j.contains("cut_filter")) cfg.cut_filter = j.at("cut_filter").get<int>();
  cfg.baseline = j.value("baseline", defaults.baseline);
  if (j.contains("params_file")) cfg.params_file = j.at("params_file").get<std::string>();
  cfg.models = j.value("models", defaults.models);
  cfg.solvers = j.value("solvers", defaults.solvers);
  cfg.steps = j.value("steps", defaults.steps);
  cfg.repeats = j.value("repeats", defaults.repeats);
  if (j.contains("predictions")) cfg.predictions_path = j.at("predictions").get<std::string>();
  if (j.contains("truth")) cfg.truth_path = j.at("truth").get<std::string>();
  cfg.seed = j.value("seed", defaults.seed);
  cfg.out_dir = j.value("out_dir", defaults.out_dir);
  cfg.jobs = j.value("jobs", defaults.jobs);
  // One sampling period drives the whole experiment.
  cfg.fit.ts = cfg.ts;
}

void validate(const ExperimentConfig& cfg) {
  if (!(cfg.ts > 0.0)) throw SchemaError("config: ts must be positive");
  if (cfg.horizon < 1) throw SchemaError("config: horizon must be at least 1");
  if (cfg.history_max < 1) throw SchemaError("config: history_max must be at least 1");
  if (cfg.mixture_size < 1) throw SchemaError("config: mixture_size must be at least 1");
  if (cfg.jobs < 1) throw SchemaError("config: jobs must be at least 1");
  if (cfg.steps < 1) throw SchemaError("config: steps must be at least 1");
  if (cfg.repeats < 1) throw SchemaError("config: repeats must be at least 1");
  if (!(cfg.initial_variance >= 0.0)) {
    throw SchemaError("config: initial_variance must be non-negative");
  }
  if (!cfg.baseline.empty() && cfg.baseline != "cv" && cfg.baseline != "ca") {
    throw SchemaError("config: baseline must be cv or ca");
  }
  for (const std::string* path :
       {cfg.scene_csv ? &*cfg.scene_csv : nullptr, cfg.params_file ? &*cfg.params_file : nullptr,
        cfg.predictions_path ? &*cfg.predictions_path : nullptr,
        cfg.truth_path ? &*cfg.truth_path : nullptr}) {
    if (path && !fs::exists(*path)) throw SchemaError("config: missing file: " + *path);
  }
  validate(cfg.solver);
  parse_model_kind(cfg.model);
  for (const std::string& name : cfg.models) parse_model_kind(name);
  for (const std::string& name : cfg.solvers) parse_solver_kind(name);
}

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("cannot parse " + path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = cfg;
  write_json_file((fs::path(cfg.out_dir) / "manifest.json").string(), j);
}

Scene scene_from_config(const ExperimentConfig& cfg) {
  if (cfg.scene_csv) return load_tracks_csv(*cfg.scene_csv);
  if (cfg.scenario.is_object() && cfg.scenario.contains("type")) {
    nlohmann::json params = cfg.scenario;
    if (!params.contains("seed")) params["seed"] = cfg.seed;
    const auto type = params.at("type").get<std::string>();
    if (type == "highway") return synth_highway(params.get<HighwayParams>());
    if (type == "roundabout") return synth_roundabout(params.get<RoundaboutParams>());
    throw SchemaError("unknown scenario type: " + type);
  }
  throw SchemaError("config needs either scene_csv or a scenario block");
}

/// Runs fn(0..n-1) on up to `jobs` threads; results must be written into
/// per-index slots by the caller so output order stays deterministic.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<PredictionWindow> windows_from_scene(const ExperimentConfig& cfg, const Scene& scene) {
  std::vector<PredictionWindow> windows = make_windows(scene, cfg.history_max, cfg.horizon);
  if (cfg.cut_filter) {
    std::erase_if(windows, [&](const PredictionWindow& w) { return w.cut != *cfg.cut_filter; });
  }
  if (windows.empty()) throw SchemaError("scene yields no prediction windows");
  return windows;
}

void write_loss_trace(const std::string& path, const std::vector<double>& trace) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot open for writing: " + path);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << i << ',' << format_double(trace[i]) << '\n';
  }
}

nlohmann::json fitted_params_json(const ExperimentConfig& cfg, const MixtureParams& params) {
  return nlohmann::json{
      {"model", cfg.model}, {"solver", cfg.solver}, {"seed", cfg.seed}, {"mixture", params}};
}

int cmd_simulate(const ExperimentConfig& cfg) {
  const Scene scene = scene_from_config(cfg);
  fs::create_directories(cfg.out_dir);
  write_tracks_csv((fs::path(cfg.out_dir) / "scene.csv").string(), scene);
  if (!scene.true_inputs.empty()) {
    write_inputs_csv((fs::path(cfg.out_dir) / "inputs.csv").string(), scene);
  }
  write_manifest(cfg, "simulate");
  return 0;
}

MixtureParams run_fit(const ExperimentConfig& cfg, const ModelSpec& model,
                      const std::vector<PredictionWindow>& windows,
                      std::vector<double>* trace_out) {
  std::vector<TrainingWindow> training;
  training.reserve(windows.size());
  for (const PredictionWindow& w : windows) {
    training.push_back(make_training_window(model.kind, w, cfg.initial_variance));
  }
  const MixtureParams init =
      init_mixture_params(cfg.generator, cfg.mixture_size, cfg.horizon, cfg.seed);
  FitResult result = fit_mixture(model, cfg.solver, init, training, cfg.fit);
  if (trace_out) *trace_out = std::move(result.loss_trace);
  return std::move(result.params);
}

int cmd_fit(const ExperimentConfig& cfg) {
  const Scene scene = scene_from_config(cfg);
  const ModelSpec model = make_model(parse_model_kind(cfg.model), cfg.seed);
  const std::vector<PredictionWindow> windows = windows_from_scene(cfg, scene);
  std::vector<double> trace;
  const MixtureParams fitted = run_fit(cfg, model, windows, &trace);
  fs::create_directories(cfg.out_dir);
  write_json_file((fs::path(cfg.out_dir) / "fitted_params.json").string(),
                  fitted_params_json(cfg, fitted));
  write_loss_trace((fs::path(cfg.out_dir) / "loss_trace.csv").string(), trace);
  write_manifest(cfg, "fit");
  return 0;
}

int cmd_predict(const ExperimentConfig& cfg) {
  const Scene scene = scene_from_config(cfg);
  const std::vector<PredictionWindow> windows = windows_from_scene(cfg, scene);
  fs::create_directories(cfg.out_dir);

  PredictionSet set;
  set.ts = cfg.ts;
  set.horizon = cfg.horizon;
  set.windows.resize(windows.size());

  if (!cfg.baseline.empty()) {
    const bool use_ca = cfg.baseline == "ca";
    parallel_for(static_cast<int>(windows.size()), cfg.jobs, [&](int i) {
      const PredictionWindow& w = windows[static_cast<std::size_t>(i)];
      const Rollout r = use_ca ? ca_baseline(w.history, cfg.horizon, cfg.ts)
                               : cv_baseline(w.history, cfg.horizon, cfg.ts);
      set.windows[static_cast<std::size_t>(i)] = {w.agent.id, w.cut, mixture_from_rollout(r)};
    });
  } else {
    const ModelSpec model = make_model(parse_model_kind(cfg.model), cfg.seed);
    MixtureParams params;
    if (cfg.params_file) {
      params = read_json_file(*cfg.params_file).at("mixture").get<MixtureParams>();
    } else {
      std::vector<double> trace;
      params = run_fit(cfg, model, windows, &trace);
      write_json_file((fs::path(cfg.out_dir) / "fitted_params.json").string(),
                      fitted_params_json(cfg, params));
      write_loss_trace((fs::path(cfg.out_dir) / "loss_trace.csv").string(), trace);
    }
    parallel_for(static_cast<int>(windows.size()), cfg.jobs, [&](int i) {
      const PredictionWindow& w = windows[static_cast<std::size_t>(i)];
      const BeliefState belief0 =
          make_training_window(model.kind, w, cfg.initial_variance).belief0;
      set.windows[static_cast<std::size_t>(i)] = {
          w.agent.id, w.cut,
          predict_from_params(model, cfg.solver, params, belief0, cfg.horizon, cfg.ts)};
    });
  }

  write_json_file((fs::path(cfg.out_dir) / "predictions.json").string(), set);
  write_predictions_csv((fs::path(cfg.out_dir) / "predictions.csv").string(), set);
  write_manifest(cfg, "predict");
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg) {
  if (!cfg.predictions_path || !cfg.truth_path) {
    throw SchemaError("evaluate needs --predictions and --truth");
  }
  const PredictionSet set = read_json_file(*cfg.predictions_path).get<PredictionSet>();
  const Scene truth = load_tracks_csv(*cfg.truth_path);

  std::map<long, const AgentTrack*> by_id;
  for (const AgentTrack& track : truth.tracks) by_id[track.id] = &track;

  std::vector<long> orphans;
  for (const WindowPrediction& wp : set.windows) {
    if (!by_id.count(wp.agent_id)) orphans.push_back(wp.agent_id);
  }
  if (!orphans.empty()) {
    std::sort(orphans.begin(), orphans.end());
    orphans.erase(std::unique(orphans.begin(), orphans.end()), orphans.end());
    std::ostringstream msg;
    msg << "predictions reference track ids missing from the truth:";
    for (long id : orphans) msg << ' ' << id;
    throw SchemaError(msg.str());
  }

  std::vector<MetricReport> reports(set.windows.size());
  parallel_for(static_cast<int>(set.windows.size()), cfg.jobs, [&](int i) {
    const WindowPrediction& wp = set.windows[static_cast<std::size_t>(i)];
    const AgentTrack& track = *by_id.at(wp.agent_id);
    if (wp.cut < 0 ||
        static_cast<std::size_t>(wp.cut) + static_cast<std::size_t>(set.horizon) >
            track.samples.size()) {
      throw SchemaError("prediction window exceeds track " + std::to_string(wp.agent_id));
    }
    std::vector<Vec2> truth_positions;
    truth_positions.reserve(static_cast<std::size_t>(set.horizon));
    for (int k = 0; k < set.horizon; ++k) {
      const FeatureRow& row = track.samples[static_cast<std::size_t>(wp.cut + k)];
      truth_positions.push_back(Vec2(row.x, row.y));
    }
    reports[static_cast<std::size_t>(i)] = evaluate_window(wp.mixture, truth_positions);
  });

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "metrics.csv");
    if (!out) throw SchemaError("cannot open metrics.csv for writing");
    out << "agent_id,cut,ade,fde,mr,apde,anll,fnll\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const WindowPrediction& wp = set.windows[i];
      const MetricReport& r = reports[i];
      out << wp.agent_id << ',' << wp.cut << ',' << format_double(r.ade) << ','
          << format_double(r.fde) << ',' << format_double(r.mr) << ',' << format_double(r.apde)
          << ',' << format_double(r.anll) << ',' << format_double(r.fnll) << '\n';
    }
  }
  write_json_file((fs::path(cfg.out_dir) / "summary.json").string(),
                  nlohmann::json(aggregate(reports)));
  write_manifest(cfg, "evaluate");
  return 0;
}

int cmd_convergence(const ExperimentConfig& cfg) {
  const std::vector<OrderStudySeries> series = solver_order_study();
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "order_study.csv");
    if (!out) throw SchemaError("cannot open order_study.csv for writing");
    out << "solver,h,error\n";
    for (const OrderStudySeries& s : series) {
      for (std::size_t i = 0; i < s.hs.size(); ++i) {
        out << solver_kind_name(s.solver) << ',' << format_double(s.hs[i]) << ','
            << format_double(s.errors[i]) << '\n';
      }
    }
  }
  nlohmann::json slopes = nlohmann::json::object();
  for (const OrderStudySeries& s : series) slopes[solver_kind_name(s.solver)] = s.slope;
  write_json_file((fs::path(cfg.out_dir) / "orders.json").string(),
                  nlohmann::json{{"slopes", slopes}});
  write_manifest(cfg, "convergence");
  return 0;
}

int cmd_benchmark(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);

  FeatureRow start;
  start.vx = 10.0;  // generic forward motion for every state layout
  const Input u(0.05, 0.1);

  std::ofstream fevals_out(fs::path(cfg.out_dir) / "fevals.csv");
  if (!fevals_out) throw SchemaError("cannot open fevals.csv for writing");
  fevals_out << "model,solver,steps,fevals\n";
  nlohmann::json timing_entries = nlohmann::json::array();

  for (const std::string& model_name : cfg.models) {
    const ModelSpec model = make_model(parse_model_kind(model_name), cfg.seed);
    const Vec x0 = state_from_row(model.kind, start);
    const std::vector<Input> inputs(static_cast<std::size_t>(cfg.steps), u);
    for (const std::string& solver_name : cfg.solvers) {
      SolverSpec solver = cfg.solver;
      solver.kind = parse_solver_kind(solver_name);
      FevalCounter counter;
      integrate(solver, model, x0, inputs, cfg.ts, &counter);

      std::vector<double> seconds(static_cast<std::size_t>(cfg.repeats));
      for (int r = 0; r < cfg.repeats; ++r) {
        const auto begin = std::chrono::steady_clock::now();
        integrate(solver, model, x0, inputs, cfg.ts);
        const auto end = std::chrono::steady_clock::now();
        seconds[static_cast<std::size_t>(r)] =
            std::chrono::duration<double>(end - begin).count();
      }
      std::sort(seconds.begin(), seconds.end());
      const double median = seconds[seconds.size() / 2];

      fevals_out << model_name << ',' << solver_name << ',' << cfg.steps << ','
                 << counter.count << '\n';
      timing_entries.push_back(nlohmann::json{
          {"model", model_name}, {"solver", solver_name}, {"median_seconds", median}});
    }
  }
  fevals_out.close();
  // Timing lives in its own file: wall-clock varies run to run, the feval
  // table and manifest must not.
  write_json_file((fs::path(cfg.out_dir) / "timing.json").string(),
                  nlohmann::json{{"entries", timing_entries}});
  write_manifest(cfg, "benchmark");
  return 0;
}

struct FlagOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> solver;
  std::optional<std::string> model;
  std::optional<double> h;
  std::optional<double> rtol;
  std::optional<double> atol;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
  std::optional<std::string> predictions;
  std::optional<std::string> truth;
};

ExperimentConfig resolve_config(const FlagOverrides& flags) {
  nlohmann::json j = nlohmann::json::object();
  if (!flags.config_path.empty()) j = read_json_file(flags.config_path);
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.solver) cfg.solver.kind = parse_solver_kind(*flags.solver);
  if (flags.model) cfg.model = *flags.model;
  if (flags.h) cfg.solver.h = *flags.h;
  if (flags.rtol) cfg.solver.rtol = *flags.rtol;
  if (flags.atol) cfg.solver.atol = *flags.atol;
  if (flags.jobs) cfg.jobs = *flags.jobs;
  if (flags.out_dir) cfg.out_dir = *flags.out_dir;
  if (flags.predictions) cfg.predictions_path = *flags.predictions;
  if (flags.truth) cfg.truth_path = *flags.truth;
  validate(cfg);
  return cfg;
}

void add_common_flags(CLI::App* cmd, FlagOverrides& flags) {
  cmd->add_option("--config", flags.config_path, "JSON experiment config");
  cmd->add_option("--seed", flags.seed, "override the RNG seed");
  cmd->add_option("--solver", flags.solver, "override the solver (euler|heun|rk3|rk4|rk45|adams)");
  cmd->add_option("--model", flags.model, "override the motion model");
  cmd->add_option("--h", flags.h, "override the fixed step size");
  cmd->add_option("--rtol", flags.rtol, "override the adaptive relative tolerance");
  cmd->add_option("--atol", flags.atol, "override the adaptive absolute tolerance");
  cmd->add_option("--jobs", flags.jobs, "worker threads for per-window work");
  cmd->add_option("--out", flags.out_dir, "output directory");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Motion-model trajectory prediction toolkit"};
  // Long-only help so the step-size flag can keep its conventional name --h.
  app.set_help_flag("--help", "print help and exit");
  app.require_subcommand(1);

  FlagOverrides flags;
  int (*handler)(const ExperimentConfig&) = nullptr;

  const auto install = [&](const std::string& name, const std::string& help,
                           int (*fn)(const ExperimentConfig&)) {
    CLI::App* cmd = app.add_subcommand(name, help);
    cmd->set_help_flag("--help", "print help and exit");
    add_common_flags(cmd, flags);
    if (name == "evaluate") {
      cmd->add_option("--predictions", flags.predictions, "predictions JSON from `predict`");
      cmd->add_option("--truth", flags.truth, "ground-truth tracks CSV");
    }
    cmd->callback([&handler, fn] { handler = fn; });
    return cmd;
  };

  install("simulate", "write a synthetic scene to CSV", &cmd_simulate);
  install("predict", "forecast every window of a scene", &cmd_predict);
  install("evaluate", "score predictions against truth", &cmd_evaluate);
  install("fit", "fit mixture generators to a scene", &cmd_fit);
  install("convergence", "solver order study table", &cmd_convergence);
  install("benchmark", "solver/model timing and feval counts", &cmd_benchmark);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  try {
    const ExperimentConfig cfg = resolve_config(flags);
    return handler(cfg);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mmpred
