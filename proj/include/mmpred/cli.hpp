#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmpred/predictor.hpp"
#include "mmpred/solvers.hpp"

namespace mmpred {

/// Everything a command needs, merged from the JSON config file and flag
/// overrides. Fields irrelevant to a given subcommand are ignored by it.
struct ExperimentConfig {
  std::optional<std::string> scene_csv;
  nlohmann::json scenario;  // synthetic params with a "type" tag, or null

  std::string model = "2xi";
  SolverSpec solver;
  double ts = 0.2;
  int horizon = 25;
  int history_max = 15;

  int mixture_size = 3;
  GeneratorShape generator;
  FitConfig fit;
  double initial_variance = 0.25;
  std::optional<int> cut_filter;  // keep only windows at this cut index
  std::string baseline;           // "", "cv", or "ca" (predict)
  std::optional<std::string> params_file;

  std::vector<std::string> models = {"2xi"};  // benchmark sweep
  std::vector<std::string> solvers = {"euler", "heun", "rk3", "rk4", "rk45", "adams"};
  int steps = 25;    // benchmark rollout length
  int repeats = 5;   // benchmark timing repetitions

  std::optional<std::string> predictions_path;  // evaluate
  std::optional<std::string> truth_path;        // evaluate

  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int jobs = 1;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

/// Checks referenced paths exist and basic ranges (ts > 0, M >= 1, ...).
void validate(const ExperimentConfig& cfg);

/// Entry point behind the executable; returns the process exit code
/// (0 success, 2 usage/config error, 3 numeric failure).
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace mmpred
