#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlrem/model.hpp"
#include "mlrem/quadrature.hpp"

namespace mlrem::harness {

enum class ExperimentKind {
  trajectory,
  quad_convergence,
  mixing_error,
  final_accuracy,
  scaling,
  fixed_point,
  deviation,
  identities,
  generate,
};

const char* to_string(ExperimentKind kind);

enum class OutputFormat { csv, json };

/// One experiment invocation. snr = +inf ("inf" on the CLI) selects the
/// closed-form population path where one exists (trajectory,
/// quad_convergence, mixing_error) and the sigma = 0 finite-sample path
/// elsewhere.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::identities;
  int d = 2;
  int n = 5000;
  double snr = std::numeric_limits<double>::infinity();
  bool snr_explicit = false;  // set when --snr was passed on the CLI
  int trials = 1;
  std::uint64_t seed = 1;
  double pi1 = 0.5;
  std::optional<double> varphi0;
  std::optional<double> phi0;
  bool random_init = false;
  std::vector<double> eta_grid;
  std::vector<double> n_grid;
  std::string out;
  OutputFormat format = OutputFormat::csv;
  QuadratureSpec quad{};
  int max_iters = 100;

  void validate() const;
  bool snr_infinite() const { return std::isinf(snr); }
  /// Noise level for a unit-norm theta*.
  double sigma() const { return snr_infinite() ? 0.0 : 1.0 / snr; }
  bool has_init() const { return varphi0.has_value() || phi0.has_value() || random_init; }
  /// Initial sub-optimality angle varphi (from either flag).
  double initial_varphi() const;
};

/// Everything needed to reproduce a run bit-exactly.
struct RunManifest {
  std::string version;
  ExperimentConfig config;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> trial_seeds;
  double wall_ms = 0.0;
  std::vector<std::string> outputs;
};

/// Secondary table emitted next to the main output (e.g. the analytic
/// cycloid curve).
struct AuxTable {
  std::string tag;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

/// Tabular result plus pass/fail bookkeeping. exit_code() is 0 iff every
/// in-run assertion passed.
struct CommandResult {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, std::string>> summary;  // key -> value
  std::vector<AuxTable> aux_tables;
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
  RunManifest manifest;

  int exit_code() const { return failures.empty() ? 0 : 1; }
};

CommandResult run_experiment(const ExperimentConfig& cfg);

CommandResult cmd_trajectory(const ExperimentConfig& cfg);
CommandResult cmd_quad_convergence(const ExperimentConfig& cfg);
CommandResult cmd_mixing_error(const ExperimentConfig& cfg);
CommandResult cmd_final_accuracy(const ExperimentConfig& cfg);
CommandResult cmd_scaling(const ExperimentConfig& cfg);
CommandResult cmd_fixed_point(const ExperimentConfig& cfg);
CommandResult cmd_deviation(const ExperimentConfig& cfg);
CommandResult cmd_identities(const ExperimentConfig& cfg);
CommandResult cmd_generate(const ExperimentConfig& cfg);

/// Deterministic per-trial seed derivation (recorded in the manifest).
std::uint64_t trial_seed(std::uint64_t master_seed, int trial);

/// Ground truth used by the experiment drivers: unit-norm theta*
/// ((1,0) for d = 2, a seed-derived unit vector otherwise), weights from
/// pi1, sigma from the SNR.
GroundTruth experiment_ground_truth(const ExperimentConfig& cfg);

/// Thread cap: min(trials, MLR_EM_THREADS or hardware concurrency).
int resolve_threads(int trials);

/// Runs fn(trial) for trial in [0, trials) across the resolved threads.
/// Exceptions are rethrown on the caller thread.
void parallel_trials(int trials, const std::function<void(int)>& fn);

/// Schema of the JSON output document (published, stable).
const char* output_schema_json();

/// Structural validation of a serialized JSON output against the schema.
bool validate_output_json(const std::string& text, std::string* error = nullptr);

/// Writes result tables + manifest; returns the written paths.
std::vector<std::string> write_outputs(const ExperimentConfig& cfg, CommandResult& result);

}  // namespace mlrem::harness
