#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "experiments.hpp"
#include "mlrem/io.hpp"
#include "mlrem/model.hpp"

using namespace mlrem;
using namespace mlrem::harness;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void cleanup(const std::vector<std::string>& paths) {
  for (const auto& p : paths) std::remove(p.c_str());
}

}  // namespace

TEST_CASE("config validation") {
  ExperimentConfig cfg;
  cfg.trials = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.trials = 1;
  cfg.varphi0 = 0.3;
  cfg.random_init = true;  // two init specs at once
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.random_init = false;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.initial_varphi() == 0.3);
  cfg.varphi0.reset();
  cfg.phi0 = M_PI - 0.6;
  CHECK(cfg.initial_varphi() == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("population trajectory stays on the cycloid") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::trajectory;
  cfg.d = 2;
  cfg.trials = 3;
  cfg.seed = 11;
  cfg.pi1 = 0.7;
  cfg.varphi0 = 0.25;
  cfg.max_iters = 40;
  const CommandResult r = cmd_trajectory(cfg);
  CHECK(r.failures.empty());
  CHECK_FALSE(r.rows.empty());
  for (const auto& row : r.rows) CHECK(row[4] <= 1e-10);
  // aux cycloid table: both signs, 2000 points
  REQUIRE(r.aux_tables.size() == 1);
  CHECK(r.aux_tables[0].rows.size() == 2000);
}

TEST_CASE("trajectory runs are reproducible byte for byte") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::trajectory;
  cfg.d = 2;
  cfg.n = 500;
  cfg.snr = 1e6;
  cfg.snr_explicit = true;
  cfg.trials = 2;
  cfg.seed = 5;
  cfg.pi1 = 0.7;
  cfg.random_init = true;
  cfg.max_iters = 15;
  cfg.out = "/tmp/mlrem_h_traj.csv";
  const CommandResult a = run_experiment(cfg);
  const std::string first = slurp(cfg.out);
  const CommandResult b = run_experiment(cfg);
  CHECK(slurp(cfg.out) == first);
  CHECK(a.manifest.trial_seeds == b.manifest.trial_seeds);
  CHECK(a.manifest.trial_seeds.size() == 2);
  CHECK(slurp(cfg.out + ".manifest.json").find("\"master_seed\": 5") != std::string::npos);
  cleanup(b.manifest.outputs);
}

TEST_CASE("single-thread and multi-thread runs agree") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::mixing_error;
  cfg.d = 5;
  cfg.n = 400;
  cfg.snr = 1e6;
  cfg.snr_explicit = true;
  cfg.trials = 6;
  cfg.seed = 3;
  cfg.pi1 = 0.8;
  cfg.varphi0 = 0.3;
  cfg.max_iters = 6;

  setenv("MLR_EM_THREADS", "1", 1);
  const CommandResult serial = cmd_mixing_error(cfg);
  setenv("MLR_EM_THREADS", "4", 1);
  const CommandResult parallel = cmd_mixing_error(cfg);
  unsetenv("MLR_EM_THREADS");
  REQUIRE(serial.rows.size() == parallel.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    CHECK(serial.rows[i] == parallel.rows[i]);
  }
}

TEST_CASE("population quad_convergence slope is 2") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::quad_convergence;
  cfg.trials = 50;
  cfg.phi0 = 1.4;
  const CommandResult r = cmd_quad_convergence(cfg);
  REQUIRE(r.failures.empty());
  double slope = 0.0;
  for (const auto& [k, v] : r.summary) {
    if (k == "slope") slope = std::stod(v);
  }
  CHECK(slope == doctest::Approx(2.0).epsilon(0.025));
}

TEST_CASE("quad_convergence flags a trivially converged start") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::quad_convergence;
  cfg.phi0 = 0.0;
  const CommandResult r = cmd_quad_convergence(cfg);
  CHECK(r.exit_code() == 0);
  bool flagged = false;
  for (const auto& [k, v] : r.summary) flagged = flagged || (k == "trivially_converged");
  CHECK(flagged);
}

TEST_CASE("population mixing_error slope equals the prediction exactly") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::mixing_error;
  cfg.pi1 = 0.8;
  cfg.trials = 4;
  cfg.seed = 9;
  cfg.varphi0 = 0.3;
  cfg.max_iters = 30;
  const CommandResult r = cmd_mixing_error(cfg);
  CHECK(r.failures.empty());
  double fitted = 0.0, predicted = -1.0;
  for (const auto& [k, v] : r.summary) {
    if (k == "fitted_slope") fitted = std::stod(v);
    if (k == "predicted_slope") predicted = std::stod(v);
  }
  CHECK(predicted == doctest::Approx(0.6 / M_PI).epsilon(1e-12));
  CHECK(std::abs(fitted - predicted) <= 1e-12);
}

TEST_CASE("balanced mixing_error stays at the noise level") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::mixing_error;
  cfg.pi1 = 0.5;
  cfg.trials = 3;
  cfg.seed = 21;
  cfg.varphi0 = 0.4;
  cfg.max_iters = 10;
  const CommandResult r = cmd_mixing_error(cfg);
  CHECK(r.failures.empty());  // every weight error within the noise bound
}

TEST_CASE("fixed_point table respects the bounds") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::fixed_point;
  cfg.eta_grid = {1e-3, 1.0, 1e3};
  const CommandResult r = cmd_fixed_point(cfg);
  CHECK(r.failures.empty());
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0][1] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(2e-3));
  CHECK(r.rows[2][1] == doctest::Approx(2.0 / M_PI).epsilon(2e-3));
}

TEST_CASE("deviation exponent is -2") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::deviation;
  cfg.eta_grid = {10.0, 100.0, 1000.0, 10000.0};
  const CommandResult r = cmd_deviation(cfg);
  CHECK(r.failures.empty());
  double exponent = 0.0;
  for (const auto& [k, v] : r.summary) {
    if (k == "exponent") exponent = std::stod(v);
  }
  CHECK(exponent == doctest::Approx(-2.0).epsilon(0.25));
  CHECK_THROWS_AS(
      [] {
        ExperimentConfig bad;
        bad.experiment = ExperimentKind::deviation;
        bad.eta_grid = {10.0};
        bad.pi1 = 0.7;
        cmd_deviation(bad);
      }(),
      std::invalid_argument);
}

TEST_CASE("deviation records a regime warning for tiny eta") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::deviation;
  cfg.eta_grid = {2.0, 100.0, 1000.0};
  const CommandResult r = cmd_deviation(cfg);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("identities pass by default and skip nll checks at sigma = 0") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::identities;
  const CommandResult r = cmd_identities(cfg);
  CHECK(r.exit_code() == 0);
  bool ran_gradient = false;
  for (const auto& [k, v] : r.summary) {
    if (k == "gradient_identity_max_r_theta") ran_gradient = true;
  }
  CHECK(ran_gradient);

  ExperimentConfig noiseless = cfg;
  noiseless.snr_explicit = true;  // --snr inf
  const CommandResult r0 = cmd_identities(noiseless);
  CHECK(r0.exit_code() == 0);
  bool skipped = false;
  for (const auto& [k, v] : r0.summary) {
    if (k == "gradient_identity" && v.rfind("skipped", 0) == 0) skipped = true;
  }
  CHECK(skipped);
}

TEST_CASE("generate writes a loadable dataset") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::generate;
  cfg.d = 3;
  cfg.n = 25;
  cfg.snr = 10.0;
  cfg.snr_explicit = true;
  cfg.pi1 = 0.6;
  cfg.seed = 77;
  cfg.out = "/tmp/mlrem_h_gen.csv";
  const CommandResult r = run_experiment(cfg);
  CHECK(r.exit_code() == 0);
  const LoadedDataset back = load_dataset_csv(cfg.out);
  CHECK(back.dataset.n() == 25);
  CHECK(back.dataset.d() == 3);
  CHECK(back.ground_truth.sigma == doctest::Approx(0.1).epsilon(1e-12));
  cleanup({cfg.out, cfg.out + ".manifest.json"});
}

TEST_CASE("json output validates against the published schema") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::fixed_point;
  cfg.eta_grid = {1.0};
  cfg.out = "/tmp/mlrem_h_fp.json";
  cfg.format = OutputFormat::json;
  const CommandResult r = run_experiment(cfg);
  CHECK(r.exit_code() == 0);
  std::string err;
  CHECK(validate_output_json(slurp(cfg.out), &err));
  CHECK(err.empty());
  CHECK_FALSE(validate_output_json("{\"experiment\": 3}", &err));
  CHECK_FALSE(err.empty());
  CHECK(std::string(output_schema_json()).find("\"rows\"") != std::string::npos);
  cleanup(r.manifest.outputs);
}

TEST_CASE("scaling validates its grid") {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::scaling;
  cfg.d = 10;
  cfg.varphi0 = 0.3;
  cfg.n_grid = {1000.0, 2000.0};
  CHECK_THROWS_AS(cmd_scaling(cfg), std::invalid_argument);  // too few points
  cfg.n_grid = {1000.0, 2000.0, 4000.0};
  CHECK_THROWS_AS(cmd_scaling(cfg), std::invalid_argument);  // < 1.5 decades
  cfg.n_grid = {5.0, 100.0, 1000.0};
  CHECK_THROWS_AS(cmd_scaling(cfg), std::invalid_argument);  // n < d
}
