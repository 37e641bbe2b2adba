#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "experiments.hpp"
#include "mlrem/version.hpp"

namespace {

using mlrem::harness::CommandResult;
using mlrem::harness::ExperimentConfig;
using mlrem::harness::ExperimentKind;
using mlrem::harness::OutputFormat;

void print_result(const ExperimentConfig& cfg, const CommandResult& result) {
  std::printf("experiment: %s\n", mlrem::harness::to_string(cfg.experiment));
  std::printf("rows: %zu\n", result.rows.size());
  for (const auto& [key, value] : result.summary) {
    std::printf("  %s = %s\n", key.c_str(), value.c_str());
  }
  for (const auto& w : result.warnings) std::printf("warning: %s\n", w.c_str());
  for (const auto& f : result.failures) std::printf("FAILED: %s\n", f.c_str());
  for (const auto& path : result.manifest.outputs) std::printf("wrote %s\n", path.c_str());
  std::printf("wall: %.1f ms\n", result.manifest.wall_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EM for symmetric two-component mixed linear regression: "
               "experiment runner and diagnostics"};
  app.set_version_flag("--version", std::string(mlrem::kVersion));
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string snr_text;
  std::string format_text = "csv";
  double varphi0 = 0.0, phi0 = 0.0;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--d", cfg.d, "covariate dimension");
    sub->add_option("--n", cfg.n, "samples per dataset");
    sub->add_option("--snr", snr_text, "signal-to-noise ratio (positive number or 'inf')");
    sub->add_option("--trials", cfg.trials, "independent trials");
    sub->add_option("--seed", cfg.seed, "master seed");
    sub->add_option("--pi1", cfg.pi1, "true first mixing weight");
    auto* v = sub->add_option("--varphi0", varphi0, "initial angle varphi in [0, pi/2]");
    auto* p = sub->add_option("--phi0", phi0, "initial angle phi in [0, pi]");
    auto* ri = sub->add_flag("--random-init", cfg.random_init, "random initial state");
    v->excludes(p)->excludes(ri);
    p->excludes(ri);
    sub->add_option("--eta-grid", cfg.eta_grid, "comma-separated SNR grid")->delimiter(',');
    sub->add_option("--n-grid", cfg.n_grid, "comma-separated sample-size grid")->delimiter(',');
    sub->add_option("--out", cfg.out, "output path");
    sub->add_option("--format", format_text, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--nodes", cfg.quad.nodes_per_axis, "quadrature nodes per axis");
    sub->add_option("--max-iters", cfg.max_iters, "iteration cap per trial");
    return sub;
  };

  struct SubEntry {
    CLI::App* app;
    ExperimentKind kind;
    CLI::Option* varphi_opt;
    CLI::Option* phi_opt;
  };
  std::vector<SubEntry> subs;
  const auto add_sub = [&](ExperimentKind kind, const char* name, const char* help) {
    CLI::App* sub = add_common(app.add_subcommand(name, help));
    subs.push_back({sub, kind, sub->get_option("--varphi0"), sub->get_option("--phi0")});
  };
  add_sub(ExperimentKind::trajectory, "trajectory",
          "iterate trajectories in the initial plane + analytic cycloid curve");
  add_sub(ExperimentKind::quad_convergence, "quad_convergence",
          "quadratic-convergence slope of the angle phi");
  add_sub(ExperimentKind::mixing_error, "mixing_error",
          "mixing-weight error against the preceding angle");
  add_sub(ExperimentKind::final_accuracy, "final_accuracy",
          "per-iteration parameter/weight accuracy across true mixing weights");
  add_sub(ExperimentKind::scaling, "scaling",
          "statistical-error scaling over a sample-size grid");
  add_sub(ExperimentKind::fixed_point, "fixed_point",
          "orthogonal fixed-point ratio k*(eta) with analytic bounds");
  add_sub(ExperimentKind::deviation, "deviation",
          "distance of the update from its infinite-SNR limit over an eta grid");
  add_sub(ExperimentKind::identities, "identities",
          "expectation identities, gradient link, and NLL monotonicity checks");
  add_sub(ExperimentKind::generate, "generate", "write a synthetic dataset CSV + manifest");

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& entry : subs) {
      if (entry.app->parsed()) {
        cfg.experiment = entry.kind;
        if (entry.varphi_opt->count() > 0) cfg.varphi0 = varphi0;
        if (entry.phi_opt->count() > 0) cfg.phi0 = phi0;
      }
    }
    if (!snr_text.empty()) {
      cfg.snr_explicit = true;
      if (snr_text == "inf") {
        cfg.snr = std::numeric_limits<double>::infinity();
      } else {
        std::size_t pos = 0;
        cfg.snr = std::stod(snr_text, &pos);
        if (pos != snr_text.size()) throw std::invalid_argument("--snr: not a number");
      }
    }
    cfg.format = (format_text == "json") ? OutputFormat::json : OutputFormat::csv;

    const CommandResult result = mlrem::harness::run_experiment(cfg);
    print_result(cfg, result);
    return result.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
