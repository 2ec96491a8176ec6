#include "commands.hpp"

#include "dpca/experiment.hpp"
#include "dpca/types.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

using dpca::experiment::ExperimentConfig;

// JSON config file, overridden by any flags given on the command line.
void load_sweep_config(const std::string& path, ExperimentConfig& config) {
  std::ifstream in(path);
  if (!in) throw dpca::ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw dpca::ConfigError("bad JSON in " + path + ": " + e.what());
  }
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].template get<std::decay_t<decltype(field)>>();
  };
  std::string mode = to_string(config.mode);
  get("mode", mode);
  config.mode = dpca::experiment::sweep_mode_from_string(mode);
  get("d", config.d_grid);
  get("m", config.m_grid);
  get("n", config.n_grid);
  get("lambda", config.lambda_grid);
  get("anchor_d", config.anchor_d);
  get("anchor_m", config.anchor_m);
  get("anchor_n", config.anchor_n);
  get("anchor_lambda", config.anchor_lambda);
  get("split_total", config.split_total);
  get("split_m", config.split_m);
  get("k", config.k);
  get("methods", config.methods);
  get("kind", config.kind);
  get("extra", config.extra);
  get("reps", config.replicates);
  get("seed", config.seed);
  get("out", config.out_dir);
  get("solver", config.solver);
  get("synthetic", config.synthetic);
  get("center", config.center);
  get("weighted", config.weighted);
  get("threads", config.threads);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed principal-eigenspace estimation toolkit"};
  app.require_subcommand(1);

  dpca::tools::GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate partition files");
  gen_cmd->add_option("--d", gen.d, "dimension");
  gen_cmd->add_option("--m", gen.m, "machines");
  gen_cmd->add_option("--n", gen.n, "samples per machine");
  gen_cmd->add_option("--lambda", gen.lambda, "spike size");
  gen_cmd->add_option("--kind", gen.kind, "innovation kind");
  gen_cmd->add_option("--seed", gen.seed, "master seed");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_flag("--csv", gen.csv, "also write CSV exports");

  dpca::tools::RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "one distributed run");
  run_cmd->add_option("--d", run.d, "dimension");
  run_cmd->add_option("--m", run.m, "machines");
  run_cmd->add_option("--n", run.n, "samples per machine");
  run_cmd->add_option("--lambda", run.lambda, "spike size");
  run_cmd->add_option("--k", run.k, "target rank");
  run_cmd->add_option("--method", run.method, "DP | FP | DPx (e.g. DP5)");
  run_cmd->add_option("--kind", run.kind, "innovation kind");
  run_cmd->add_option("--transport", run.transport, "inmemory | files | tcp");
  run_cmd->add_option("--solver", run.solver, "auto | dense | iterative");
  run_cmd->add_option("--seed", run.seed, "master seed");
  run_cmd->add_option("--out", run.out, "output directory");
  run_cmd->add_option("--data", run.data_dir, "read partitions from directory");
  run_cmd->add_option("--endpoints", run.endpoints,
                      "connect to served workers (host:port or dir per machine)")
      ->delimiter(',');
  run_cmd->add_flag("--eigenvalue-round", run.eigenvalue_round,
                    "run the second communication round");
  run_cmd->add_flag("--allow-partial", run.allow_partial,
                    "aggregate over responding workers only (non-standard)");
  run_cmd->add_flag("--center", run.center, "mean-center samples");
  run_cmd->add_flag("--weighted", run.weighted, "weight machines by sample count");

  ExperimentConfig sweep;
  std::string sweep_config_path;
  std::string sweep_mode = "scaling";
  bool paper_scale = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo parameter sweep");
  sweep_cmd->add_option("--config", sweep_config_path, "JSON config file");
  sweep_cmd->add_option("--mode", sweep_mode, "scaling | splitting | compare");
  sweep_cmd->add_option("--d", sweep.d_grid, "dimension grid")->delimiter(',');
  sweep_cmd->add_option("--m", sweep.m_grid, "machine grid")->delimiter(',');
  sweep_cmd->add_option("--n", sweep.n_grid, "subsample grid")->delimiter(',');
  sweep_cmd->add_option("--lambda", sweep.lambda_grid, "spike grid")->delimiter(',');
  sweep_cmd->add_option("--k", sweep.k, "target rank");
  sweep_cmd->add_option("--method", sweep.methods, "methods (DP, FP, DPx)")
      ->delimiter(',');
  sweep_cmd->add_option("--kind", sweep.kind, "innovation kind");
  sweep_cmd->add_option("--reps", sweep.replicates, "replicates per cell");
  sweep_cmd->add_option("--seed", sweep.seed, "master seed");
  sweep_cmd->add_option("--out", sweep.out_dir, "output directory");
  sweep_cmd->add_option("--solver", sweep.solver, "auto | dense | iterative");
  sweep_cmd->add_option("--threads", sweep.threads, "worker threads (0 = auto)");
  sweep_cmd->add_flag("--paper-scale", paper_scale,
                      "full-scale grids (hours, not CI)");
  sweep_cmd->add_flag("--synthetic", sweep.synthetic,
                      "inject exact reference errors (test mode)");

  dpca::tools::VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "run verification suites");
  verify_cmd
      ->add_option("--suite", verify.suites,
                   "dk | sdp | center | unbiased | adversarial | transport")
      ->delimiter(',');
  verify_cmd->add_option("--seed", verify.seed, "master seed");
  verify_cmd->add_option("--out", verify.out, "output directory");

  dpca::tools::ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "re-emit plots/fit from records");
  report_cmd->add_option("--out", report.out, "directory with records.csv")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dpca::tools::kExitConfigError;
  }

  try {
    if (*gen_cmd) return dpca::tools::cmd_gen(gen);
    if (*run_cmd) return dpca::tools::cmd_run(run);
    if (*sweep_cmd) {
      ExperimentConfig config;
      if (!sweep_config_path.empty()) load_sweep_config(sweep_config_path, config);
      // Flags override file values.
      for (const auto* opt : sweep_cmd->get_options()) {
        if (opt->count() == 0) continue;
        const std::string name = opt->get_name();
        if (name == "--mode") config.mode = dpca::experiment::sweep_mode_from_string(sweep_mode);
        else if (name == "--d") config.d_grid = sweep.d_grid;
        else if (name == "--m") config.m_grid = sweep.m_grid;
        else if (name == "--n") config.n_grid = sweep.n_grid;
        else if (name == "--lambda") config.lambda_grid = sweep.lambda_grid;
        else if (name == "--k") config.k = sweep.k;
        else if (name == "--method") config.methods = sweep.methods;
        else if (name == "--kind") config.kind = sweep.kind;
        else if (name == "--reps") config.replicates = sweep.replicates;
        else if (name == "--seed") config.seed = sweep.seed;
        else if (name == "--out") config.out_dir = sweep.out_dir;
        else if (name == "--solver") config.solver = sweep.solver;
        else if (name == "--threads") config.threads = sweep.threads;
        else if (name == "--synthetic") config.synthetic = sweep.synthetic;
      }
      if (paper_scale) config.apply_paper_scale();
      return dpca::tools::cmd_sweep(config);
    }
    if (*verify_cmd) return dpca::tools::cmd_verify(verify);
    if (*report_cmd) return dpca::tools::cmd_report(report);
  } catch (const dpca::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return dpca::tools::kExitConfigError;
  } catch (const dpca::InvalidInputError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return dpca::tools::kExitConfigError;
  } catch (const dpca::TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return dpca::tools::kExitTransportFailure;
  } catch (const dpca::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return dpca::tools::kExitTransportFailure;
  } catch (const dpca::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return dpca::tools::kExitConfigError;
  } catch (const dpca::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
