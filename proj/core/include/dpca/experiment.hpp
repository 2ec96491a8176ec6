#pragma once

#include "dpca/analysis.hpp"
#include "dpca/estimator.hpp"
#include "dpca/records.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dpca::experiment {

enum class SweepMode {
  kScaling,    // marginal sweeps over d, m, n and the eigengap
  kSplitting,  // fixed total sample size, growing machine count
  kCompare     // one-shot vs full-sample vs extra-eigenvector variants
};

std::string to_string(SweepMode mode);
SweepMode sweep_mode_from_string(const std::string& name);

struct ExperimentConfig {
  SweepMode mode = SweepMode::kScaling;

  // Scaling-mode grids. Each covariate is swept marginally with the other
  // three held at the anchors.
  std::vector<int> d_grid{100, 200, 400};
  std::vector<int> m_grid{10, 20, 40};
  std::vector<std::int64_t> n_grid{250, 500, 1000};
  std::vector<double> lambda_grid{24.0, 48.0, 96.0};
  int anchor_d = 200;
  int anchor_m = 20;
  std::int64_t anchor_n = 500;
  double anchor_lambda = 50.0;

  // Splitting mode: N = split_total fixed, m swept.
  std::int64_t split_total = 3000;
  std::vector<int> split_m{1, 2, 5, 10, 25, 50};

  int k = 3;
  std::vector<std::string> methods{"DP"};  // DP | FP | DPx
  std::string kind = "gaussian";
  int extra = 5;  // the x in DPx
  int replicates = 50;
  std::uint64_t seed = 20240601;
  std::string out_dir = "out";
  std::string solver = "iterative";  // auto | dense | iterative
  bool synthetic = false;  // inject exact c*sqrt(d/(m n delta)) errors (test mode)
  bool center = false;
  bool weighted = false;
  int threads = 0;  // 0: DPCA_THREADS or hardware concurrency

  // Scale every grid up to the source study's settings (hours, not minutes).
  void apply_paper_scale();

  estimator::PcaOptions pca_options() const;
  std::uint64_t config_hash() const;  // seeds + grids + mode + methods
};

struct Cell {
  int d = 0;
  int m = 0;
  std::int64_t n = 0;
  double lambda = 0.0;
  int k = 0;
  std::string method;

  double delta() const;   // eigengap of the swept spiked model at K
  std::uint64_t id() const;  // stable hash, used for seeds and file names
  std::string label() const;
};

// Cell lists per mode (deduplicated, deterministic order).
std::vector<Cell> build_cells(const ExperimentConfig& config);

// One Monte Carlo replicate of one cell; all randomness derives from
// (config.seed, cell id, replicate).
ExperimentRecord run_cell_replicate(const Cell& cell,
                                    const ExperimentConfig& config,
                                    int replicate);

struct SweepOutput {
  std::vector<ExperimentRecord> records;
  std::vector<Cell> cells;
  std::optional<analysis::RegressionFit> fit;
  int cells_computed = 0;  // freshly run in this invocation (resume skips)
  std::string records_path;
};

// Runs every cell, checkpointing per cell under <out>/cells/ with a manifest
// keyed by the config hash; a completed sweep re-run loads results without
// recomputation. Emits <out>/records.csv and <out>/fit.json.
SweepOutput run_sweep(const ExperimentConfig& config);

// Per-cell mean errors, keyed in cell order.
struct CellSummary {
  Cell cell;
  double mean_rho = 0.0;
  double q90_rho = 0.0;  // empirical 0.9-quantile across replicates
  double mean_ms = 0.0;
  int replicates = 0;
};
std::vector<CellSummary> summarize(const std::vector<Cell>& cells,
                                   const std::vector<ExperimentRecord>& records);

}  // namespace dpca::experiment
