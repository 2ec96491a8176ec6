#include "dpca/experiment.hpp"

#include "dpca/linalg.hpp"
#include "dpca/models.hpp"
#include "dpca/parallel.hpp"
#include "dpca/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace dpca::experiment {
namespace fs = std::filesystem;
namespace {

std::uint64_t hash_string(std::uint64_t h, const std::string& s) {
  for (const char c : s) {
    h = CounterRng::mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  }
  return h;
}

std::uint64_t hash_u64(std::uint64_t h, std::uint64_t v) {
  return CounterRng::mix(h ^ (v + 0x9e3779b97f4a7c15ULL));
}

linalg::SolverPolicy solver_from_string(const std::string& name) {
  if (name == "auto") return linalg::SolverPolicy::kAuto;
  if (name == "dense") return linalg::SolverPolicy::kDense;
  if (name == "iterative") return linalg::SolverPolicy::kIterative;
  throw ConfigError("unknown solver policy: " + name);
}

}  // namespace

std::string to_string(SweepMode mode) {
  switch (mode) {
    case SweepMode::kScaling: return "scaling";
    case SweepMode::kSplitting: return "splitting";
    case SweepMode::kCompare: return "compare";
  }
  return "unknown";
}

SweepMode sweep_mode_from_string(const std::string& name) {
  if (name == "scaling") return SweepMode::kScaling;
  if (name == "splitting") return SweepMode::kSplitting;
  if (name == "compare") return SweepMode::kCompare;
  throw ConfigError("unknown sweep mode: " + name);
}

void ExperimentConfig::apply_paper_scale() {
  d_grid = {200, 400, 800, 1600};
  m_grid = {25, 50, 100, 200};
  n_grid = {500, 1000, 2000, 4000};
  lambda_grid = {8.0, 16.0, 32.0, 64.0};
  anchor_d = 800;
  anchor_m = 50;
  anchor_n = 2000;
  anchor_lambda = 50.0;
  split_total = 6000;
  split_m.clear();
  for (int m = 1; m <= 300; ++m) {
    if (split_total % m == 0) split_m.push_back(m);
  }
  replicates = 100;
}

estimator::PcaOptions ExperimentConfig::pca_options() const {
  estimator::PcaOptions options;
  options.center = center;
  options.solver = solver_from_string(solver);
  return options;
}

std::uint64_t ExperimentConfig::config_hash() const {
  std::uint64_t h = 0xd1b54a32d192ed03ULL;
  h = hash_string(h, to_string(mode));
  for (int d : d_grid) h = hash_u64(h, d);
  for (int m : m_grid) h = hash_u64(h, m);
  for (auto n : n_grid) h = hash_u64(h, static_cast<std::uint64_t>(n));
  for (double l : lambda_grid) h = hash_u64(h, static_cast<std::uint64_t>(l * 1024));
  h = hash_u64(h, anchor_d);
  h = hash_u64(h, anchor_m);
  h = hash_u64(h, static_cast<std::uint64_t>(anchor_n));
  h = hash_u64(h, static_cast<std::uint64_t>(anchor_lambda * 1024));
  h = hash_u64(h, static_cast<std::uint64_t>(split_total));
  for (int m : split_m) h = hash_u64(h, m);
  h = hash_u64(h, k);
  for (const auto& method : methods) h = hash_string(h, method);
  h = hash_string(h, kind);
  h = hash_u64(h, extra);
  h = hash_u64(h, replicates);
  h = hash_u64(h, seed);
  h = hash_string(h, solver);
  h = hash_u64(h, synthetic ? 1 : 0);
  h = hash_u64(h, center ? 1 : 0);
  h = hash_u64(h, weighted ? 1 : 0);
  return h;
}

double Cell::delta() const {
  // Swept models put the gap at lambda/4 - 1 when K covers all three
  // spikes, and at the K-th spacing otherwise.
  const Vector values = [&] {
    Vector v = Vector::Ones(4);
    v[0] = lambda;
    v[1] = lambda / 2.0;
    v[2] = lambda / 4.0;
    return v;
  }();
  if (k >= 1 && k <= 3) return values[k - 1] - (k == 3 ? 1.0 : values[k]);
  return 0.0;
}

std::uint64_t Cell::id() const {
  std::uint64_t h = 0x9ddfea08eb382d69ULL;
  h = hash_u64(h, d);
  h = hash_u64(h, m);
  h = hash_u64(h, static_cast<std::uint64_t>(n));
  h = hash_u64(h, static_cast<std::uint64_t>(lambda * 1024));
  h = hash_u64(h, k);
  h = hash_string(h, method);
  return h;
}

std::string Cell::label() const {
  return "d=" + std::to_string(d) + " m=" + std::to_string(m) +
         " n=" + std::to_string(n) + " lambda=" + std::to_string(lambda) +
         " method=" + method;
}

std::vector<Cell> build_cells(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  std::set<std::uint64_t> seen;
  const auto push = [&](int d, int m, std::int64_t n, double lambda,
                        const std::string& method) {
    Cell cell{d, m, n, lambda, config.k, method};
    if (seen.insert(cell.id()).second) cells.push_back(std::move(cell));
  };

  switch (config.mode) {
    case SweepMode::kScaling:
      for (const auto& method : config.methods) {
        for (int d : config.d_grid)
          for (int m : config.m_grid)
            push(d, m, config.anchor_n, config.anchor_lambda, method);
        for (std::int64_t n : config.n_grid)
          push(config.anchor_d, config.anchor_m, n, config.anchor_lambda, method);
        for (double lambda : config.lambda_grid)
          push(config.anchor_d, config.anchor_m, config.anchor_n, lambda, method);
      }
      break;
    case SweepMode::kSplitting:
      for (const auto& method : config.methods) {
        for (int m : config.split_m) {
          if (config.split_total % m != 0) {
            throw ConfigError("splitting sweep: m = " + std::to_string(m) +
                              " does not divide N = " +
                              std::to_string(config.split_total));
          }
          push(config.anchor_d, m, config.split_total / m, config.anchor_lambda,
               method);
        }
      }
      break;
    case SweepMode::kCompare:
      for (const auto& method : config.methods) {
        for (int d : config.d_grid) {
          push(d, config.anchor_m, config.anchor_n, config.anchor_lambda, method);
        }
      }
      break;
  }
  return cells;
}

ExperimentRecord run_cell_replicate(const Cell& cell,
                                    const ExperimentConfig& config,
                                    int replicate) {
  ExperimentRecord record;
  record.d = cell.d;
  record.m = cell.m;
  record.n = cell.n;
  record.k = cell.k;
  record.method = cell.method;
  record.replicate = replicate;

  const auto model = models::spiked_model(cell.d, cell.lambda);
  record.delta = model.spectrum()[cell.k - 1] -
                 (cell.k < cell.d ? model.spectrum()[cell.k] : 0.0);

  if (config.synthetic) {
    record.rho = std::sqrt(static_cast<double>(cell.d) /
                           (static_cast<double>(cell.m) *
                            static_cast<double>(cell.n) * record.delta));
    record.comm_floats = static_cast<std::uint64_t>(cell.m) * cell.k * cell.d;
    return record;
  }

  const std::uint64_t rep_seed =
      CounterRng::derive(config.seed, cell.id(), static_cast<std::uint64_t>(replicate));
  const auto kind = models::innovation_kind_from_string(config.kind);
  const auto pca = config.pca_options();
  estimator::AggregateOptions agg;
  agg.weight_by_samples = config.weighted;

  std::vector<models::Partition> partitions;
  partitions.reserve(cell.m);
  for (int l = 0; l < cell.m; ++l) {
    partitions.push_back(models::sample_partition(
        model, kind, cell.n, static_cast<std::uint32_t>(l), rep_seed));
  }

  const Frame truth = Frame(model.basis().data().leftCols(cell.k));
  const auto start = std::chrono::steady_clock::now();
  Frame result = truth;  // overwritten below
  if (cell.method == "FP") {
    result = estimator::full_sample_pca(partitions, cell.k, pca).frame;
    record.comm_floats = static_cast<std::uint64_t>(cell.m) *
                         std::min<std::int64_t>(cell.n, cell.d) * cell.d;
  } else {
    int extra = 0;
    if (cell.method == "DP") {
      extra = 0;
    } else if (cell.method.size() > 2 && cell.method.rfind("DP", 0) == 0) {
      extra = std::stoi(cell.method.substr(2));  // DP5, DP2, ...
    } else {
      throw ConfigError("unknown method: " + cell.method);
    }
    auto aggregate = estimator::dp_extra(partitions, cell.k, extra, pca, agg);
    result = aggregate.frame;
    record.comm_floats = aggregate.ledger.frames_floats;
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  record.wall_ms =
      std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count() /
      1000.0;
  record.rho = linalg::subspace_distance(result, truth);
  return record;
}

std::vector<CellSummary> summarize(const std::vector<Cell>& cells,
                                   const std::vector<ExperimentRecord>& records) {
  std::vector<CellSummary> summaries;
  for (const auto& cell : cells) {
    CellSummary summary;
    summary.cell = cell;
    std::vector<double> rhos;
    for (const auto& r : records) {
      if (r.d == cell.d && r.m == cell.m && r.n == cell.n &&
          r.k == cell.k && r.method == cell.method &&
          std::abs(r.delta - cell.delta()) < 1e-9) {
        summary.mean_rho += r.rho;
        summary.mean_ms += r.wall_ms;
        summary.replicates += 1;
        rhos.push_back(r.rho);
      }
    }
    if (summary.replicates > 0) {
      summary.mean_rho /= summary.replicates;
      summary.mean_ms /= summary.replicates;
      std::sort(rhos.begin(), rhos.end());
      const auto idx = static_cast<std::size_t>(0.9 * (rhos.size() - 1));
      summary.q90_rho = rhos[idx];
    }
    summaries.push_back(std::move(summary));
  }
  return summaries;
}

namespace {

struct Manifest {
  std::uint64_t hash = 0;
  std::set<std::uint64_t> completed;
};

Manifest load_manifest(const fs::path& path) {
  Manifest manifest;
  std::ifstream in(path);
  if (!in) return manifest;
  try {
    nlohmann::json j;
    in >> j;
    manifest.hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    for (const auto& id : j.at("completed")) {
      manifest.completed.insert(std::stoull(id.get<std::string>(), nullptr, 16));
    }
  } catch (const std::exception&) {
    return Manifest{};  // unreadable manifest: recompute everything
  }
  return manifest;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  nlohmann::json j;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(manifest.hash));
  j["config_hash"] = buf;
  std::vector<std::string> ids;
  for (const auto id : manifest.completed) {
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(id));
    ids.push_back(buf);
  }
  j["completed"] = ids;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + tmp.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

std::string cell_file_name(const Cell& cell) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(cell.id()));
  return std::string("cell_") + buf + ".csv";
}

}  // namespace

SweepOutput run_sweep(const ExperimentConfig& config) {
  if (config.replicates < 1) throw ConfigError("run_sweep: replicates >= 1");
  SweepOutput output;
  output.cells = build_cells(config);
  if (output.cells.empty()) throw ConfigError("run_sweep: empty grid");

  const fs::path out_dir(config.out_dir);
  const fs::path cells_dir = out_dir / "cells";
  std::error_code ec;
  fs::create_directories(cells_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + cells_dir.string());

  const fs::path manifest_path = out_dir / "manifest.json";
  Manifest manifest = load_manifest(manifest_path);
  if (manifest.hash != config.config_hash()) {
    manifest = Manifest{};
    manifest.hash = config.config_hash();
  }

  for (const auto& cell : output.cells) {
    const fs::path cell_path = cells_dir / cell_file_name(cell);
    if (manifest.completed.count(cell.id()) && fs::exists(cell_path)) {
      const auto cached = read_records_csv(cell_path.string());
      output.records.insert(output.records.end(), cached.begin(), cached.end());
      continue;
    }
    std::vector<ExperimentRecord> cell_records(config.replicates);
    parallel_for(
        config.replicates,
        [&](int rep) { cell_records[rep] = run_cell_replicate(cell, config, rep); },
        config.threads);
    write_records_csv(cell_records, cell_path.string());
    manifest.completed.insert(cell.id());
    save_manifest(manifest_path, manifest);
    output.records.insert(output.records.end(), cell_records.begin(),
                          cell_records.end());
    output.cells_computed += 1;
  }

  const fs::path records_path = out_dir / "records.csv";
  write_records_csv(output.records, records_path.string());
  output.records_path = records_path.string();

  if (config.mode == SweepMode::kScaling) {
    output.fit = analysis::fit_scaling_regression(output.records);
    std::ofstream fit_out(out_dir / "fit.json", std::ios::trunc);
    fit_out << analysis::to_json(*output.fit) << "\n";
  }
  return output;
}

}  // namespace dpca::experiment
