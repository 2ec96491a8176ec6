#include "commands.hpp"

#include "dpca/analysis.hpp"
#include "dpca/linalg.hpp"
#include "dpca/models.hpp"
#include "dpca/verify.hpp"
#include "svg_plot.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <map>
#include <memory>
#include <set>

namespace dpca::tools {
namespace fs = std::filesystem;
namespace {

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec || !fs::is_directory(path)) {
    throw IoError("cannot create directory: " + path);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

nlohmann::json ledger_json(const estimator::CommLedger& ledger) {
  nlohmann::json j;
  j["frames_floats"] = ledger.frames_floats;
  j["local_eigenvalue_floats"] = ledger.local_eigenvalue_floats;
  j["broadcast_floats"] = ledger.broadcast_floats;
  j["rayleigh_reply_floats"] = ledger.rayleigh_reply_floats;
  j["total_floats"] = ledger.total_floats();
  j["bytes_to_coordinator"] = ledger.bytes_to_coordinator;
  j["bytes_to_workers"] = ledger.bytes_to_workers;
  j["per_machine_floats"] = ledger.per_machine_floats;
  return j;
}

}  // namespace

int cmd_gen(const GenArgs& args) {
  ensure_dir(args.out);
  const auto model = models::spiked_model(args.d, args.lambda);
  const auto kind = models::innovation_kind_from_string(args.kind);

  nlohmann::json manifest;
  manifest["format"] = "dpca-partition-v1";
  manifest["model"] = {{"type", "spiked"},
                       {"d", args.d},
                       {"lambda", args.lambda},
                       {"k", model.target_rank()}};
  manifest["kind"] = args.kind;
  manifest["m"] = args.m;
  manifest["n"] = args.n;
  manifest["seed"] = args.seed;

  std::vector<std::string> files;
  for (int l = 0; l < args.m; ++l) {
    const auto partition = models::sample_partition(
        model, kind, args.n, static_cast<std::uint32_t>(l), args.seed);
    const std::string name = "partition_" + std::to_string(l) + ".bin";
    models::write_partition(partition, args.out + "/" + name);
    files.push_back(name);
    if (args.csv) {
      models::write_partition_csv(
          partition, args.out + "/partition_" + std::to_string(l) + ".csv");
    }
  }
  manifest["files"] = files;
  write_text(args.out + "/manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << args.m << " partitions (" << args.n << " x " << args.d
            << ") to " << args.out << "\n";
  return kExitOk;
}

int cmd_run(const RunArgs& args) {
  std::vector<models::Partition> partitions;
  std::optional<Frame> truth;
  if (!args.data_dir.empty()) {
    for (int l = 0; l < args.m; ++l) {
      partitions.push_back(models::read_partition(
          args.data_dir + "/partition_" + std::to_string(l) + ".bin"));
    }
    // Ground truth is available when the generation manifest is present.
    const fs::path manifest_path = fs::path(args.data_dir) / "manifest.json";
    if (fs::exists(manifest_path)) {
      std::ifstream in(manifest_path);
      nlohmann::json manifest;
      in >> manifest;
      if (manifest.contains("model") && manifest["model"]["type"] == "spiked") {
        const auto model = models::spiked_model(manifest["model"]["d"],
                                                manifest["model"]["lambda"]);
        truth = Frame(model.basis().data().leftCols(args.k));
      }
    }
  } else {
    const auto model = models::spiked_model(args.d, args.lambda);
    const auto kind = models::innovation_kind_from_string(args.kind);
    for (int l = 0; l < args.m; ++l) {
      partitions.push_back(models::sample_partition(
          model, kind, args.n, static_cast<std::uint32_t>(l), args.seed));
    }
    truth = Frame(model.basis().data().leftCols(args.k));
  }

  runtime::RunOptions options;
  options.k = args.k;
  options.extra = args.method == "DP" || args.method == "FP"
                      ? 0
                      : (args.method.rfind("DP", 0) == 0 && args.method.size() > 2
                             ? std::stoi(args.method.substr(2))
                             : throw ConfigError("unknown method: " + args.method));
  options.eigenvalue_round = args.eigenvalue_round;
  options.pca.center = args.center;
  options.pca.solver = args.solver == "dense"  ? linalg::SolverPolicy::kDense
                       : args.solver == "iterative"
                           ? linalg::SolverPolicy::kIterative
                           : linalg::SolverPolicy::kAuto;
  options.agg.weight_by_samples = args.weighted;

  if (!args.endpoints.empty()) {
    if (static_cast<int>(args.endpoints.size()) != args.m) {
      throw ConfigError("need exactly one endpoint per machine");
    }
    std::set<std::string> unique(args.endpoints.begin(), args.endpoints.end());
    if (unique.size() != args.endpoints.size()) {
      throw ConfigError("endpoints must be unique");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  estimator::AggregateResult result = [&] {
    if (args.method == "FP") {
      // Full-sample baseline runs centrally; the ledger records the cost of
      // shipping the raw blocks.
      auto estimate = estimator::full_sample_pca(partitions, args.k, options.pca);
      std::vector<estimator::SubspaceEstimate> one{estimate};
      auto aggregated = estimator::aggregate(one, args.k);
      aggregated.ledger.frames_floats = 0;
      aggregated.ledger.local_eigenvalue_floats = 0;
      aggregated.ledger.per_machine_floats.assign(partitions.size(), 0);
      for (std::size_t l = 0; l < partitions.size(); ++l) {
        const auto floats = static_cast<std::uint64_t>(std::min<std::int64_t>(
                                partitions[l].sample_count(), args.d)) *
                            args.d;
        aggregated.ledger.per_machine_floats[l] = floats;
        aggregated.ledger.frames_floats += floats;
      }
      return aggregated;
    }
    const auto transport = runtime::transport_from_string(args.transport);
    if (!args.endpoints.empty()) {
      runtime::ClusterConfig config;
      config.machines = args.m;
      config.transport = transport;
      config.endpoints = args.endpoints;
      config.allow_partial = args.allow_partial;
      const double timeout = config.effective_timeout();
      std::vector<std::unique_ptr<runtime::WorkerChannel>> channels;
      for (int l = 0; l < args.m; ++l) {
        if (transport == runtime::Transport::kTcp) {
          channels.push_back(runtime::make_tcp_channel(args.endpoints[l], l, timeout));
        } else if (transport == runtime::Transport::kFiles) {
          channels.push_back(
              runtime::make_files_channel(args.endpoints[l], l, timeout));
        } else {
          throw ConfigError("--endpoints requires --transport files or tcp");
        }
      }
      return runtime::run_distributed(channels, options, config);
    }
    return runtime::run_local_cluster(partitions, options, transport);
  }();
  const double ms = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count() /
                    1000.0;

  nlohmann::json j;
  j["method"] = args.method;
  j["transport"] = args.transport;
  j["d"] = result.frame.dim();
  j["k"] = args.k;
  j["m"] = static_cast<int>(partitions.size());
  j["ms"] = ms;
  std::vector<std::vector<double>> v_tilde(result.frame.dim());
  for (int i = 0; i < result.frame.dim(); ++i) {
    for (int jcol = 0; jcol < result.frame.rank(); ++jcol) {
      v_tilde[i].push_back(result.frame.data()(i, jcol));
    }
  }
  j["v_tilde"] = v_tilde;
  if (result.refined_eigenvalues) {
    std::vector<double> values(result.refined_eigenvalues->data(),
                               result.refined_eigenvalues->data() +
                                   result.refined_eigenvalues->size());
    j["lambda_tilde"] = values;
  }
  j["ledger"] = ledger_json(result.ledger);

  std::optional<double> rho;
  if (truth) {
    rho = linalg::subspace_distance(result.frame, *truth);
    j["rho"] = *rho;
  } else {
    j["rho"] = nullptr;
  }

  std::cout << j.dump(2) << "\n";
  if (!args.out.empty()) {
    ensure_dir(args.out);
    write_text(args.out + "/run.json", j.dump(2) + "\n");
    ExperimentRecord record;
    record.d = result.frame.dim();
    record.m = static_cast<int>(partitions.size());
    record.n = partitions.front().sample_count();
    record.delta = args.lambda / 4.0 - 1.0;
    record.k = args.k;
    record.method = args.method;
    record.replicate = 0;
    record.rho = rho.value_or(std::nan(""));
    record.wall_ms = ms;
    record.comm_floats = result.ledger.frames_floats;
    write_records_csv({record}, args.out + "/run_record.csv");
  }
  return kExitOk;
}

// Per-cell means grouped along one covariate; one series per distinct value
// of the secondary covariate.
void emit_report(const std::string& out_dir,
                 const std::vector<ExperimentRecord>& records) {
  if (records.empty()) throw InvalidInputError("emit_report: no records");
  ensure_dir(out_dir + "/plots");

  struct CellKey {
    int d, m;
    std::int64_t n;
    double delta;
    std::string method;
    bool operator<(const CellKey& o) const {
      return std::tie(d, m, n, delta, method) <
             std::tie(o.d, o.m, o.n, o.delta, o.method);
    }
  };
  struct CellStats {
    double sum = 0.0;
    std::vector<double> rhos;
  };
  std::map<CellKey, CellStats> cells;
  for (const auto& r : records) {
    auto& cell = cells[{r.d, r.m, r.n, r.delta, r.method}];
    cell.sum += r.rho;
    cell.rhos.push_back(r.rho);
  }

  nlohmann::json summary = nlohmann::json::array();
  for (auto& [key, val] : cells) {
    std::sort(val.rhos.begin(), val.rhos.end());
    const auto idx = static_cast<std::size_t>(0.9 * (val.rhos.size() - 1));
    summary.push_back({{"d", key.d},
                       {"m", key.m},
                       {"n", key.n},
                       {"delta", key.delta},
                       {"method", key.method},
                       {"mean_rho", val.sum / val.rhos.size()},
                       {"q90_rho", val.rhos[idx]},
                       {"replicates", val.rhos.size()}});
  }
  write_text(out_dir + "/summary.json", summary.dump(2) + "\n");

  // One plot per swept covariate; series keyed by method and by the m (for
  // the d axis) or d (otherwise) value.
  const auto covariate_value = [](const CellKey& key, int axis) -> double {
    switch (axis) {
      case 0: return key.d;
      case 1: return key.m;
      case 2: return static_cast<double>(key.n);
      default: return key.delta;
    }
  };
  const char* axis_names[4] = {"d", "m", "n", "delta"};
  for (int axis = 0; axis < 4; ++axis) {
    std::set<double> values;
    for (const auto& [key, val] : cells) values.insert(covariate_value(key, axis));
    if (values.size() < 2) continue;

    std::map<std::string, PlotSeries> series;
    for (const auto& [key, val] : cells) {
      const int secondary_axis = axis == 0 ? 1 : 0;
      std::string label = key.method;
      // Secondary covariate appears in the label only when it varies.
      std::set<double> secondary;
      for (const auto& [other, v2] : cells) {
        secondary.insert(covariate_value(other, secondary_axis));
      }
      if (secondary.size() > 1) {
        label += std::string(" ") + axis_names[secondary_axis] + "=" +
                 std::to_string(static_cast<long long>(
                     covariate_value(key, secondary_axis)));
      }
      auto& s = series[label];
      s.label = label;
      s.x.push_back(covariate_value(key, axis));
      s.y.push_back(val.sum / val.rhos.size());
    }
    std::vector<PlotSeries> ordered;
    for (auto& [label, s] : series) ordered.push_back(std::move(s));
    write_loglog_svg(out_dir + "/plots/rho_vs_" + axis_names[axis] + ".svg",
                     std::string("mean subspace error vs ") + axis_names[axis],
                     axis_names[axis], "rho", ordered);
  }
}

int cmd_sweep(const experiment::ExperimentConfig& config) {
  const auto output = experiment::run_sweep(config);
  emit_report(config.out_dir, output.records);
  std::cout << "sweep complete: " << output.cells.size() << " cells ("
            << output.cells_computed << " computed, "
            << output.cells.size() - output.cells_computed << " cached), "
            << output.records.size() << " records\n";
  if (output.fit) {
    std::cout << "scaling fit: " << analysis::to_json(*output.fit) << "\n";
  }
  std::cout << "records: " << output.records_path << "\n";
  return kExitOk;
}

int cmd_verify(const VerifyArgs& args) {
  static const std::vector<std::string> kAll = {"dk",       "sdp",
                                                "center",   "unbiased",
                                                "adversarial", "transport"};
  const auto& suites = args.suites.empty() ? kAll : args.suites;
  const auto results = verify::run_suites(suites, args.seed);
  const std::string json = verify::to_json(results);
  std::cout << json << "\n";
  bool all_pass = true;
  for (const auto& r : results) all_pass = all_pass && r.pass;
  if (!args.out.empty()) {
    ensure_dir(args.out);
    write_text(args.out + "/verify.json", json + "\n");
    if (!all_pass) {
      std::string dump;
      for (const auto& r : results) {
        for (const auto& c : r.failing_cases) dump += r.name + ": " + c + "\n";
      }
      write_text(args.out + "/verify_failures.txt", dump);
    }
  }
  return all_pass ? kExitOk : kExitVerifyFailure;
}

int cmd_report(const ReportArgs& args) {
  const auto records = read_records_csv(args.out + "/records.csv");
  emit_report(args.out, records);
  const auto fit = analysis::fit_scaling_regression(records);
  write_text(args.out + "/fit.json", analysis::to_json(fit) + "\n");
  std::cout << "report written to " << args.out << "\n";
  std::cout << "scaling fit: " << analysis::to_json(fit) << "\n";
  return kExitOk;
}

}  // namespace dpca::tools
