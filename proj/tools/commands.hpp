#pragma once

#include "dpca/experiment.hpp"
#include "dpca/runtime.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dpca::tools {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailure = 2;
inline constexpr int kExitTransportFailure = 3;
inline constexpr int kExitConfigError = 4;

struct GenArgs {
  int d = 100;
  int m = 4;
  std::int64_t n = 500;
  double lambda = 50.0;
  std::string kind = "gaussian";
  std::uint64_t seed = 20240601;
  std::string out = "out";
  bool csv = false;
};

struct RunArgs {
  int d = 100;
  int m = 4;
  std::int64_t n = 500;
  double lambda = 50.0;
  int k = 3;
  std::string method = "DP";
  int extra = 5;
  std::string kind = "gaussian";
  std::string transport = "inmemory";
  std::string solver = "auto";
  bool eigenvalue_round = false;
  bool allow_partial = false;
  bool center = false;
  bool weighted = false;
  std::uint64_t seed = 20240601;
  std::string out;
  std::string data_dir;  // read partitions instead of generating
  // Connect to externally served workers (one "host:port" per machine for
  // tcp, one directory per machine for files) instead of spawning them.
  std::vector<std::string> endpoints;
};

struct VerifyArgs {
  std::vector<std::string> suites;  // empty = all
  std::uint64_t seed = 20240601;
  std::string out;
};

struct ReportArgs {
  std::string out = "out";  // directory containing records.csv
};

int cmd_gen(const GenArgs& args);
int cmd_run(const RunArgs& args);
int cmd_sweep(const experiment::ExperimentConfig& config);
int cmd_verify(const VerifyArgs& args);
int cmd_report(const ReportArgs& args);

// Shared by sweep and report: per-cell mean plots + fit emission.
void emit_report(const std::string& out_dir,
                 const std::vector<ExperimentRecord>& records);

}  // namespace dpca::tools
