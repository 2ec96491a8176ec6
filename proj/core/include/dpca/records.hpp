#pragma once

#include "dpca/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dpca {

// One Monte Carlo cell result. CSV schema (stable):
//   d,m,n,delta,K,method,rep,rho,ms,comm_floats
struct ExperimentRecord {
  int d = 0;
  int m = 0;
  std::int64_t n = 0;
  double delta = 0.0;
  int k = 0;
  std::string method;
  int replicate = 0;
  double rho = 0.0;
  double wall_ms = 0.0;
  std::uint64_t comm_floats = 0;

  bool operator==(const ExperimentRecord&) const = default;
};

inline constexpr const char* kRecordCsvHeader =
    "d,m,n,delta,K,method,rep,rho,ms,comm_floats";

std::string record_to_csv(const ExperimentRecord& record);
ExperimentRecord record_from_csv(const std::string& line);

void write_records_csv(const std::vector<ExperimentRecord>& records,
                       const std::string& path);
std::vector<ExperimentRecord> read_records_csv(const std::string& path);

}  // namespace dpca
