#include "dpca/records.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dpca {

std::string record_to_csv(const ExperimentRecord& r) {
  char buf[256];
  // %.17g keeps a double bit-exact through a parse round trip.
  std::snprintf(buf, sizeof(buf),
                "%d,%d,%" PRId64 ",%.17g,%d,%s,%d,%.17g,%.17g,%" PRIu64, r.d,
                r.m, r.n, r.delta, r.k, r.method.c_str(), r.replicate, r.rho,
                r.wall_ms, r.comm_floats);
  return buf;
}

ExperimentRecord record_from_csv(const std::string& line) {
  std::istringstream in(line);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (fields.size() != 10) {
    throw IoError("bad record line (expected 10 fields): " + line);
  }
  ExperimentRecord r;
  try {
    r.d = std::stoi(fields[0]);
    r.m = std::stoi(fields[1]);
    r.n = std::stoll(fields[2]);
    r.delta = std::stod(fields[3]);
    r.k = std::stoi(fields[4]);
    r.method = fields[5];
    r.replicate = std::stoi(fields[6]);
    r.rho = std::stod(fields[7]);
    r.wall_ms = std::stod(fields[8]);
    r.comm_floats = std::stoull(fields[9]);
  } catch (const std::exception&) {
    throw IoError("unparseable record line: " + line);
  }
  return r;
}

void write_records_csv(const std::vector<ExperimentRecord>& records,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kRecordCsvHeader << "\n";
  for (const auto& r : records) out << record_to_csv(r) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ExperimentRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kRecordCsvHeader) {
    throw IoError("bad or missing CSV header: " + path);
  }
  std::vector<ExperimentRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(record_from_csv(line));
  }
  return records;
}

}  // namespace dpca
