#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

#ifndef DPCA_CLI_PATH
#error "DPCA_CLI_PATH must point at the built dpca binary"
#endif

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  const std::string command = std::string(DPCA_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buffer;
  CmdResult result;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (fgets(buffer.data(), buffer.size(), pipe)) result.output += buffer.data();
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("dpca_cli_" + tag);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("gen writes deterministic partition files") {
  const auto dir1 = fresh_dir("gen1");
  const auto dir2 = fresh_dir("gen2");
  const std::string flags = "gen --d 5 --m 2 --n 10 --seed 12 --out ";
  CHECK(run_cli(flags + dir1.string()).exit_code == 0);
  CHECK(run_cli(flags + dir2.string()).exit_code == 0);
  CHECK(read_file(dir1 / "partition_0.bin") == read_file(dir2 / "partition_0.bin"));
  CHECK(read_file(dir1 / "partition_1.bin") == read_file(dir2 / "partition_1.bin"));
  // Payload: header (36 bytes) + 10 * 5 doubles.
  CHECK(fs::file_size(dir1 / "partition_0.bin") == 36 + 400);
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("gen rejects an unwritable output directory") {
  const auto result = run_cli("gen --d 5 --m 1 --n 5 --out /proc/nope/out");
  CHECK(result.exit_code == 4);
  CHECK(result.output.find("/proc/nope") != std::string::npos);
}

TEST_CASE("single-machine run equals the full-sample baseline") {
  const auto dir = fresh_dir("run_m1");
  const auto dp = run_cli("run --d 20 --m 1 --n 60 --k 2 --seed 5 --method DP --out " +
                          (dir / "dp").string());
  const auto fp = run_cli("run --d 20 --m 1 --n 60 --k 2 --seed 5 --method FP --out " +
                          (dir / "fp").string());
  REQUIRE(dp.exit_code == 0);
  REQUIRE(fp.exit_code == 0);
  const auto pick_rho = [](const std::string& text) {
    const auto pos = text.find("\"rho\": ");
    REQUIRE(pos != std::string::npos);
    return std::stod(text.substr(pos + 7));
  };
  CHECK(std::abs(pick_rho(dp.output) - pick_rho(fp.output)) <= 1e-10);
  fs::remove_all(dir);
}

TEST_CASE("run on generated data picks up the manifest ground truth") {
  const auto dir = fresh_dir("run_data");
  REQUIRE(run_cli("gen --d 16 --m 3 --n 40 --seed 9 --out " + dir.string())
              .exit_code == 0);
  const auto result = run_cli("run --m 3 --k 3 --data " + dir.string());
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("\"rho\": ") != std::string::npos);
  CHECK(result.output.find("\"rho\": null") == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("sweep/report pipeline emits csv, fit and plots") {
  const auto dir = fresh_dir("sweep");
  const auto sweep = run_cli(
      "sweep --synthetic --d 20,40 --m 2,4 --n 30,60 --lambda 24,48 --reps 2 "
      "--out " + dir.string());
  REQUIRE(sweep.exit_code == 0);
  CHECK(fs::exists(dir / "records.csv"));
  CHECK(fs::exists(dir / "fit.json"));
  CHECK(fs::exists(dir / "plots" / "rho_vs_d.svg"));
  CHECK(fs::exists(dir / "plots" / "rho_vs_delta.svg"));

  const auto report = run_cli("report --out " + dir.string());
  CHECK(report.exit_code == 0);
  CHECK(report.output.find("r_squared") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("verify exits zero on passing suites") {
  const auto result = run_cli("verify --suite sdp,center");
  CHECK(result.exit_code == 0);
  const bool has_pass =
      result.output.find("\"pass\": true") != std::string::npos ||
      result.output.find("\"pass\":true") != std::string::npos;
  CHECK(has_pass);
}

TEST_CASE("unreachable workers use exit code 3") {
  ::setenv("DPCA_TIMEOUT_SECS", "0.4", 1);
  const auto result = run_cli(
      "run --d 10 --m 2 --n 20 --k 1 --transport tcp "
      "--endpoints 127.0.0.1:1,127.0.0.1:2");
  ::unsetenv("DPCA_TIMEOUT_SECS");
  CHECK(result.exit_code == 3);
  CHECK(result.output.find("transport error") != std::string::npos);
}

TEST_CASE("duplicate endpoints are a config error") {
  const auto result = run_cli(
      "run --d 10 --m 2 --n 20 --transport tcp "
      "--endpoints 127.0.0.1:9,127.0.0.1:9");
  CHECK(result.exit_code == 4);
}

TEST_CASE("config errors use exit code 4") {
  CHECK(run_cli("run --method bogus").exit_code == 4);
  CHECK(run_cli("run --transport pigeon").exit_code == 4);
  CHECK(run_cli("sweep --mode nonsense --synthetic --out /tmp/dpca_cli_mode")
            .exit_code == 4);
  CHECK(run_cli("definitely-not-a-subcommand").exit_code == 4);
}
