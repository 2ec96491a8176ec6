#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dpca::verify {

struct SuiteResult {
  std::string name;
  bool pass = false;
  int checks = 0;
  int failures = 0;
  double worst_slack = 0.0;  // minimum slack seen across checks
  std::string detail;
  std::vector<std::string> failing_cases;  // replay hints for failures
};

// Randomized high-order perturbation suite: `trials` (A, E, window) triples
// with epsilon <= 1/10 across d in {5, 20, 50} and K in {1, 3, 5}, interior
// windows included, plus a quadratic-decay ratio test on `decay_trials`.
SuiteResult run_dk_suite(int trials = 1000, int decay_trials = 100,
                         std::uint64_t seed = 20240601);

// Top-K projector maximizes Tr(P^T S) over the spectral-projection feasible
// set; `candidates` random feasible points per matrix.
SuiteResult run_sdp_suite(int matrices = 20, int candidates = 200,
                          std::uint64_t seed = 20240601);

// The aggregated frame minimizes the summed squared subspace distance to the
// individual estimates over `candidates` random orthonormal competitors.
SuiteResult run_center_suite(int trials = 5, int candidates = 200,
                             std::uint64_t seed = 20240601);

// Local eigenspaces are unbiased under Gaussian innovation: basis-aligned
// off-diagonal block <= 5/sqrt(B) and rho bias within 3 batch-scale errors.
SuiteResult run_unbiased_suite(int d = 20, std::int64_t n = 200, int k = 3,
                               int replicates = 2000,
                               std::uint64_t seed = 20240601);

// Undersampled mixture family: the aggregated leading direction is
// orthogonal to the true spike in >= 95% of replicates.
SuiteResult run_adversarial_suite(double lambda = 2.0, int d = 1600,
                                  std::int64_t n = 256, int m = 20,
                                  int replicates = 50,
                                  std::uint64_t seed = 20240601);

// Identical results and ledgers across in-memory, files and tcp transports;
// exact float counts; dead workers abort the run.
SuiteResult run_transport_suite(std::uint64_t seed = 20240601,
                                const std::string& scratch_dir = "");

std::vector<SuiteResult> run_suites(const std::vector<std::string>& names,
                                    std::uint64_t seed = 20240601);

std::string to_json(const SuiteResult& result);
std::string to_json(const std::vector<SuiteResult>& results);

}  // namespace dpca::verify
