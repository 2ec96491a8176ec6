#pragma once

#include "dpca/linalg.hpp"
#include "dpca/models.hpp"
#include "dpca/types.hpp"

#include <optional>
#include <vector>

namespace dpca::estimator {

// One worker's contribution: its local leading eigenvectors plus the
// matching eigenvalue estimates.
struct SubspaceEstimate {
  std::uint32_t machine = 0;
  Frame frame;                 // d x rank, rank = K (or K + x)
  Vector local_eigenvalues;    // length rank, descending
  std::int64_t sample_count = 0;

  SubspaceEstimate(std::uint32_t machine_in, Frame frame_in, Vector eigenvalues,
                   std::int64_t n);
};

struct CommLedger {
  // Frames round, split so the O(mKd) headline stays auditable against the
  // frame payloads alone.
  std::uint64_t frames_floats = 0;            // sum over machines of rank * d
  std::uint64_t local_eigenvalue_floats = 0;  // diagnostics riding along
  // Optional eigenvalue round.
  std::uint64_t broadcast_floats = 0;         // m * K * d
  std::uint64_t rayleigh_reply_floats = 0;    // m * K
  // Encoded wire traffic (headers included), both directions.
  std::uint64_t bytes_to_coordinator = 0;
  std::uint64_t bytes_to_workers = 0;
  std::vector<std::uint64_t> per_machine_floats;  // frames round, by machine

  std::uint64_t total_floats() const {
    return frames_floats + local_eigenvalue_floats + broadcast_floats +
           rayleigh_reply_floats;
  }
};

struct AggregateResult {
  SymMatrix average_projector;        // Sigma_tilde
  Frame frame;                        // V_tilde_K
  Spectrum projector_spectrum;        // full spectrum of Sigma_tilde
  std::optional<Vector> refined_eigenvalues;  // filled by the eigenvalue round
  CommLedger ledger;
};

struct PcaOptions {
  // Covariance uses divisor n and no centering, matching the estimator the
  // bounds are stated for; both are overridable for real-data use.
  bool center = false;
  bool unbiased_divisor = false;  // divisor n - 1 instead of n
  linalg::SolverPolicy solver = linalg::SolverPolicy::kAuto;
};

// Sample covariance of one partition under the given options.
SymMatrix sample_covariance(const models::Partition& partition,
                            const PcaOptions& options = {});

// Top-K eigenvectors and eigenvalues of the local sample covariance. The
// covariance is never materialized when a cheaper route (gram matrix for
// n < d, or block power iteration on the data operator) reaches the same
// result within tolerance.
SubspaceEstimate local_pca(const models::Partition& partition, int k,
                           const PcaOptions& options = {});

struct AggregateOptions {
  // Unweighted averaging is the algorithm as stated; weighting by sample
  // count is available for heterogeneous n but off by default.
  bool weight_by_samples = false;
};

// Averages the frame projectors (in ascending machine order, so results are
// independent of arrival order) and re-extracts the leading K eigenvectors.
AggregateResult aggregate(const std::vector<SubspaceEstimate>& estimates, int k,
                          const AggregateOptions& options = {});

// lambda_tilde_j = (1/m) sum_l v_j^T Sigma_hat^(l) v_j.
Vector rayleigh_refine(const std::vector<SymMatrix>& local_covariances,
                       const Frame& frame);

// PCA on the pooled covariance over all partitions; equals local_pca on the
// concatenated sample.
SubspaceEstimate full_sample_pca(const std::vector<models::Partition>& partitions,
                                 int k, const PcaOptions& options = {});

// Workers transmit K + extra eigenvectors; the coordinator averages the
// rank-(K+extra) projectors and truncates back to K. extra = 0 is exactly
// the one-shot algorithm.
AggregateResult dp_extra(const std::vector<models::Partition>& partitions, int k,
                         int extra, const PcaOptions& options = {},
                         const AggregateOptions& agg_options = {});

}  // namespace dpca::estimator
