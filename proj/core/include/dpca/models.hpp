#pragma once

#include "dpca/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dpca::models {

// Ground-truth population covariance Sigma = V Lambda V^T together with the
// target rank K and the derived quantities the error bounds are stated in.
class CovarianceModel {
 public:
  CovarianceModel(Spectrum spectrum, Frame basis, int target_rank);

  int dim() const { return basis_.dim(); }
  int target_rank() const { return target_rank_; }
  const Spectrum& spectrum() const { return spectrum_; }
  const Frame& basis() const { return basis_; }
  Frame leading_frame() const;  // first K basis columns
  SymMatrix covariance() const;

  double eigengap() const { return eigengap_; }          // Delta = l_K - l_{K+1}
  double condition_number() const { return kappa_; }     // kappa = l_1 / Delta
  double effective_rank() const { return eff_rank_; }    // r = Tr(Sigma) / l_1
  bool identity_basis() const { return identity_basis_; }

 private:
  Spectrum spectrum_;
  Frame basis_;
  int target_rank_;
  double eigengap_;
  double kappa_;
  double eff_rank_;
  bool identity_basis_;
};

enum class InnovationKind {
  kGaussian,
  kRademacher,
  kSphereMixtureAdversarial,  // the D(lambda) family; use sample_adversarial
  kCustomSymmetric            // independent uniform on [-sqrt(3), sqrt(3)]
};

std::string to_string(InnovationKind kind);
InnovationKind innovation_kind_from_string(const std::string& name);

// Whether the whitened vector Z is distribution-invariant under flipping the
// sign of any single coordinate. True for every kind shipped here; the
// adversarial family defeats aggregation through eigenvalue reordering at
// small n, not through a tilt of the eigenvectors.
bool is_symmetric_innovation(InnovationKind kind);

// One machine's sample block: n rows of dimension d.
struct Partition {
  std::uint32_t machine = 0;
  std::uint64_t seed = 0;  // stream seed the rows were drawn from
  Matrix data;             // n x d, one sample per row

  std::int64_t sample_count() const { return data.rows(); }
  int dim() const { return static_cast<int>(data.cols()); }
};

// Spiked covariance: spectrum (lambda, lambda/2, lambda/4, 1, ..., 1) on the
// identity basis, K = 3. Requires d >= 4 and lambda > 4 so the eigengap
// lambda/4 - 1 is positive.
CovarianceModel spiked_model(int d, double lambda);

// Single spike diag(lambda, 1, ..., 1) on the identity basis, K = 1.
// Requires d >= 2 and lambda > 1.
CovarianceModel single_spike_model(int d, double lambda);

// Draws n i.i.d. rows X = V Lambda^{1/2} Z with Z from the requested
// innovation. Deterministic given (master_seed, machine).
Partition sample_partition(const CovarianceModel& model, InnovationKind kind,
                           std::int64_t n, std::uint32_t machine,
                           std::uint64_t master_seed);

// Theorem-style adversarial family: with probability 1/2 the row is
// (+-sqrt(2 lambda), 0, ..., 0), otherwise (0, sqrt(2(d-1)) * uniform sphere
// point in the remaining d-1 coordinates). Population covariance
// diag(lambda, 1, ..., 1). Requires lambda >= 2 and d >= 2.
Partition sample_adversarial(double lambda, int d, std::int64_t n,
                             std::uint32_t machine, std::uint64_t master_seed);

// m covariance models sharing the top-K column space of one random basis;
// the bulk directions are re-randomized per machine.
std::vector<CovarianceModel> heterogeneous_common_eigenspace(
    int d, int k, int m, const std::vector<Spectrum>& spectra,
    std::uint64_t basis_seed);

// Per-machine factor structure X = B^(l) f + u with Cov(f) = I and
// Cov(u) = Sigma_u^(l). All B^(l) B^(l)T share the same top-K column space.
struct FactorModelSpec {
  std::vector<Matrix> loadings;          // d x K per machine
  std::vector<SymMatrix> residual_covs;  // d x d per machine
  Frame common_frame;                    // d x K basis of the shared space

  FactorModelSpec(std::vector<Matrix> loadings_in,
                  std::vector<SymMatrix> residual_covs_in, Frame common);

  int machines() const { return static_cast<int>(loadings.size()); }
  int dim() const { return common_frame.dim(); }
  int factors() const { return common_frame.rank(); }

  // Population covariance on machine l: B B^T + Sigma_u.
  SymMatrix population_covariance(int machine) const;
  // Factor strengths: eigenvalues of B B^T restricted to the shared space.
  Vector factor_strengths(int machine) const;
};

// Convenience builder: shared random top-K space, per-machine factor
// strengths, isotropic residual noise_sd^2 * I.
FactorModelSpec make_factor_spec(int d, int k, int m,
                                 const std::vector<Vector>& strengths,
                                 const std::vector<double>& noise_sd,
                                 std::uint64_t seed);

Partition factor_model(const FactorModelSpec& spec, std::int64_t n,
                       std::uint32_t machine, std::uint64_t master_seed);

// Random orthonormal d x k frame (QR of a Gaussian block); test/support helper.
Frame random_frame(int d, int k, std::uint64_t seed);

// ----- Partition on-disk format ------------------------------------------
//
// Little-endian binary: magic "DPCA", u32 version, u32 machine, u64 n,
// u64 d, u64 seed, then n*d float64 row-major sample values.

void write_partition(const Partition& partition, const std::string& path);
Partition read_partition(const std::string& path);

void write_partition_csv(const Partition& partition, const std::string& path);

std::uint64_t partition_file_bytes(std::int64_t n, int d);

}  // namespace dpca::models
