#pragma once

#include "dpca/estimator.hpp"
#include "dpca/linalg.hpp"
#include "dpca/models.hpp"
#include "dpca/records.hpp"
#include "dpca/types.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dpca::analysis {

struct ModelQuantities {
  double eigengap = 0.0;       // Delta = lambda_K - lambda_{K+1}
  double condition = 0.0;      // kappa = lambda_1 / Delta
  double effective_rank = 0.0; // r = Tr(Sigma) / lambda_1
};

// Exact arithmetic from the spectrum at the given K. Throws GapError when
// the gap vanishes.
ModelQuantities model_quantities(const models::CovarianceModel& model, int k);
ModelQuantities model_quantities(const Spectrum& spectrum, int k);

enum class Regime { kSymmetric, kGeneral };

// Shape-only reference curves: every unspecified universal constant is set
// to 1, so only the scaling in (K, r, kappa, m, n) is meaningful.
struct BoundReport {
  double variance_term = 0.0;       // kappa sqrt(K r / N)
  double bias_term = 0.0;           // kappa^2 sqrt(K) r / n (0 under symmetry)
  double heterogeneity_term = 0.0;  // factor models only
  std::vector<double> per_machine_variance;  // S_l, heterogeneous case
  std::vector<double> per_machine_bias;      // B_l

  double total() const { return variance_term + bias_term + heterogeneity_term; }
};

BoundReport theoretical_error_curve(const models::CovarianceModel& model, int k,
                                    int m, std::int64_t n, Regime regime);
BoundReport theoretical_error_curve(
    const std::vector<models::CovarianceModel>& machines, int k, std::int64_t n,
    Regime regime);
// Heterogeneous factor models: adds the residual-over-factor-strength term.
BoundReport factor_error_curve(const models::FactorModelSpec& spec,
                               std::int64_t n);

// Numerical check of the high-order eigenspace expansion around one
// symmetric perturbation. `epsilon` is ||E||_2 / Delta; the inequality suite
// is asserted only when epsilon <= 1/10 (otherwise the report is flagged
// out-of-regime and all_hold() is vacuously false).
struct DkReport {
  double epsilon = 0.0;
  bool in_regime = false;
  double f_norm = 0.0;              // ||f(EU)||_F
  double align_residual = 0.0;      // ||U_hat H_hat - U - f(EU)||_F
  double projector_residual = 0.0;  // ||P_hat - P - (f U^T + U f^T)||_F
  double projector_distance = 0.0;  // ||P_hat - P||_F
  double aligned_distance = 0.0;    // ||U_hat H_hat - U||_F

  // Slacks (bound minus value; all must be >= 0 in regime).
  double slack_second_order = 0.0;      // 24 sqrt(K) eps^2 - projector_residual
  double slack_align_residual = 0.0;    // 9 eps ||f|| - align_residual
  double slack_align_sandwich = 0.0;    // two-sided bound on ||U_hat H_hat - U||
  double slack_projector_sandwich = 0.0;// two-sided bound on ||P_hat - P||
  double symmetrized_identity_gap = 0.0;// | ||fU^T+U f^T||_F - sqrt(2)||f||_F |

  bool all_hold() const {
    return in_regime && slack_second_order >= 0.0 && slack_align_residual >= 0.0 &&
           slack_align_sandwich >= 0.0 && slack_projector_sandwich >= 0.0 &&
           symmetrized_identity_gap <= 1e-9;
  }
};

DkReport check_dk_expansion(const SymMatrix& a, const SymMatrix& e,
                            IndexWindow window);

// Monte Carlo estimate of Sigma* = E[V_hat_K V_hat_K^T] from `replicates`
// independent single-machine runs, with a batch-means (10 batches) scale for
// the bias estimate.
struct SigmaStarReport {
  SymMatrix sigma_star;
  Frame v_star;
  double rho_bias = 0.0;  // rho(V*_K, true V_K)
  // Scale rho_bias is expected to have when the true bias is zero: batch
  // rho values shrink by sqrt(#batches) when averaged, so mc_se is
  // mean(batch rho) / sqrt(#batches).
  double mc_se = 0.0;
  std::vector<double> batch_rho;
  double max_top_bulk_offdiag = 0.0;  // max |(V^T Sigma* V)_{ij}|, i <= K < j
};

SigmaStarReport estimate_sigma_star(const models::CovarianceModel& model,
                                    models::InnovationKind kind, std::int64_t n,
                                    int k, int replicates, std::uint64_t seed);

// Ordinary least squares of log(rho) on (log d, log m, log n, log delta).
// Covariates with fewer than two distinct values are dropped (reported in
// `dropped`) and the fit proceeds on the rest.
struct RegressionFit {
  double intercept = 0.0;
  std::array<double, 4> exponents{};  // d, m, n, delta; NaN when dropped
  std::array<bool, 4> fitted{};
  double r_squared = 0.0;
  std::vector<std::string> dropped;
  int rows = 0;
};

RegressionFit fit_scaling_regression(const std::vector<ExperimentRecord>& records,
                                     bool aggregate_cells = true);

// JSON emission with fixed field names (documented in the README).
std::string to_json(const BoundReport& report);
std::string to_json(const DkReport& report);
std::string to_json(const RegressionFit& fit);

}  // namespace dpca::analysis
