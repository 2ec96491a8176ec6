#include "dpca/analysis.hpp"

#include <json.hpp>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

namespace dpca::analysis {
namespace {

constexpr double kDkRegime = 0.1;  // epsilon <= 1/10

double sqrt_k(int k) { return std::sqrt(static_cast<double>(k)); }

}  // namespace

ModelQuantities model_quantities(const Spectrum& spectrum, int k) {
  const int d = spectrum.size();
  if (k < 1 || k > d) throw InvalidInputError("model_quantities: K out of range");
  const double gap = k < d ? spectrum[k - 1] - spectrum[k]
                           : std::numeric_limits<double>::infinity();
  if (!(gap > 0.0)) {
    throw GapError("model_quantities: eigengap at K is zero");
  }
  ModelQuantities q;
  q.eigengap = gap;
  q.condition = spectrum[0] / gap;
  q.effective_rank = spectrum.values().sum() / spectrum[0];
  return q;
}

ModelQuantities model_quantities(const models::CovarianceModel& model, int k) {
  return model_quantities(model.spectrum(), k);
}

BoundReport theoretical_error_curve(const models::CovarianceModel& model, int k,
                                    int m, std::int64_t n, Regime regime) {
  if (m < 1 || n < 1) {
    throw InvalidInputError("theoretical_error_curve: need m, n >= 1");
  }
  const auto q = model_quantities(model, k);
  const double big_n = static_cast<double>(m) * static_cast<double>(n);
  BoundReport report;
  report.variance_term =
      q.condition * std::sqrt(k * q.effective_rank / big_n);
  report.bias_term = regime == Regime::kSymmetric
                         ? 0.0
                         : q.condition * q.condition * sqrt_k(k) *
                               q.effective_rank / static_cast<double>(n);
  return report;
}

BoundReport theoretical_error_curve(
    const std::vector<models::CovarianceModel>& machines, int k, std::int64_t n,
    Regime regime) {
  if (machines.empty()) {
    throw InvalidInputError("theoretical_error_curve: no machines");
  }
  const double m = static_cast<double>(machines.size());
  const double big_n = m * static_cast<double>(n);
  BoundReport report;
  double mean_s_sq = 0.0;
  double mean_b = 0.0;
  for (const auto& model : machines) {
    const auto q = model_quantities(model, k);
    const double s_l = q.condition * std::sqrt(k * q.effective_rank / big_n);
    const double b_l = q.condition * q.condition * sqrt_k(k) *
                       q.effective_rank / static_cast<double>(n);
    report.per_machine_variance.push_back(s_l);
    report.per_machine_bias.push_back(b_l);
    mean_s_sq += s_l * s_l / m;
    mean_b += b_l / m;
  }
  report.variance_term = std::sqrt(mean_s_sq);
  report.bias_term = regime == Regime::kSymmetric ? 0.0 : mean_b;
  return report;
}

BoundReport factor_error_curve(const models::FactorModelSpec& spec,
                               std::int64_t n) {
  const int m = spec.machines();
  const int k = spec.factors();
  std::vector<models::CovarianceModel> machines;
  machines.reserve(m);
  double hetero = 0.0;
  for (int l = 0; l < m; ++l) {
    const auto cov = spec.population_covariance(l);
    const auto eig = linalg::sym_eig(cov);
    machines.emplace_back(eig.values, eig.vectors, k);
    const double residual_norm = linalg::sym_operator_norm(spec.residual_covs[l]);
    const Vector strengths = spec.factor_strengths(l);
    hetero += sqrt_k(k) * residual_norm / strengths[k - 1] / m;
  }
  BoundReport report = theoretical_error_curve(machines, k, n, Regime::kGeneral);
  report.heterogeneity_term = hetero;
  return report;
}

DkReport check_dk_expansion(const SymMatrix& a, const SymMatrix& e,
                            IndexWindow window) {
  const int d = a.dim();
  if (e.dim() != d) throw InvalidInputError("check_dk_expansion: dim mismatch");
  const int k = window.count;
  const auto base = linalg::sym_eig(a);
  const double gap = linalg::window_gap(base.values, window);
  if (!(gap > 0.0)) throw GapError("check_dk_expansion: zero window gap");

  DkReport report;
  report.epsilon = linalg::sym_operator_norm(e) / gap;
  report.in_regime = report.epsilon <= kDkRegime;

  const Matrix u = base.vectors.data().middleCols(window.start, k);
  const auto perturbed = linalg::sym_eig(SymMatrix(a.data() + e.data()));
  const Matrix u_hat = perturbed.vectors.data().middleCols(window.start, k);

  const Matrix f = linalg::dk_linear_term(base.values, base.vectors, window, e);
  report.f_norm = f.norm();

  // Alignment through the matrix sign of U_hat^T U; if the overlap is
  // singular (subspaces nearly orthogonal) we are far out of regime and the
  // residuals are reported without alignment.
  Matrix u_hat_aligned = u_hat;
  bool aligned = true;
  try {
    u_hat_aligned = u_hat * linalg::matrix_sign(u_hat.transpose() * u);
  } catch (const SingularityError&) {
    aligned = false;
  }

  const Matrix p = u * u.transpose();
  const Matrix p_hat = u_hat * u_hat.transpose();
  const Matrix symmetrized = f * u.transpose() + u * f.transpose();

  report.projector_distance = (p_hat - p).norm();
  report.projector_residual = (p_hat - p - symmetrized).norm();
  report.aligned_distance = aligned ? (u_hat_aligned - u).norm()
                                    : std::numeric_limits<double>::quiet_NaN();
  report.align_residual = aligned ? (u_hat_aligned - u - f).norm()
                                  : std::numeric_limits<double>::quiet_NaN();
  report.symmetrized_identity_gap =
      std::abs(symmetrized.norm() - std::sqrt(2.0) * report.f_norm);

  const double eps = report.epsilon;
  report.slack_second_order =
      24.0 * sqrt_k(k) * eps * eps - report.projector_residual;
  if (aligned) {
    report.slack_align_residual = 9.0 * eps * report.f_norm - report.align_residual;
    const double lower1 = report.f_norm / (1.0 + 5.0 * eps);
    const double upper1 = report.f_norm / (1.0 - 5.0 * eps);
    report.slack_align_sandwich = std::min(report.aligned_distance - lower1,
                                           upper1 - report.aligned_distance);
  } else {
    report.slack_align_residual = -std::numeric_limits<double>::infinity();
    report.slack_align_sandwich = -std::numeric_limits<double>::infinity();
  }
  const double lower3 = std::sqrt(2.0) * report.f_norm / (1.0 + 7.0 * eps);
  const double upper3 = std::sqrt(2.0) * report.f_norm / (1.0 - 7.0 * eps);
  report.slack_projector_sandwich = std::min(report.projector_distance - lower3,
                                             upper3 - report.projector_distance);
  return report;
}

SigmaStarReport estimate_sigma_star(const models::CovarianceModel& model,
                                    models::InnovationKind kind, std::int64_t n,
                                    int k, int replicates, std::uint64_t seed) {
  if (replicates < 100) {
    throw InvalidInputError("estimate_sigma_star: need at least 100 replicates");
  }
  const int d = model.dim();
  constexpr int kBatches = 10;
  const int per_batch = replicates / kBatches;

  Matrix total = Matrix::Zero(d, d);
  std::vector<Matrix> batch_sums(kBatches, Matrix::Zero(d, d));
  std::vector<int> batch_counts(kBatches, 0);
  for (int b = 0; b < replicates; ++b) {
    models::Partition partition =
        kind == models::InnovationKind::kSphereMixtureAdversarial
            ? models::sample_adversarial(model.spectrum()[0], d, n,
                                         static_cast<std::uint32_t>(b), seed)
            : models::sample_partition(model, kind, n,
                                       static_cast<std::uint32_t>(b), seed);
    const auto estimate = estimator::local_pca(partition, k);
    const Matrix proj = estimate.frame.data() * estimate.frame.data().transpose();
    total += proj;
    const int batch = std::min(b / std::max(1, per_batch), kBatches - 1);
    batch_sums[batch] += proj;
    batch_counts[batch] += 1;
  }

  const Frame truth = model.leading_frame();
  SigmaStarReport report{
      SymMatrix(Matrix(total / static_cast<double>(replicates))),
      Frame(Matrix::Identity(d, k)), 0.0, 0.0, {}, 0.0};
  const auto top = linalg::top_k_eigen(report.sigma_star, k,
                                       linalg::SolverPolicy::kDense);
  report.v_star = top.vectors;
  report.rho_bias = linalg::subspace_distance(report.v_star, truth);

  double mean_batch_rho = 0.0;
  for (int g = 0; g < kBatches; ++g) {
    const SymMatrix batch_mean(
        Matrix(batch_sums[g] / static_cast<double>(batch_counts[g])));
    const auto batch_top =
        linalg::top_k_eigen(batch_mean, k, linalg::SolverPolicy::kDense);
    const double rho_g = linalg::subspace_distance(batch_top.vectors, truth);
    report.batch_rho.push_back(rho_g);
    mean_batch_rho += rho_g / kBatches;
  }
  report.mc_se = mean_batch_rho / std::sqrt(static_cast<double>(kBatches));

  // Basis-aligned diagonality check: the top-K x bulk block of
  // V^T Sigma* V vanishes in expectation under symmetric innovation.
  const Matrix rotated = model.basis().data().transpose() *
                         report.sigma_star.data() * model.basis().data();
  double max_offdiag = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = k; j < d; ++j) {
      max_offdiag = std::max(max_offdiag, std::abs(rotated(i, j)));
    }
  }
  report.max_top_bulk_offdiag = max_offdiag;
  return report;
}

RegressionFit fit_scaling_regression(const std::vector<ExperimentRecord>& records,
                                     bool aggregate_cells) {
  if (records.empty()) {
    throw InvalidInputError("fit_scaling_regression: no records");
  }

  // Rows: one per cell (mean rho) or one per record.
  struct Row {
    double log_d, log_m, log_n, log_delta, log_rho;
  };
  std::vector<Row> rows;
  if (aggregate_cells) {
    std::map<std::tuple<int, int, std::int64_t, double, int, std::string>,
             std::pair<double, int>>
        cells;
    for (const auto& r : records) {
      auto& cell = cells[{r.d, r.m, r.n, r.delta, r.k, r.method}];
      cell.first += r.rho;
      cell.second += 1;
    }
    for (const auto& [key, sum_count] : cells) {
      const double mean = sum_count.first / sum_count.second;
      if (!(mean > 0.0)) {
        throw InvalidInputError("fit_scaling_regression: nonpositive mean error");
      }
      rows.push_back({std::log(static_cast<double>(std::get<0>(key))),
                      std::log(static_cast<double>(std::get<1>(key))),
                      std::log(static_cast<double>(std::get<2>(key))),
                      std::log(std::get<3>(key)), std::log(mean)});
    }
  } else {
    for (const auto& r : records) {
      if (!(r.rho > 0.0)) {
        throw InvalidInputError("fit_scaling_regression: nonpositive error");
      }
      rows.push_back({std::log(static_cast<double>(r.d)),
                      std::log(static_cast<double>(r.m)),
                      std::log(static_cast<double>(r.n)), std::log(r.delta),
                      std::log(r.rho)});
    }
  }

  static const char* kNames[4] = {"log_d", "log_m", "log_n", "log_delta"};
  const auto covariate = [](const Row& row, int j) {
    switch (j) {
      case 0: return row.log_d;
      case 1: return row.log_m;
      case 2: return row.log_n;
      default: return row.log_delta;
    }
  };

  RegressionFit fit;
  fit.rows = static_cast<int>(rows.size());
  std::vector<int> active;
  for (int j = 0; j < 4; ++j) {
    double lo = covariate(rows.front(), j), hi = lo;
    for (const auto& row : rows) {
      lo = std::min(lo, covariate(row, j));
      hi = std::max(hi, covariate(row, j));
    }
    if (hi - lo > 1e-12) {
      active.push_back(j);
      fit.fitted[j] = true;
    } else {
      fit.exponents[j] = std::numeric_limits<double>::quiet_NaN();
      fit.dropped.push_back(kNames[j]);
    }
  }
  if (static_cast<int>(rows.size()) < static_cast<int>(active.size()) + 1) {
    throw InvalidInputError("fit_scaling_regression: more covariates than rows");
  }

  Matrix design(rows.size(), active.size() + 1);
  Vector response(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < active.size(); ++j) {
      design(i, j + 1) = covariate(rows[i], active[j]);
    }
    response[i] = rows[i].log_rho;
  }
  const Vector beta = design.colPivHouseholderQr().solve(response);
  fit.intercept = beta[0];
  for (std::size_t j = 0; j < active.size(); ++j) {
    fit.exponents[active[j]] = beta[j + 1];
  }

  const double ss_res = (response - design * beta).squaredNorm();
  const double mean_y = response.mean();
  const double ss_tot = (response.array() - mean_y).square().sum();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

// ----- JSON emission ----------------------------------------------------------

std::string to_json(const BoundReport& report) {
  nlohmann::json j;
  j["variance_term"] = report.variance_term;
  j["bias_term"] = report.bias_term;
  j["heterogeneity_term"] = report.heterogeneity_term;
  j["total"] = report.total();
  if (!report.per_machine_variance.empty()) {
    j["per_machine_variance"] = report.per_machine_variance;
    j["per_machine_bias"] = report.per_machine_bias;
  }
  return j.dump();
}

std::string to_json(const DkReport& report) {
  nlohmann::json j;
  j["epsilon"] = report.epsilon;
  j["in_regime"] = report.in_regime;
  j["f_norm"] = report.f_norm;
  j["align_residual"] = report.align_residual;
  j["projector_residual"] = report.projector_residual;
  j["projector_distance"] = report.projector_distance;
  j["aligned_distance"] = report.aligned_distance;
  j["slack_second_order"] = report.slack_second_order;
  j["slack_align_residual"] = report.slack_align_residual;
  j["slack_align_sandwich"] = report.slack_align_sandwich;
  j["slack_projector_sandwich"] = report.slack_projector_sandwich;
  j["symmetrized_identity_gap"] = report.symmetrized_identity_gap;
  j["all_hold"] = report.all_hold();
  return j.dump();
}

std::string to_json(const RegressionFit& fit) {
  nlohmann::json j;
  j["intercept"] = fit.intercept;
  const char* names[4] = {"beta_d", "beta_m", "beta_n", "beta_delta"};
  for (int i = 0; i < 4; ++i) {
    if (fit.fitted[i]) {
      j[names[i]] = fit.exponents[i];
    } else {
      j[names[i]] = nullptr;
    }
  }
  j["r_squared"] = fit.r_squared;
  j["dropped"] = fit.dropped;
  j["rows"] = fit.rows;
  return j.dump();
}

}  // namespace dpca::analysis
