#include "dpca/estimator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace dpca::estimator {
namespace {

// Centered copy of the rows when centering is on; otherwise a cheap view.
Matrix effective_rows(const models::Partition& partition,
                      const PcaOptions& options) {
  if (!options.center) return partition.data;
  return partition.data.rowwise() - partition.data.colwise().mean();
}

double covariance_divisor(std::int64_t n, const PcaOptions& options) {
  if (options.unbiased_divisor && n > 1) return static_cast<double>(n - 1);
  return static_cast<double>(n);
}

SubspaceEstimate make_estimate(const models::Partition& partition, int k,
                               linalg::EigResult eig) {
  return SubspaceEstimate(partition.machine, std::move(eig.vectors),
                          Vector(eig.values.values().head(k)),
                          partition.sample_count());
}

// Tall data (n < d): eigenpairs of the covariance through the n x n gram
// matrix G = X X^T / divisor. For an eigenpair (mu, u) of G with mu > 0 the
// covariance eigenpair is (mu, X^T u / ||X^T u||).
linalg::EigResult gram_top_k(const Matrix& rows, double divisor, int k) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(
      Matrix((rows * rows.transpose()) / divisor));
  if (solver.info() != Eigen::Success) {
    throw Error("local_pca: gram eigendecomposition failed");
  }
  const Eigen::Index n = rows.rows();
  Vector values(k);
  Matrix vectors(rows.cols(), k);
  for (int j = 0; j < k; ++j) {
    const double mu = solver.eigenvalues()[n - 1 - j];
    if (!(mu > 0.0)) {
      throw GapError("local_pca: rank of the data block is below K");
    }
    values[j] = mu;
    Vector v = rows.transpose() * solver.eigenvectors().col(n - 1 - j);
    vectors.col(j) = v / v.norm();
  }
  // Match sym_eig's sign convention.
  for (int j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
  return linalg::EigResult{Spectrum(std::move(values)), Frame(std::move(vectors))};
}

}  // namespace

SubspaceEstimate::SubspaceEstimate(std::uint32_t machine_in, Frame frame_in,
                                   Vector eigenvalues, std::int64_t n)
    : machine(machine_in),
      frame(std::move(frame_in)),
      local_eigenvalues(std::move(eigenvalues)),
      sample_count(n) {
  if (local_eigenvalues.size() != frame.rank()) {
    throw InvalidInputError("SubspaceEstimate: eigenvalue count != rank");
  }
  for (Eigen::Index i = 0; i + 1 < local_eigenvalues.size(); ++i) {
    if (local_eigenvalues[i] < local_eigenvalues[i + 1] - 1e-12) {
      throw InvalidInputError("SubspaceEstimate: eigenvalues not descending");
    }
  }
}

SymMatrix sample_covariance(const models::Partition& partition,
                            const PcaOptions& options) {
  const Matrix rows = effective_rows(partition, options);
  const double divisor = covariance_divisor(partition.sample_count(), options);
  Matrix cov = Matrix::Zero(partition.dim(), partition.dim());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose(),
                                                 1.0 / divisor);
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return SymMatrix(std::move(cov));
}

SubspaceEstimate local_pca(const models::Partition& partition, int k,
                           const PcaOptions& options) {
  const int d = partition.dim();
  const std::int64_t n = partition.sample_count();
  if (k < 1 || k > d) {
    throw InvalidInputError("local_pca: K = " + std::to_string(k) +
                            " out of range [1, " + std::to_string(d) + "]");
  }
  if (options.solver == linalg::SolverPolicy::kIterative && k < d) {
    const Matrix rows = effective_rows(partition, options);
    const double divisor = covariance_divisor(n, options);
    const auto apply = [&rows, divisor](const Matrix& x) -> Matrix {
      return rows.transpose() * (rows * x) / divisor;
    };
    return make_estimate(partition, k,
                         linalg::top_k_eigen_operator(apply, d, k));
  }
  // The gram route is exact and cheaper whenever the block is tall.
  if (n < d && k <= n) {
    const Matrix rows = effective_rows(partition, options);
    return make_estimate(
        partition, k, gram_top_k(rows, covariance_divisor(n, options), k));
  }
  return make_estimate(
      partition, k,
      linalg::top_k_eigen(sample_covariance(partition, options), k,
                          options.solver));
}

AggregateResult aggregate(const std::vector<SubspaceEstimate>& estimates, int k,
                          const AggregateOptions& options) {
  if (estimates.empty()) {
    throw InvalidInputError("aggregate: empty estimate list");
  }
  const int d = estimates.front().frame.dim();
  const int rank = estimates.front().frame.rank();
  for (const auto& est : estimates) {
    if (est.frame.dim() != d) {
      throw InvalidInputError("aggregate: mixed dimensions across machines");
    }
    if (est.frame.rank() != rank) {
      throw InvalidInputError("aggregate: mixed ranks across machines");
    }
  }
  if (k < 1 || k > rank) {
    throw InvalidInputError("aggregate: K out of range [1, rank]");
  }

  // Fixed ascending-machine order makes the sum independent of arrival order.
  std::vector<const SubspaceEstimate*> ordered;
  ordered.reserve(estimates.size());
  for (const auto& est : estimates) ordered.push_back(&est);
  std::sort(ordered.begin(), ordered.end(),
            [](const SubspaceEstimate* a, const SubspaceEstimate* b) {
              return a->machine < b->machine;
            });

  const int m = static_cast<int>(ordered.size());
  std::vector<double> weights(m, 1.0 / m);
  if (options.weight_by_samples) {
    double total = 0.0;
    for (const auto* est : ordered) total += static_cast<double>(est->sample_count);
    for (int l = 0; l < m; ++l) {
      weights[l] = static_cast<double>(ordered[l]->sample_count) / total;
    }
  }

  // Stack the weighted frames; Sigma_tilde = W W^T without ever forming the
  // per-machine projectors.
  Matrix stacked(d, static_cast<Eigen::Index>(m) * rank);
  for (int l = 0; l < m; ++l) {
    stacked.middleCols(static_cast<Eigen::Index>(l) * rank, rank) =
        std::sqrt(weights[l]) * ordered[l]->frame.data();
  }

  const Eigen::Index cols = stacked.cols();
  Matrix sigma_tilde = Matrix::Zero(d, d);
  sigma_tilde.selfadjointView<Eigen::Lower>().rankUpdate(stacked, 1.0);
  sigma_tilde.triangularView<Eigen::StrictlyUpper>() = sigma_tilde.transpose();

  Vector full_spectrum = Vector::Zero(d);
  Matrix top_vectors(d, k);
  if (cols < d) {
    // Nonzero spectrum of W W^T equals the spectrum of the small gram
    // W^T W; eigenvectors map through W. lambda_K >= min weight > 0, so the
    // scaling below never divides by a vanishing eigenvalue.
    Eigen::SelfAdjointEigenSolver<Matrix> gram(
        Matrix(stacked.transpose() * stacked));
    if (gram.info() != Eigen::Success) {
      throw Error("aggregate: gram eigendecomposition failed");
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      full_spectrum[j] = std::max(0.0, gram.eigenvalues()[cols - 1 - j]);
    }
    for (int j = 0; j < k; ++j) {
      Vector v = stacked * gram.eigenvectors().col(cols - 1 - j);
      top_vectors.col(j) = v / v.norm();
    }
    for (int j = 0; j < k; ++j) {
      Eigen::Index arg = 0;
      top_vectors.col(j).cwiseAbs().maxCoeff(&arg);
      if (top_vectors(arg, j) < 0.0) top_vectors.col(j) = -top_vectors.col(j);
    }
  } else {
    const auto eig = linalg::sym_eig(SymMatrix(sigma_tilde));
    full_spectrum = eig.values.values();
    top_vectors = eig.vectors.data().leftCols(k);
  }

  AggregateResult result{SymMatrix(std::move(sigma_tilde)),
                         Frame(std::move(top_vectors)),
                         Spectrum(std::move(full_spectrum)),
                         std::nullopt,
                         CommLedger{}};
  result.ledger.per_machine_floats.assign(m, 0);
  for (int l = 0; l < m; ++l) {
    const auto floats =
        static_cast<std::uint64_t>(ordered[l]->frame.rank()) * d;
    result.ledger.per_machine_floats[l] = floats;
    result.ledger.frames_floats += floats;
    result.ledger.local_eigenvalue_floats += ordered[l]->frame.rank();
  }
  return result;
}

Vector rayleigh_refine(const std::vector<SymMatrix>& local_covariances,
                       const Frame& frame) {
  if (local_covariances.empty()) {
    throw InvalidInputError("rayleigh_refine: no local covariances");
  }
  Vector refined = Vector::Zero(frame.rank());
  for (const auto& cov : local_covariances) {
    if (cov.dim() != frame.dim()) {
      throw InvalidInputError("rayleigh_refine: dimension mismatch");
    }
    for (int j = 0; j < frame.rank(); ++j) {
      refined[j] += frame.data().col(j).dot(cov.data() * frame.data().col(j));
    }
  }
  return refined / static_cast<double>(local_covariances.size());
}

SubspaceEstimate full_sample_pca(const std::vector<models::Partition>& partitions,
                                 int k, const PcaOptions& options) {
  if (partitions.empty()) {
    throw InvalidInputError("full_sample_pca: no partitions");
  }
  const int d = partitions.front().dim();
  std::int64_t total = 0;
  for (const auto& p : partitions) {
    if (p.dim() != d) {
      throw InvalidInputError("full_sample_pca: mixed dimensions");
    }
    total += p.sample_count();
  }
  models::Partition pooled;
  pooled.machine = partitions.front().machine;
  pooled.seed = partitions.front().seed;
  pooled.data.resize(total, d);
  Eigen::Index row = 0;
  for (const auto& p : partitions) {
    pooled.data.middleRows(row, p.sample_count()) = p.data;
    row += p.sample_count();
  }
  return local_pca(pooled, k, options);
}

AggregateResult dp_extra(const std::vector<models::Partition>& partitions, int k,
                         int extra, const PcaOptions& options,
                         const AggregateOptions& agg_options) {
  if (partitions.empty()) {
    throw InvalidInputError("dp_extra: no partitions");
  }
  if (extra < 0 || k + extra > partitions.front().dim()) {
    throw InvalidInputError("dp_extra: K + extra exceeds dimension");
  }
  std::vector<SubspaceEstimate> estimates;
  estimates.reserve(partitions.size());
  for (const auto& p : partitions) {
    estimates.push_back(local_pca(p, k + extra, options));
  }
  return aggregate(estimates, k, agg_options);
}

}  // namespace dpca::estimator
