#include "dpca/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dpca::linalg {
namespace {

constexpr double kSignSingularTol = 1e-12;
constexpr double kIterativeResidualTol = 1e-10;
constexpr int kAutoIterativeDim = 2048;  // kAuto switches to block power above this

// Fix each column's sign so its largest-magnitude component is positive.
// Strict > while scanning keeps the lowest index on ties.
void apply_sign_convention(Matrix& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = std::abs(vectors(0, j));
    for (Eigen::Index i = 1; i < vectors.rows(); ++i) {
      const double a = std::abs(vectors(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (vectors(arg, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

EigResult make_result(Vector values, Matrix vectors) {
  apply_sign_convention(vectors);
  return EigResult{Spectrum(std::move(values)), Frame(std::move(vectors))};
}

// Deterministic start block for the power iteration, independent of any
// caller RNG so results are bit-stable across runs and thread schedules.
Matrix deterministic_start_block(int dim, int k) {
  Matrix block(dim, k);
  std::uint64_t state = 0x6a09e667f3bcc908ULL ^
                        (static_cast<std::uint64_t>(dim) << 32) ^
                        static_cast<std::uint64_t>(k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < dim; ++i) {
      state += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = state;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      z ^= z >> 31;
      block(i, j) = static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
    }
  }
  return block;
}

Matrix orthonormalize(const Matrix& block) {
  Eigen::HouseholderQR<Matrix> qr(block);
  return qr.householderQ() * Matrix::Identity(block.rows(), block.cols());
}

struct IterativeOutcome {
  bool converged = false;
  Vector values;
  Matrix vectors;
};

// Block power iteration with Rayleigh-Ritz extraction. Converges when the
// subspace residual ||A V - V (V^T A V)||_F drops below tol * scale.
IterativeOutcome block_power_iteration(
    const std::function<Matrix(const Matrix&)>& apply, int dim, int k,
    double resid_tol, long max_iters) {
  IterativeOutcome out;
  Matrix v = orthonormalize(deterministic_start_block(dim, k));
  double scale = 1.0;
  double checkpoint_resid = std::numeric_limits<double>::infinity();
  for (long iter = 0; iter < max_iters; ++iter) {
    Matrix av = apply(v);
    scale = std::max(1.0, av.cwiseAbs().maxCoeff());
    const Matrix small = v.transpose() * av;  // k x k Rayleigh quotient
    const double resid = (av - v * small).norm();
    // A degenerate gap at index k makes progress geometric with ratio near
    // 1; hand such problems to the dense path instead of burning the
    // iteration budget.
    if (iter % 25 == 0) {
      if (resid > 0.5 * checkpoint_resid) return out;
      checkpoint_resid = resid;
    }
    if (resid <= resid_tol * scale) {
      Eigen::SelfAdjointEigenSolver<Matrix> ritz(
          Matrix(((small + small.transpose()) * 0.5)));
      // Ascending from Eigen; reverse to descending.
      Vector values = ritz.eigenvalues().reverse();
      Matrix vectors = v * ritz.eigenvectors().rowwise().reverse();
      out.converged = true;
      out.values = std::move(values);
      out.vectors = std::move(vectors);
      return out;
    }
    v = orthonormalize(av);
  }
  return out;
}

EigResult dense_top_k(const SymMatrix& mat, int k) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(mat.data());
  if (solver.info() != Eigen::Success) {
    throw Error("sym_eig: eigendecomposition failed to converge");
  }
  const int d = mat.dim();
  Vector values(k);
  Matrix vectors(d, k);
  for (int j = 0; j < k; ++j) {
    values[j] = solver.eigenvalues()[d - 1 - j];
    vectors.col(j) = solver.eigenvectors().col(d - 1 - j);
  }
  return make_result(std::move(values), std::move(vectors));
}

}  // namespace

EigResult sym_eig(const SymMatrix& mat) { return dense_top_k(mat, mat.dim()); }

EigResult top_k_eigen(const SymMatrix& mat, int k, SolverPolicy policy) {
  const int d = mat.dim();
  if (k < 1 || k > d) {
    throw InvalidInputError("top_k_eigen: K = " + std::to_string(k) +
                            " out of range [1, " + std::to_string(d) + "]");
  }
  const bool iterative =
      policy == SolverPolicy::kIterative ||
      (policy == SolverPolicy::kAuto && d > kAutoIterativeDim);
  if (iterative) {
    const auto apply = [&mat](const Matrix& x) -> Matrix {
      return mat.data().selfadjointView<Eigen::Lower>() * x;
    };
    auto outcome =
        block_power_iteration(apply, d, k, kIterativeResidualTol, 10L * d);
    if (outcome.converged) {
      return make_result(std::move(outcome.values), std::move(outcome.vectors));
    }
    // Stalled (tiny or negative gap); the dense path always terminates.
  }
  return dense_top_k(mat, k);
}

EigResult top_k_eigen_operator(
    const std::function<Matrix(const Matrix&)>& apply, int dim, int k,
    SolverPolicy policy) {
  if (k < 1 || k > dim) {
    throw InvalidInputError("top_k_eigen_operator: K out of range");
  }
  if (policy != SolverPolicy::kDense) {
    auto outcome =
        block_power_iteration(apply, dim, k, kIterativeResidualTol, 10L * dim);
    if (outcome.converged) {
      return make_result(std::move(outcome.values), std::move(outcome.vectors));
    }
  }
  // Materialize the operator and decompose densely.
  Matrix dense = apply(Matrix::Identity(dim, dim));
  return top_k_eigen(SymMatrix(std::move(dense)), k, SolverPolicy::kDense);
}

SymMatrix projection(const Frame& frame) {
  Matrix p = frame.data() * frame.data().transpose();
  return SymMatrix(std::move(p));
}

double subspace_distance(const Frame& u, const Frame& v) {
  if (u.dim() != v.dim() || u.rank() != v.rank()) {
    throw InvalidInputError("subspace_distance: dimension or rank mismatch");
  }
  // K - ||U^T V||_F^2 evaluated as the residual ||V - U(U^T V)||_F^2, which
  // is the same quantity without the cancellation that would floor the
  // result around 1e-8 for nearly identical spans. Symmetrized so the
  // distance is exactly order-independent; clamped against tiny negative
  // rounding.
  const Matrix overlap = u.data().transpose() * v.data();
  const double residual_uv = (v.data() - u.data() * overlap).squaredNorm();
  const double residual_vu =
      (u.data() - v.data() * overlap.transpose()).squaredNorm();
  return std::sqrt(std::max(0.0, residual_uv + residual_vu));
}

Vector sin_theta(const Frame& u, const Frame& v) {
  if (u.dim() != v.dim() || u.rank() != v.rank()) {
    throw InvalidInputError("sin_theta: dimension or rank mismatch");
  }
  Eigen::JacobiSVD<Matrix> svd(u.data().transpose() * v.data());
  Vector cosines = svd.singularValues();  // descending
  Vector sines(cosines.size());
  for (Eigen::Index i = 0; i < cosines.size(); ++i) {
    const double c = std::min(1.0, cosines[cosines.size() - 1 - i]);
    sines[i] = std::sqrt(std::max(0.0, 1.0 - c * c));
  }
  return sines;  // descending: smallest cosine first
}

Matrix matrix_sign(const Matrix& h) {
  if (h.rows() != h.cols() || h.rows() < 1) {
    throw InvalidInputError("matrix_sign: expected a square matrix");
  }
  Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues().minCoeff() <= kSignSingularTol) {
    throw SingularityError("matrix_sign: input is rank deficient (sigma_min = " +
                           std::to_string(svd.singularValues().minCoeff()) + ")");
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

Frame align(const Frame& candidate, const Frame& reference) {
  if (candidate.dim() != reference.dim() || candidate.rank() != reference.rank()) {
    throw InvalidInputError("align: dimension or rank mismatch");
  }
  const Matrix rotation =
      matrix_sign(candidate.data().transpose() * reference.data());
  return Frame(candidate.data() * rotation);
}

double window_gap(const Spectrum& spectrum, IndexWindow window) {
  const int d = spectrum.size();
  if (window.start < 0 || window.count < 1 || window.start + window.count > d) {
    throw InvalidInputError("window_gap: window out of range");
  }
  const double upper =
      window.start == 0
          ? std::numeric_limits<double>::infinity()
          : spectrum[window.start - 1] - spectrum[window.start];
  const int last = window.start + window.count;
  const double lower = last == d ? std::numeric_limits<double>::infinity()
                                 : spectrum[last - 1] - spectrum[last];
  return std::min(upper, lower);
}

Matrix dk_linear_term(const Spectrum& base_spectrum, const Frame& base_frame,
                      IndexWindow window, const SymMatrix& e) {
  const int d = base_frame.dim();
  if (base_frame.rank() != d) {
    throw InvalidInputError("dk_linear_term: base frame must have full rank d");
  }
  if (base_spectrum.size() != d || e.dim() != d) {
    throw InvalidInputError("dk_linear_term: dimension mismatch");
  }
  if (!(window_gap(base_spectrum, window) > 0.0)) {
    throw GapError("dk_linear_term: window eigengap is not positive");
  }
  const Matrix& basis = base_frame.data();
  Matrix result(d, window.count);
  for (int j = 0; j < window.count; ++j) {
    const int col = window.start + j;
    const Vector w = e.data() * basis.col(col);
    Vector coeffs = basis.transpose() * w;
    for (int i = 0; i < d; ++i) {
      if (i >= window.start && i < window.start + window.count) {
        coeffs[i] = 0.0;  // G_j annihilates the windowed span
      } else {
        coeffs[i] = -coeffs[i] / (base_spectrum[i] - base_spectrum[col]);
      }
    }
    result.col(j) = basis * coeffs;
  }
  return result;
}

double sym_operator_norm(const SymMatrix& mat) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(mat.data(),
                                               Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace dpca::linalg
