#pragma once

#include "dpca/types.hpp"

#include <functional>

namespace dpca::linalg {

struct EigResult {
  Spectrum values;
  Frame vectors;
};

enum class SolverPolicy {
  kAuto,      // dense decomposition; switches to block power iteration for large dim
  kDense,     // tridiagonalization + implicit QR (always)
  kIterative  // block power iteration with Rayleigh-Ritz refinement
};

// Full spectral decomposition mat = V diag(lambda) V^T, eigenvalues descending.
// Each eigenvector is scaled so that its largest-magnitude component is
// positive (ties broken by lowest index), which makes results reproducible.
EigResult sym_eig(const SymMatrix& mat);

// Leading K eigenpairs; agrees with the first K of sym_eig within 1e-8 in
// subspace distance. The iterative policy runs block power iteration to a
// subspace residual of 1e-10 (at most 10*d iterations) and falls back to the
// dense path if it stalls.
EigResult top_k_eigen(const SymMatrix& mat, int k,
                      SolverPolicy policy = SolverPolicy::kAuto);

// Leading K eigenpairs of a symmetric operator given only through
// matrix-block products (apply(X) = A * X for a d x b block X). Used to run
// PCA on tall data without materializing the d x d covariance.
EigResult top_k_eigen_operator(
    const std::function<Matrix(const Matrix&)>& apply, int dim, int k,
    SolverPolicy policy = SolverPolicy::kIterative);

// P = F F^T. Idempotent with trace K.
SymMatrix projection(const Frame& frame);

// rho(U, V) = || U U^T - V V^T ||_F, evaluated through the stable identity
// sqrt(max(0, 2K - 2 ||U^T V||_F^2)). Range [0, sqrt(2K)].
double subspace_distance(const Frame& u, const Frame& v);

// Sines of the principal angles between Col(U) and Col(V), descending.
// Satisfies rho^2 = 2 * sum(sin^2 theta_i).
Vector sin_theta(const Frame& u, const Frame& v);

// Matrix sign function of a full-rank square H: sum of u_j v_j^T over the
// positive singular values. Throws SingularityError when the smallest
// singular value is <= 1e-12.
Matrix matrix_sign(const Matrix& h);

// Rotates `candidate` by the orthonormal R minimizing ||candidate * R - reference||_F
// (orthogonal Procrustes). The span is unchanged.
Frame align(const Frame& candidate, const Frame& reference);

// Eigengap bounding an index window: min(lambda_{s} - lambda_{s+1},
// lambda_{s+K} - lambda_{s+K+1}) with lambda_0 = +inf, lambda_{d+1} = -inf
// (one-based indexing of the descending spectrum).
double window_gap(const Spectrum& spectrum, IndexWindow window);

// First-order perturbation of the windowed eigenspace: column j equals
// -G_j E u_{s+j} where G_j = sum_{i not in S} (lambda_i - lambda_{s+j})^{-1} u_i u_i^T.
// Every column is orthogonal to the span of the windowed frame.
Matrix dk_linear_term(const Spectrum& base_spectrum, const Frame& base_frame,
                      IndexWindow window, const SymMatrix& e);

// Spectral norm of a symmetric matrix.
double sym_operator_norm(const SymMatrix& mat);

}  // namespace dpca::linalg
