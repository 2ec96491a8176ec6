#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpca/linalg.hpp"
#include "dpca/models.hpp"
#include "dpca/rng.hpp"

#include <cmath>

using namespace dpca;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// Test-side oracle: cyclic Jacobi rotations, independent of the library's
// tridiagonalization path.
void jacobi_eig(Matrix a, Vector& values, Matrix& vectors) {
  const int d = static_cast<int>(a.rows());
  vectors = Matrix::Identity(d, d);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        if (std::abs(a(p, q)) < 1e-18) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::JacobiRotation<double> rot(c, s);
        a.applyOnTheLeft(p, q, rot.adjoint());
        a.applyOnTheRight(p, q, rot);
        vectors.applyOnTheRight(p, q, rot);
      }
    }
  }
  values = a.diagonal();
}

Frame oracle_top_k(const SymMatrix& mat, int k) {
  Vector values;
  Matrix vectors;
  jacobi_eig(mat.data(), values, vectors);
  std::vector<int> order(mat.dim());
  for (int i = 0; i < mat.dim(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return values[i] > values[j]; });
  Matrix top(mat.dim(), k);
  for (int j = 0; j < k; ++j) top.col(j) = vectors.col(order[j]);
  return Frame(top);
}

SymMatrix gapped_random(int d, int k, double gap, std::uint64_t seed) {
  Vector values(d);
  CounterRng rng(seed);
  for (int i = 0; i < d; ++i) values[i] = 5.0 * rng.next_uniform();
  std::sort(values.data(), values.data() + d, std::greater<double>());
  for (int i = 0; i < k; ++i) values[i] += gap;
  const Frame basis = models::random_frame(d, d, seed ^ 0x77);
  return SymMatrix(basis.data() * values.asDiagonal() * basis.data().transpose());
}

}  // namespace

TEST_CASE("sym_eig on a diagonal matrix") {
  Matrix m = Vector::LinSpaced(3, 3.0, 1.0).asDiagonal();
  const auto eig = linalg::sym_eig(SymMatrix(m));
  CHECK(eig.values[0] == doctest::Approx(3.0));
  CHECK(eig.values[1] == doctest::Approx(2.0));
  CHECK(eig.values[2] == doctest::Approx(1.0));
  CHECK((eig.vectors.data() - Matrix::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("sym_eig 2x2 against the characteristic polynomial") {
  // Roots of x^2 - tr x + det for [[2,1],[1,2]].
  const double tr = 4.0, det = 3.0;
  const double disc = std::sqrt(tr * tr - 4.0 * det);
  const double l1 = (tr + disc) / 2.0, l2 = (tr - disc) / 2.0;
  const auto eig = linalg::sym_eig(SymMatrix(mat2(2, 1, 1, 2)));
  CHECK(eig.values[0] == doctest::Approx(l1).epsilon(1e-12));
  CHECK(eig.values[1] == doctest::Approx(l2).epsilon(1e-12));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(eig.vectors.data()(0, 0) == doctest::Approx(inv_sqrt2));
  CHECK(eig.vectors.data()(1, 0) == doctest::Approx(inv_sqrt2));
}

TEST_CASE("sym_eig on the identity satisfies the frame contract") {
  const auto eig = linalg::sym_eig(SymMatrix::Identity(5));
  for (int i = 0; i < 5; ++i) CHECK(eig.values[i] == doctest::Approx(1.0));
  const Matrix recon = eig.vectors.data() * eig.values.values().asDiagonal() *
                       eig.vectors.data().transpose();
  CHECK((recon - Matrix::Identity(5, 5)).norm() < 1e-12);
}

TEST_CASE("sym_eig rejects non-finite input") {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 0) = std::nan("");
  CHECK_THROWS_AS(SymMatrix{m}, InvalidInputError);
}

TEST_CASE("sym_eig reconstruction and sign convention on random input") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const SymMatrix a = gapped_random(30, 4, 1.0, seed);
    const auto eig = linalg::sym_eig(a);
    const Matrix recon = eig.vectors.data() * eig.values.values().asDiagonal() *
                         eig.vectors.data().transpose();
    CHECK((recon - a.data()).norm() <= 1e-9 * a.data().norm());
    const Matrix gram = eig.vectors.data().transpose() * eig.vectors.data();
    CHECK((gram - Matrix::Identity(30, 30)).cwiseAbs().maxCoeff() <= 1e-10);
    for (int j = 0; j < 30; ++j) {
      Eigen::Index arg = 0;
      eig.vectors.data().col(j).cwiseAbs().maxCoeff(&arg);
      CHECK(eig.vectors.data()(arg, j) > 0.0);
    }
  }
}

TEST_CASE("top_k_eigen selects the leading pairs") {
  Vector diag(4);
  diag << 5, 4, 1, 1;
  const auto top = linalg::top_k_eigen(SymMatrix(Matrix(diag.asDiagonal())), 2);
  CHECK(top.values[0] == doctest::Approx(5.0));
  CHECK(top.values[1] == doctest::Approx(4.0));
  Matrix e12 = Matrix::Identity(4, 2);
  CHECK(linalg::subspace_distance(top.vectors, Frame(e12)) < 1e-10);

  const auto one = linalg::top_k_eigen(SymMatrix(mat2(2, 1, 1, 2)), 1);
  CHECK(one.values[0] == doctest::Approx(3.0));
  CHECK(one.vectors.data()(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("top_k_eigen on a rank-1 matrix recovers the generator") {
  Vector v(3);
  v << 0.6, 0.0, -0.8;
  const auto top = linalg::top_k_eigen(SymMatrix(Matrix(v * v.transpose())), 1);
  CHECK(top.values[0] == doctest::Approx(1.0));
  // Sign convention: largest-magnitude component positive.
  CHECK(top.vectors.data()(2, 0) == doctest::Approx(0.8));
  CHECK(top.vectors.data()(0, 0) == doctest::Approx(-0.6));
}

TEST_CASE("top_k_eigen validates K") {
  CHECK_THROWS_AS(linalg::top_k_eigen(SymMatrix::Identity(3), 0), InvalidInputError);
  CHECK_THROWS_AS(linalg::top_k_eigen(SymMatrix::Identity(3), 4), InvalidInputError);
}

TEST_CASE("top_k_eigen agrees with a Jacobi oracle up to d = 50") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const int d = 5 + static_cast<int>(seed) * 4;
    const int k = 1 + static_cast<int>(seed % 4);
    const SymMatrix a = gapped_random(d, k, 0.8, 1000 + seed);
    const auto mine = linalg::top_k_eigen(a, k);
    const Frame oracle = oracle_top_k(a, k);
    CHECK(linalg::subspace_distance(mine.vectors, oracle) < 1e-8);
  }
}

TEST_CASE("iterative and dense policies agree on gapped input") {
  const SymMatrix a = gapped_random(300, 4, 2.0, 99);
  const auto dense = linalg::top_k_eigen(a, 4, linalg::SolverPolicy::kDense);
  const auto iterative = linalg::top_k_eigen(a, 4, linalg::SolverPolicy::kIterative);
  CHECK(linalg::subspace_distance(dense.vectors, iterative.vectors) < 1e-8);
  CHECK((dense.values.values() - iterative.values.values()).cwiseAbs().maxCoeff() <
        1e-8);
}

TEST_CASE("projection matrices are idempotent with trace K") {
  Matrix e1(2, 1);
  e1 << 1, 0;
  CHECK((linalg::projection(Frame(e1)).data() - mat2(1, 0, 0, 0)).norm() < 1e-14);

  Matrix diag_col(2, 1);
  diag_col << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  CHECK((linalg::projection(Frame(diag_col)).data() - mat2(.5, .5, .5, .5)).norm() <
        1e-12);

  Matrix e12 = Matrix::Identity(3, 2);
  const SymMatrix p = linalg::projection(Frame(e12));
  CHECK((p.data() * p.data() - p.data()).norm() < 1e-10);
  CHECK(p.data().trace() == doctest::Approx(2.0));
}

TEST_CASE("subspace distance basics") {
  Matrix e1(2, 1), e2(2, 1);
  e1 << 1, 0;
  e2 << 0, 1;
  CHECK(linalg::subspace_distance(Frame(e1), Frame(e1)) == 0.0);
  CHECK(linalg::subspace_distance(Frame(e1), Frame(e2)) ==
        doctest::Approx(std::sqrt(2.0)));

  Matrix u(3, 2), v(3, 2);
  u << 1, 0, 0, 1, 0, 0;
  v << 1, 0, 0, 0, 0, 1;
  // Direct Frobenius oracle on the projector difference.
  const Matrix pu = u * u.transpose();
  const Matrix pv = v * v.transpose();
  CHECK(linalg::subspace_distance(Frame(u), Frame(v)) ==
        doctest::Approx((pu - pv).norm()).epsilon(1e-12));
  CHECK(linalg::subspace_distance(Frame(u), Frame(v)) ==
        doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("subspace distance properties on random frames") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Frame u = models::random_frame(12, 3, seed * 2 + 1);
    const Frame v = models::random_frame(12, 3, seed * 2 + 2);
    const double rho = linalg::subspace_distance(u, v);
    CHECK(rho == linalg::subspace_distance(v, u));
    CHECK(rho >= 0.0);
    CHECK(rho <= std::sqrt(6.0) + 1e-12);
    // Rotation invariance.
    const Frame r = models::random_frame(3, 3, seed + 1000);
    const Frame rotated(u.data() * r.data());
    CHECK(std::abs(linalg::subspace_distance(rotated, v) - rho) < 1e-10);
    CHECK(linalg::subspace_distance(rotated, u) < 1e-10);
    // Identity with the principal angles.
    const Vector sines = linalg::sin_theta(u, v);
    CHECK(rho * rho ==
          doctest::Approx(2.0 * sines.squaredNorm()).epsilon(1e-8));
  }
  CHECK_THROWS_AS(linalg::subspace_distance(models::random_frame(4, 2, 1),
                                            models::random_frame(4, 3, 2)),
                  InvalidInputError);
}

TEST_CASE("sin_theta on known angles") {
  Matrix e1(2, 1);
  e1 << 1, 0;
  CHECK(linalg::sin_theta(Frame(e1), Frame(e1))[0] == doctest::Approx(0.0));

  const double angle = 30.0 * M_PI / 180.0;
  Matrix rot(2, 1);
  rot << std::cos(angle), std::sin(angle);
  CHECK(linalg::sin_theta(Frame(e1), Frame(rot))[0] == doctest::Approx(0.5));

  Matrix e2(2, 1);
  e2 << 0, 1;
  CHECK(linalg::sin_theta(Frame(e1), Frame(e2))[0] == doctest::Approx(1.0));
}

TEST_CASE("matrix sign function") {
  CHECK((linalg::matrix_sign(Matrix(0.3 * Matrix::Identity(3, 3))) -
         Matrix::Identity(3, 3))
            .norm() < 1e-12);

  Vector d(2);
  d << 2, -3;
  CHECK((linalg::matrix_sign(Matrix(d.asDiagonal())) - mat2(1, 0, 0, -1)).norm() <
        1e-12);

  const double angle = 40.0 * M_PI / 180.0;
  const Matrix rot = mat2(std::cos(angle), -std::sin(angle), std::sin(angle),
                          std::cos(angle));
  CHECK((linalg::matrix_sign(Matrix(0.7 * rot)) - rot).norm() < 1e-12);

  CHECK_THROWS_AS(linalg::matrix_sign(Matrix(Matrix::Zero(2, 2))),
                  SingularityError);
}

TEST_CASE("align restores sign and column order") {
  Matrix e1(3, 1);
  e1 << 1, 0, 0;
  const Frame reference(e1);
  const Frame flipped(Matrix(-e1));
  CHECK((linalg::align(flipped, reference).data() - e1).norm() < 1e-12);

  Matrix swapped(3, 2), ordered(3, 2);
  ordered << 1, 0, 0, 1, 0, 0;
  swapped << 0, 1, 1, 0, 0, 0;
  const Frame aligned = linalg::align(Frame(swapped), Frame(ordered));
  CHECK((aligned.data() - ordered).norm() < 1e-12);
  CHECK(linalg::subspace_distance(aligned, Frame(swapped)) < 1e-10);

  // Same orientation within 90 degrees: unchanged.
  const double angle = 50.0 * M_PI / 180.0;
  Matrix tilted(3, 1);
  tilted << std::cos(angle), std::sin(angle), 0;
  CHECK((linalg::align(Frame(tilted), reference).data() - tilted).norm() < 1e-12);

  Matrix e2(3, 1);
  e2 << 0, 0, 1;
  CHECK_THROWS_AS(linalg::align(Frame(e2), reference), SingularityError);
}

TEST_CASE("dk_linear_term on closed-form cases") {
  Vector diag(2);
  diag << 3, 1;
  const Spectrum spectrum(diag);
  const Frame basis(Matrix(Matrix::Identity(2, 2)));

  CHECK(linalg::dk_linear_term(spectrum, basis, {0, 1}, SymMatrix::Zero(2)).norm() ==
        0.0);

  const double eps = 0.01;
  const SymMatrix e(mat2(0, eps, eps, 0));
  const Matrix f = linalg::dk_linear_term(spectrum, basis, {0, 1}, e);
  CHECK(f(0, 0) == doctest::Approx(0.0));
  CHECK(f(1, 0) == doctest::Approx(0.005));

  // First-order prediction vs the exact eigenvector of A + E.
  const auto exact = linalg::sym_eig(SymMatrix(mat2(3, eps, eps, 1)));
  Vector predicted = basis.data().col(0) + f.col(0);
  Vector truth = exact.vectors.data().col(0);
  if (truth.dot(predicted) < 0) truth = -truth;
  CHECK((truth - predicted).norm() < 1e-4);
}

TEST_CASE("dk_linear_term annihilates window-supported perturbations") {
  const SymMatrix a = gapped_random(8, 2, 1.5, 17);
  const auto eig = linalg::sym_eig(a);
  const Matrix u = eig.vectors.data().leftCols(2);
  const SymMatrix e(Matrix(0.3 * u * u.transpose()));
  const Matrix f = linalg::dk_linear_term(eig.values, eig.vectors, {0, 2}, e);
  CHECK(f.norm() < 1e-12);
}

TEST_CASE("dk_linear_term columns are orthogonal to the window span") {
  const SymMatrix a = gapped_random(10, 3, 1.0, 23);
  const auto eig = linalg::sym_eig(a);
  CounterRng rng(5);
  Matrix e0(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j <= i; ++j) e0(i, j) = e0(j, i) = rng.next_gaussian();
  const Matrix f =
      linalg::dk_linear_term(eig.values, eig.vectors, {2, 3}, SymMatrix(e0));
  const Matrix u = eig.vectors.data().middleCols(2, 3);
  CHECK((u.transpose() * f).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("dk_linear_term matches finite differences at second order") {
  const SymMatrix a = gapped_random(15, 3, 2.0, 31);
  const auto eig = linalg::sym_eig(a);
  CounterRng rng(77);
  Matrix e0(15, 15);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j <= i; ++j) e0(i, j) = e0(j, i) = rng.next_gaussian();
  e0 /= linalg::sym_operator_norm(SymMatrix(e0));
  const Matrix u = eig.vectors.data().leftCols(3);
  const Matrix f = linalg::dk_linear_term(eig.values, eig.vectors, {0, 3},
                                          SymMatrix(e0));

  const auto residual = [&](double t) {
    const auto perturbed = linalg::sym_eig(SymMatrix(Matrix(a.data() + t * e0)));
    const Matrix u_hat = perturbed.vectors.data().leftCols(3);
    const Matrix aligned = u_hat * linalg::matrix_sign(u_hat.transpose() * u);
    return (aligned - u - t * f).norm();
  };
  const double t = 1e-3;
  const double ratio = residual(t) / residual(t / 2.0);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("window gap handles boundaries and rejects zero gaps") {
  Vector values(4);
  values << 5, 5, 2, 2;
  const Spectrum spectrum(values);
  CHECK(linalg::window_gap(spectrum, {0, 2}) == doctest::Approx(3.0));
  CHECK(linalg::window_gap(spectrum, {2, 2}) == doctest::Approx(3.0));
  CHECK(linalg::window_gap(spectrum, {0, 1}) == 0.0);
  const Frame basis(Matrix(Matrix::Identity(4, 4)));
  CHECK_THROWS_AS(
      linalg::dk_linear_term(spectrum, basis, {0, 1}, SymMatrix::Zero(4)),
      GapError);
}
