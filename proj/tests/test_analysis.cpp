#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpca/analysis.hpp"
#include "dpca/models.hpp"
#include "dpca/rng.hpp"

#include <cmath>

using namespace dpca;

namespace {

SymMatrix symmetric_from_seed(int d, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.next_gaussian();
  return SymMatrix(m);
}

std::vector<ExperimentRecord> synthetic_records() {
  std::vector<ExperimentRecord> records;
  for (int d : {100, 200, 400}) {
    for (int m : {5, 10}) {
      for (std::int64_t n : {250, 500}) {
        for (double delta : {2.0, 11.5}) {
          ExperimentRecord r;
          r.d = d;
          r.m = m;
          r.n = n;
          r.delta = delta;
          r.k = 3;
          r.method = "DP";
          r.rho = 0.7 * std::sqrt(d / (m * n * delta));
          records.push_back(r);
        }
      }
    }
  }
  return records;
}

}  // namespace

TEST_CASE("model quantities arithmetic") {
  const auto spiked = analysis::model_quantities(models::spiked_model(10, 50.0), 3);
  CHECK(spiked.eigengap == doctest::Approx(50.0 / 4.0 - 1.0));
  CHECK(spiked.condition == doctest::Approx(50.0 / 11.5));
  CHECK(spiked.effective_rank == doctest::Approx((1.75 * 50.0 + 7.0) / 50.0));

  const auto single = analysis::model_quantities(models::single_spike_model(30, 5.0), 1);
  CHECK(single.effective_rank == doctest::Approx((5.0 + 29.0) / 5.0));
  CHECK(single.condition == doctest::Approx(5.0 / 4.0));

  CHECK_THROWS_AS(
      analysis::model_quantities(Spectrum(Vector::Ones(4)), 1), GapError);
}

TEST_CASE("bound curves: symmetry, scaling and monotonicity") {
  const auto model = models::spiked_model(50, 50.0);
  const auto symmetric = analysis::theoretical_error_curve(
      model, 3, 10, 500, analysis::Regime::kSymmetric);
  CHECK(symmetric.bias_term == 0.0);
  CHECK(symmetric.heterogeneity_term == 0.0);

  const auto general = analysis::theoretical_error_curve(
      model, 3, 10, 500, analysis::Regime::kGeneral);
  CHECK(general.bias_term > 0.0);
  CHECK(general.variance_term == doctest::Approx(symmetric.variance_term));

  // Doubling m at fixed n halves the squared variance term.
  const auto doubled = analysis::theoretical_error_curve(
      model, 3, 20, 500, analysis::Regime::kGeneral);
  CHECK(doubled.variance_term * doubled.variance_term * 2.0 ==
        doctest::Approx(general.variance_term * general.variance_term));
  // Bias is independent of m, decreasing in n.
  CHECK(doubled.bias_term == doctest::Approx(general.bias_term));
  const auto larger_n = analysis::theoretical_error_curve(
      model, 3, 10, 1000, analysis::Regime::kGeneral);
  CHECK(larger_n.bias_term < general.bias_term);
  CHECK(larger_n.variance_term < general.variance_term);
}

TEST_CASE("heterogeneous curve with identical machines reduces to homogeneous") {
  const auto model = models::spiked_model(30, 50.0);
  const std::vector<models::CovarianceModel> machines(5, model);
  const auto hetero =
      analysis::theoretical_error_curve(machines, 3, 400, analysis::Regime::kGeneral);
  const auto homog = analysis::theoretical_error_curve(
      model, 3, 5, 400, analysis::Regime::kGeneral);
  CHECK(hetero.variance_term == doctest::Approx(homog.variance_term));
  CHECK(hetero.bias_term == doctest::Approx(homog.bias_term));
  CHECK(hetero.per_machine_variance.size() == 5);
}

TEST_CASE("factor curve includes the residual-vs-strength term") {
  Vector strengths(2);
  strengths << 9.0, 4.0;
  const auto spec = models::make_factor_spec(12, 2, 3,
                                             {strengths, strengths, strengths},
                                             {0.5, 0.5, 0.5}, 7);
  const auto report = analysis::factor_error_curve(spec, 200);
  // sqrt(K) * ||Sigma_u||_2 / lambda_K = sqrt(2) * 0.25 / 4.
  CHECK(report.heterogeneity_term ==
        doctest::Approx(std::sqrt(2.0) * 0.25 / 4.0).epsilon(1e-9));
  CHECK(report.variance_term > 0.0);
}

TEST_CASE("dk expansion with zero perturbation has zero residuals") {
  const auto a = symmetric_from_seed(8, 3);
  const auto report =
      analysis::check_dk_expansion(a, SymMatrix::Zero(8), {0, 2});
  CHECK(report.epsilon == 0.0);
  CHECK(report.in_regime);
  CHECK(report.projector_residual == doctest::Approx(0.0));
  CHECK(report.align_residual == doctest::Approx(0.0));
  CHECK(report.f_norm == 0.0);
  CHECK(report.all_hold());
}

TEST_CASE("dk expansion against the closed-form 2x2 case") {
  Matrix a(2, 2);
  a << 3, 0, 0, 1;
  for (double eps : {1e-3, 1e-4}) {
    Matrix e(2, 2);
    e << 0, eps, eps, 0;
    const auto report =
        analysis::check_dk_expansion(SymMatrix(a), SymMatrix(e), {0, 1});
    CHECK(report.in_regime);
    CHECK(report.all_hold());
    // Exact top eigenvector of [[3, eps], [eps, 1]] vs the linear term.
    const double shift = (std::sqrt(4.0 + eps * eps) - 2.0) / 2.0;  // l1 - 3
    const double exact_tangent = eps / (2.0 + shift);
    // Projector residual is second order, with the right magnitude.
    CHECK(report.projector_residual <
          10.0 * exact_tangent * exact_tangent + 1e-15);
  }
}

TEST_CASE("dk expansion holds across random window placements") {
  int in_regime = 0;
  for (std::uint64_t t = 0; t < 200; ++t) {
    CounterRng rng(CounterRng::derive(123, t));
    const int d = 20;
    const int k = 3;
    const int s = static_cast<int>(rng.next_u64() % (d - k + 1));
    Vector values(d);
    for (int i = 0; i < d; ++i) values[i] = 10.0 * rng.next_uniform();
    std::sort(values.data(), values.data() + d, std::greater<double>());
    for (int i = 0; i < s; ++i) values[i] += 3.0;
    for (int i = s; i < s + k; ++i) values[i] += 1.5;
    const Frame basis = models::random_frame(d, d, 1000 + t);
    const SymMatrix a(basis.data() * values.asDiagonal() * basis.data().transpose());

    Matrix e0(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) e0(i, j) = e0(j, i) = rng.next_gaussian();
    const double gap = linalg::window_gap(Spectrum(values), {s, k});
    e0 *= 0.05 * gap / linalg::sym_operator_norm(SymMatrix(e0));

    const auto report = analysis::check_dk_expansion(a, SymMatrix(e0), {s, k});
    CHECK(report.all_hold());
    in_regime += report.in_regime ? 1 : 0;
  }
  CHECK(in_regime == 200);
}

TEST_CASE("dk expansion flags out-of-regime perturbations") {
  Matrix a(3, 3);
  a.setZero();
  a.diagonal() << 3, 1, 0.5;
  Matrix e = 0.5 * Matrix::Identity(3, 3);
  e(0, 1) = e(1, 0) = 0.4;
  const auto report = analysis::check_dk_expansion(SymMatrix(a), SymMatrix(e), {0, 1});
  CHECK(!report.in_regime);
  CHECK(!report.all_hold());

  CHECK_THROWS_AS(analysis::check_dk_expansion(SymMatrix::Identity(3),
                                               SymMatrix::Zero(3), {0, 1}),
                  GapError);
}

TEST_CASE("sigma star: gaussian local eigenspaces are unbiased") {
  const auto model = models::spiked_model(10, 50.0);
  const auto report = analysis::estimate_sigma_star(
      model, models::InnovationKind::kGaussian, 2000, 3, 200, 5);
  CHECK(report.rho_bias <= 3.0 * report.mc_se);
  CHECK(report.batch_rho.size() == 10);
  CHECK_THROWS_AS(analysis::estimate_sigma_star(
                      model, models::InnovationKind::kGaussian, 100, 3, 50, 5),
                  InvalidInputError);
}

TEST_CASE("sigma star approaches the population projector for large n") {
  const auto model = models::spiked_model(20, 50.0);
  const auto report = analysis::estimate_sigma_star(
      model, models::InnovationKind::kGaussian, 10000, 3, 150, 7);
  const Matrix truth =
      model.leading_frame().data() * model.leading_frame().data().transpose();
  CHECK((report.sigma_star.data() - truth).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sigma star under the adversarial family shows complete bias") {
  // Undersampled regime: the bulk dominates every local leading direction,
  // so the estimated space is orthogonal to the spike and rho = sqrt(2).
  const auto model = models::single_spike_model(400, 2.0);
  const auto report = analysis::estimate_sigma_star(
      model, models::InnovationKind::kSphereMixtureAdversarial, 64, 1, 100, 9);
  CHECK(report.rho_bias == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("scaling regression recovers exact synthetic exponents") {
  const auto fit = analysis::fit_scaling_regression(synthetic_records());
  CHECK(fit.dropped.empty());
  CHECK(fit.exponents[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fit.exponents[1] == doctest::Approx(-0.5).epsilon(1e-10));
  CHECK(fit.exponents[2] == doctest::Approx(-0.5).epsilon(1e-10));
  CHECK(fit.exponents[3] == doctest::Approx(-0.5).epsilon(1e-10));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scaling regression drops constant covariates and proceeds") {
  auto records = synthetic_records();
  for (auto& r : records) r.m = 10;  // constant column
  const auto fit = analysis::fit_scaling_regression(records);
  REQUIRE(fit.dropped.size() == 1);
  CHECK(fit.dropped[0] == "log_m");
  CHECK(!fit.fitted[1]);
  CHECK(std::isnan(fit.exponents[1]));
  CHECK(fit.exponents[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fit.exponents[3] == doctest::Approx(-0.5).epsilon(1e-10));

  ExperimentRecord zero = records.front();
  zero.rho = 0.0;
  CHECK_THROWS_AS(analysis::fit_scaling_regression({zero}), InvalidInputError);
}

TEST_CASE("report JSON has the documented field names") {
  const auto fit = analysis::fit_scaling_regression(synthetic_records());
  const auto json = analysis::to_json(fit);
  CHECK(json.find("\"beta_d\"") != std::string::npos);
  CHECK(json.find("\"r_squared\"") != std::string::npos);

  const auto model = models::spiked_model(10, 50.0);
  const auto bound_json = analysis::to_json(analysis::theoretical_error_curve(
      model, 3, 4, 100, analysis::Regime::kGeneral));
  CHECK(bound_json.find("\"variance_term\"") != std::string::npos);
  CHECK(bound_json.find("\"bias_term\"") != std::string::npos);

  const auto dk_json = analysis::to_json(analysis::check_dk_expansion(
      symmetric_from_seed(6, 11), SymMatrix::Zero(6), {0, 2}));
  CHECK(dk_json.find("\"epsilon\"") != std::string::npos);
  CHECK(dk_json.find("\"all_hold\"") != std::string::npos);
}
