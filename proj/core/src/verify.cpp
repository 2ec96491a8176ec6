#include "dpca/verify.hpp"

#include "dpca/analysis.hpp"
#include "dpca/estimator.hpp"
#include "dpca/linalg.hpp"
#include "dpca/models.hpp"
#include "dpca/parallel.hpp"
#include "dpca/rng.hpp"
#include "dpca/runtime.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>

namespace dpca::verify {
namespace {

Matrix random_symmetric(CounterRng& rng, int d) {
  Matrix m(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = rng.next_gaussian();
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

// Symmetric matrix with a prescribed descending spectrum in a random basis,
// spaced so the [s, s+k) window has gap at least 1.5.
SymMatrix gapped_matrix(CounterRng& rng, int d, int s, int k,
                        std::uint64_t frame_seed) {
  Vector values(d);
  for (int i = 0; i < d; ++i) values[i] = 10.0 * rng.next_uniform();
  std::sort(values.data(), values.data() + d, std::greater<double>());
  for (int i = 0; i < d; ++i) {
    if (i < s) values[i] += 3.0;
    else if (i < s + k) values[i] += 1.5;
  }
  const Frame basis = models::random_frame(d, d, frame_seed);
  return SymMatrix(basis.data() * values.asDiagonal() *
                   basis.data().transpose());
}

void track(SuiteResult& result, bool ok, double slack, const std::string& replay) {
  result.checks += 1;
  result.worst_slack = std::min(result.worst_slack, slack);
  if (!ok) {
    result.failures += 1;
    if (result.failing_cases.size() < 16) result.failing_cases.push_back(replay);
  }
}

}  // namespace

SuiteResult run_dk_suite(int trials, int decay_trials, std::uint64_t seed) {
  SuiteResult result;
  result.name = "dk";
  result.worst_slack = std::numeric_limits<double>::infinity();

  const int dims[] = {5, 20, 50};
  const int ranks[] = {1, 3, 5};
  for (int t = 0; t < trials; ++t) {
    CounterRng rng(CounterRng::derive(seed, 0xdcull, t));
    const int d = dims[rng.next_u64() % 3];
    int k = ranks[rng.next_u64() % 3];
    k = std::min(k, d - 1);
    const int s = static_cast<int>(rng.next_u64() % (d - k + 1));
    const SymMatrix a = gapped_matrix(rng, d, s, k, CounterRng::derive(seed, t, 1));
    const double gap = linalg::window_gap(
        Spectrum(linalg::sym_eig(a).values.values()), IndexWindow{s, k});
    const double eps = 0.001 + 0.099 * rng.next_uniform();
    Matrix e0 = random_symmetric(rng, d);
    const double e0_norm = linalg::sym_operator_norm(SymMatrix(e0));
    const SymMatrix e(Matrix(e0 * (eps * gap / e0_norm)));

    const auto report = analysis::check_dk_expansion(a, e, IndexWindow{s, k});
    const double slack =
        std::min({report.slack_second_order, report.slack_align_residual,
                  report.slack_align_sandwich, report.slack_projector_sandwich,
                  1e-9 - report.symmetrized_identity_gap});
    std::ostringstream replay;
    replay << "dk trial " << t << " d=" << d << " K=" << k << " s=" << s
           << " eps=" << report.epsilon;
    track(result, report.all_hold(), slack, replay.str());
  }

  // Quadratic decay: halving the perturbation shrinks the projector
  // residual by ~4.
  for (int t = 0; t < decay_trials; ++t) {
    CounterRng rng(CounterRng::derive(seed, 0xdecull, t));
    const int d = 20;
    const int k = 3;
    const int s = static_cast<int>(rng.next_u64() % (d - k + 1));
    const SymMatrix a =
        gapped_matrix(rng, d, s, k, CounterRng::derive(seed, t, 2));
    const double gap = linalg::window_gap(
        Spectrum(linalg::sym_eig(a).values.values()), IndexWindow{s, k});
    Matrix e0 = random_symmetric(rng, d);
    e0 *= 1e-3 * gap / linalg::sym_operator_norm(SymMatrix(e0));
    const auto full = analysis::check_dk_expansion(a, SymMatrix(e0), {s, k});
    const auto half =
        analysis::check_dk_expansion(a, SymMatrix(Matrix(0.5 * e0)), {s, k});
    const double ratio = full.projector_residual / half.projector_residual;
    const bool ok = ratio >= 3.5 && ratio <= 4.5;
    std::ostringstream replay;
    replay << "dk decay trial " << t << " ratio=" << ratio;
    track(result, ok, std::min(ratio - 3.5, 4.5 - ratio), replay.str());
  }

  result.pass = result.failures == 0;
  result.detail = std::to_string(trials) + " inequality triples + " +
                  std::to_string(decay_trials) + " decay ratios";
  return result;
}

SuiteResult run_sdp_suite(int matrices, int candidates, std::uint64_t seed) {
  SuiteResult result;
  result.name = "sdp";
  result.worst_slack = std::numeric_limits<double>::infinity();
  for (int t = 0; t < matrices; ++t) {
    CounterRng rng(CounterRng::derive(seed, 0x5d9ull, t));
    const int d = 12;
    const int k = 1 + static_cast<int>(rng.next_u64() % 4);
    const SymMatrix s_mat(random_symmetric(rng, d));
    const auto top = linalg::top_k_eigen(s_mat, k, linalg::SolverPolicy::kDense);
    const SymMatrix p_hat = linalg::projection(top.vectors);
    const double objective = (p_hat.data().transpose() * s_mat.data()).trace();

    for (int c = 0; c < candidates; ++c) {
      // Random feasible point: eigenvalues in [0, 1] with trace <= K.
      const Frame q = models::random_frame(d, d, CounterRng::derive(seed, t, c));
      Vector diag(d);
      for (int i = 0; i < d; ++i) diag[i] = rng.next_uniform();
      const double total = diag.sum();
      if (total > k) diag *= static_cast<double>(k) / total;
      const Matrix p = q.data() * diag.asDiagonal() * q.data().transpose();
      const double value = (p.transpose() * s_mat.data()).trace();
      const double slack = objective - value + 1e-9;
      std::ostringstream replay;
      replay << "sdp trial " << t << " candidate " << c;
      track(result, slack >= 0.0, slack, replay.str());
    }
  }
  result.pass = result.failures == 0;
  result.detail = "top-K projector vs random feasible points";
  return result;
}

SuiteResult run_center_suite(int trials, int candidates, std::uint64_t seed) {
  SuiteResult result;
  result.name = "center";
  result.worst_slack = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const int d = 16;
    const int k = 3;
    const int m = 8;
    std::vector<estimator::SubspaceEstimate> estimates;
    for (int l = 0; l < m; ++l) {
      Frame frame = models::random_frame(d, k, CounterRng::derive(seed, t * 131 + l, 3));
      Vector values = Vector::LinSpaced(k, 3.0, 1.0);
      estimates.emplace_back(static_cast<std::uint32_t>(l), std::move(frame),
                             std::move(values), 1);
    }
    const auto aggregate = estimator::aggregate(estimates, k);
    double center_loss = 0.0;
    for (const auto& est : estimates) {
      const double rho = linalg::subspace_distance(aggregate.frame, est.frame);
      center_loss += rho * rho;
    }
    for (int c = 0; c < candidates; ++c) {
      const Frame u = models::random_frame(d, k, CounterRng::derive(seed, t, c + 7));
      double loss = 0.0;
      for (const auto& est : estimates) {
        const double rho = linalg::subspace_distance(u, est.frame);
        loss += rho * rho;
      }
      const double slack = loss + 1e-8 - center_loss;
      std::ostringstream replay;
      replay << "center trial " << t << " candidate " << c;
      track(result, slack >= 0.0, slack, replay.str());
    }
  }
  result.pass = result.failures == 0;
  result.detail = "aggregated frame vs random orthonormal competitors";
  return result;
}

SuiteResult run_unbiased_suite(int d, std::int64_t n, int k, int replicates,
                               std::uint64_t seed) {
  SuiteResult result;
  result.name = "unbiased";
  result.worst_slack = std::numeric_limits<double>::infinity();
  const auto model = models::spiked_model(d, 50.0);
  const auto report = analysis::estimate_sigma_star(
      model, models::InnovationKind::kGaussian, n, k, replicates, seed);

  const double offdiag_threshold = 5.0 / std::sqrt(static_cast<double>(replicates));
  track(result, report.max_top_bulk_offdiag <= offdiag_threshold,
        offdiag_threshold - report.max_top_bulk_offdiag,
        "offdiag=" + std::to_string(report.max_top_bulk_offdiag));
  track(result, report.rho_bias <= 3.0 * report.mc_se,
        3.0 * report.mc_se - report.rho_bias,
        "rho_bias=" + std::to_string(report.rho_bias) +
            " mc_se=" + std::to_string(report.mc_se));

  result.pass = result.failures == 0;
  std::ostringstream detail;
  detail << "B=" << replicates << " offdiag " << report.max_top_bulk_offdiag
         << " (<= " << offdiag_threshold << "), rho_bias " << report.rho_bias
         << " (<= 3*" << report.mc_se << ")";
  result.detail = detail.str();
  return result;
}

SuiteResult run_adversarial_suite(double lambda, int d, std::int64_t n, int m,
                                  int replicates, std::uint64_t seed) {
  SuiteResult result;
  result.name = "adversarial";
  result.worst_slack = std::numeric_limits<double>::infinity();

  std::vector<int> orthogonal(replicates, 0);
  parallel_for(replicates, [&](int rep) {
    const std::uint64_t rep_seed = CounterRng::derive(seed, 0xadd5ull, rep);
    std::vector<estimator::SubspaceEstimate> estimates;
    estimates.reserve(m);
    for (int l = 0; l < m; ++l) {
      const auto partition = models::sample_adversarial(
          lambda, d, n, static_cast<std::uint32_t>(l), rep_seed);
      estimates.push_back(estimator::local_pca(partition, 1));
    }
    const auto aggregate = estimator::aggregate(estimates, 1);
    const double overlap = std::abs(aggregate.frame.data()(0, 0));
    orthogonal[rep] = overlap <= 1e-8 ? 1 : 0;
  });

  int count = 0;
  for (int rep = 0; rep < replicates; ++rep) {
    count += orthogonal[rep];
    if (!orthogonal[rep] && result.failing_cases.size() < 16) {
      result.failing_cases.push_back("adversarial rep " + std::to_string(rep));
    }
  }
  const double frequency = static_cast<double>(count) / replicates;
  result.checks = replicates;
  result.failures = replicates - count;
  result.worst_slack = frequency - 0.95;
  result.pass = frequency >= 0.95;
  result.detail = "orthogonality frequency " + std::to_string(frequency) +
                  " (threshold 0.95)";
  return result;
}

SuiteResult run_transport_suite(std::uint64_t seed, const std::string& scratch_dir) {
  SuiteResult result;
  result.name = "transport";
  result.worst_slack = std::numeric_limits<double>::infinity();

  const int d = 10;
  const int m = 3;
  const int k = 2;
  const std::int64_t n = 40;
  const auto model = models::spiked_model(d, 50.0);
  std::vector<models::Partition> partitions;
  for (int l = 0; l < m; ++l) {
    partitions.push_back(models::sample_partition(
        model, models::InnovationKind::kGaussian, n, static_cast<std::uint32_t>(l),
        seed));
  }

  runtime::RunOptions options;
  options.k = k;
  options.extra = 1;
  options.eigenvalue_round = true;

  std::vector<estimator::AggregateResult> results;
  for (const auto transport : {runtime::Transport::kInMemory,
                               runtime::Transport::kFiles,
                               runtime::Transport::kTcp}) {
    results.push_back(runtime::run_local_cluster(
        partitions, options, transport,
        scratch_dir.empty() ? "" : scratch_dir + "/" +
                                       runtime::to_string(transport)));
  }

  for (std::size_t i = 1; i < results.size(); ++i) {
    const double rho =
        linalg::subspace_distance(results[0].frame, results[i].frame);
    track(result, rho <= 1e-10, 1e-10 - rho,
          "cross-transport rho " + std::to_string(rho));
    const double lambda_dev =
        (*results[0].refined_eigenvalues - *results[i].refined_eigenvalues)
            .cwiseAbs()
            .maxCoeff();
    track(result, lambda_dev <= 1e-10, 1e-10 - lambda_dev,
          "cross-transport lambda deviation " + std::to_string(lambda_dev));
    track(result,
          results[i].ledger.frames_floats == results[0].ledger.frames_floats,
          0.0, "ledger float mismatch");
  }
  const auto expected_frames =
      static_cast<std::uint64_t>(m) * (k + options.extra) * d;
  track(result, results[0].ledger.frames_floats == expected_frames,
        static_cast<double>(results[0].ledger.frames_floats) -
            static_cast<double>(expected_frames),
        "frames floats " + std::to_string(results[0].ledger.frames_floats));
  const auto expected_broadcast = static_cast<std::uint64_t>(m) * k * d;
  track(result, results[0].ledger.broadcast_floats == expected_broadcast, 0.0,
        "broadcast floats");
  track(result,
        results[0].ledger.rayleigh_reply_floats ==
            static_cast<std::uint64_t>(m) * k,
        0.0, "rayleigh floats");

  // A dead worker must abort the run with a transport error naming it.
  {
    runtime::ClusterConfig config;
    config.machines = 2;
    config.transport = runtime::Transport::kTcp;
    config.timeout_secs = 0.5;
    std::vector<std::unique_ptr<runtime::WorkerChannel>> channels;
    channels.push_back(runtime::make_inmemory_channel(
        std::make_shared<runtime::Worker>(partitions[0])));
    channels.push_back(runtime::make_tcp_channel("127.0.0.1:1", 1, 0.5));
    bool aborted = false;
    try {
      runtime::run_distributed(channels, options, config);
    } catch (const TransportError& e) {
      aborted = e.machine() == 1;
    }
    track(result, aborted, aborted ? 0.0 : -1.0, "dead worker abort");
  }

  result.pass = result.failures == 0;
  result.detail = "inmemory/files/tcp equivalence + ledger exactness";
  return result;
}

std::vector<SuiteResult> run_suites(const std::vector<std::string>& names,
                                    std::uint64_t seed) {
  std::vector<SuiteResult> results;
  for (const auto& name : names) {
    if (name == "dk") results.push_back(run_dk_suite(1000, 100, seed));
    else if (name == "sdp") results.push_back(run_sdp_suite(20, 200, seed));
    else if (name == "center") results.push_back(run_center_suite(5, 200, seed));
    else if (name == "unbiased") results.push_back(run_unbiased_suite(20, 200, 3, 2000, seed));
    else if (name == "adversarial") results.push_back(run_adversarial_suite(2.0, 1600, 256, 20, 50, seed));
    else if (name == "transport") results.push_back(run_transport_suite(seed));
    else throw ConfigError("unknown verify suite: " + name);
  }
  return results;
}

std::string to_json(const SuiteResult& result) {
  nlohmann::json j;
  j["suite"] = result.name;
  j["pass"] = result.pass;
  j["checks"] = result.checks;
  j["failures"] = result.failures;
  j["worst_slack"] = result.worst_slack;
  j["detail"] = result.detail;
  j["failing_cases"] = result.failing_cases;
  return j.dump();
}

std::string to_json(const std::vector<SuiteResult>& results) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results) j.push_back(nlohmann::json::parse(to_json(r)));
  return j.dump(2);
}

}  // namespace dpca::verify
