#include "dpca/models.hpp"

#include "dpca/linalg.hpp"
#include "dpca/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <utility>

namespace dpca::models {
namespace {

constexpr double kSqrt3 = 1.7320508075688772935;

std::uint64_t stream_seed(std::uint64_t master_seed, std::uint32_t machine) {
  return CounterRng::derive(master_seed, machine);
}

void fill_gaussian(CounterRng& rng, Matrix& out) {
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = rng.next_gaussian();
}

}  // namespace

CovarianceModel::CovarianceModel(Spectrum spectrum, Frame basis, int target_rank)
    : spectrum_(std::move(spectrum)),
      basis_(std::move(basis)),
      target_rank_(target_rank) {
  const int d = basis_.dim();
  if (basis_.rank() != d) {
    throw InvalidInputError("CovarianceModel: basis must be a full d x d frame");
  }
  if (spectrum_.size() != d) {
    throw InvalidInputError("CovarianceModel: spectrum/basis size mismatch");
  }
  if (target_rank_ < 1 || target_rank_ > d) {
    throw InvalidInputError("CovarianceModel: target rank out of range");
  }
  if (spectrum_[d - 1] < 0.0) {
    throw InvalidInputError("CovarianceModel: negative eigenvalue");
  }
  eigengap_ = target_rank_ < d
                  ? spectrum_[target_rank_ - 1] - spectrum_[target_rank_]
                  : std::numeric_limits<double>::infinity();
  if (!(eigengap_ > 0.0)) {
    throw GapError("CovarianceModel: eigengap at K is not positive");
  }
  kappa_ = spectrum_[0] / eigengap_;
  eff_rank_ = spectrum_.values().sum() / spectrum_[0];
  identity_basis_ =
      (basis_.data() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() == 0.0;
}

Frame CovarianceModel::leading_frame() const {
  return Frame(basis_.data().leftCols(target_rank_));
}

SymMatrix CovarianceModel::covariance() const {
  if (identity_basis_) {
    return SymMatrix(Matrix(spectrum_.values().asDiagonal()));
  }
  return SymMatrix(basis_.data() * spectrum_.values().asDiagonal() *
                   basis_.data().transpose());
}

std::string to_string(InnovationKind kind) {
  switch (kind) {
    case InnovationKind::kGaussian: return "gaussian";
    case InnovationKind::kRademacher: return "rademacher";
    case InnovationKind::kSphereMixtureAdversarial: return "adversarial";
    case InnovationKind::kCustomSymmetric: return "custom-symmetric";
  }
  return "unknown";
}

InnovationKind innovation_kind_from_string(const std::string& name) {
  if (name == "gaussian") return InnovationKind::kGaussian;
  if (name == "rademacher") return InnovationKind::kRademacher;
  if (name == "adversarial") return InnovationKind::kSphereMixtureAdversarial;
  if (name == "custom-symmetric") return InnovationKind::kCustomSymmetric;
  throw ConfigError("unknown innovation kind: " + name);
}

bool is_symmetric_innovation(InnovationKind kind) {
  switch (kind) {
    case InnovationKind::kGaussian:
    case InnovationKind::kRademacher:
    case InnovationKind::kCustomSymmetric:
    case InnovationKind::kSphereMixtureAdversarial:
      return true;
  }
  return false;
}

CovarianceModel spiked_model(int d, double lambda) {
  if (d < 4) {
    throw GapError("spiked_model: need d >= 4 so the bulk is nonempty");
  }
  if (!(lambda > 4.0)) {
    throw GapError("spiked_model: need lambda > 4 for a positive eigengap");
  }
  Vector values = Vector::Ones(d);
  values[0] = lambda;
  values[1] = lambda / 2.0;
  values[2] = lambda / 4.0;
  return CovarianceModel(Spectrum(std::move(values)),
                         Frame(Matrix::Identity(d, d)), /*target_rank=*/3);
}

CovarianceModel single_spike_model(int d, double lambda) {
  if (d < 2) throw GapError("single_spike_model: need d >= 2");
  if (!(lambda > 1.0)) {
    throw GapError("single_spike_model: need lambda > 1 for a positive gap");
  }
  Vector values = Vector::Ones(d);
  values[0] = lambda;
  return CovarianceModel(Spectrum(std::move(values)),
                         Frame(Matrix::Identity(d, d)), /*target_rank=*/1);
}

Partition sample_partition(const CovarianceModel& model, InnovationKind kind,
                           std::int64_t n, std::uint32_t machine,
                           std::uint64_t master_seed) {
  if (n < 1) throw InvalidInputError("sample_partition: need n >= 1");
  if (kind == InnovationKind::kSphereMixtureAdversarial) {
    throw InvalidInputError(
        "sample_partition: the adversarial family is generated by "
        "sample_adversarial");
  }
  const int d = model.dim();
  CounterRng rng(stream_seed(master_seed, machine));
  Matrix z(n, d);
  switch (kind) {
    case InnovationKind::kGaussian:
      fill_gaussian(rng, z);
      break;
    case InnovationKind::kRademacher:
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j)
          z(i, j) = rng.next_rademacher();
      break;
    case InnovationKind::kCustomSymmetric:
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j)
          z(i, j) = kSqrt3 * (2.0 * rng.next_uniform() - 1.0);
      break;
    default:
      throw InvalidInputError("sample_partition: unsupported kind");
  }
  // Rows become X^T = V Lambda^{1/2} Z.
  const Vector scale = model.spectrum().values().cwiseSqrt();
  for (int j = 0; j < d; ++j) z.col(j) *= scale[j];
  Partition partition;
  partition.machine = machine;
  partition.seed = stream_seed(master_seed, machine);
  if (model.identity_basis()) {
    partition.data = std::move(z);
  } else {
    partition.data = z * model.basis().data().transpose();
  }
  return partition;
}

Partition sample_adversarial(double lambda, int d, std::int64_t n,
                             std::uint32_t machine, std::uint64_t master_seed) {
  if (!(lambda >= 2.0)) {
    throw InvalidInputError("sample_adversarial: need lambda >= 2");
  }
  if (d < 2) throw InvalidInputError("sample_adversarial: need d >= 2");
  if (n < 1) throw InvalidInputError("sample_adversarial: need n >= 1");
  CounterRng rng(stream_seed(master_seed, machine));
  Matrix rows = Matrix::Zero(n, d);
  const double spike = std::sqrt(2.0 * lambda);
  const double shell = std::sqrt(2.0 * static_cast<double>(d - 1));
  for (std::int64_t i = 0; i < n; ++i) {
    const bool bulk_branch = (rng.next_u64() & 1ULL) != 0;  // W = 1
    if (!bulk_branch) {
      rows(i, 0) = rng.next_rademacher() * spike;
    } else {
      double norm_sq = 0.0;
      for (int j = 1; j < d; ++j) {
        const double g = rng.next_gaussian();
        rows(i, j) = g;
        norm_sq += g * g;
      }
      rows.row(i).tail(d - 1) *= shell / std::sqrt(norm_sq);
    }
  }
  Partition partition;
  partition.machine = machine;
  partition.seed = stream_seed(master_seed, machine);
  partition.data = std::move(rows);
  return partition;
}

std::vector<CovarianceModel> heterogeneous_common_eigenspace(
    int d, int k, int m, const std::vector<Spectrum>& spectra,
    std::uint64_t basis_seed) {
  if (m < 1 || static_cast<int>(spectra.size()) != m) {
    throw InvalidInputError(
        "heterogeneous_common_eigenspace: need one spectrum per machine");
  }
  const Frame shared = random_frame(d, d, basis_seed);
  std::vector<CovarianceModel> out;
  out.reserve(m);
  for (int l = 0; l < m; ++l) {
    if (spectra[l].size() != d) {
      throw InvalidInputError("heterogeneous_common_eigenspace: spectrum size");
    }
    Matrix basis = shared.data();
    if (k < d) {
      // Re-randomize the bulk directions within their complement.
      const Frame rot =
          random_frame(d - k, d - k, CounterRng::derive(basis_seed, l + 1));
      basis.rightCols(d - k) = shared.data().rightCols(d - k) * rot.data();
    }
    out.emplace_back(spectra[l], Frame(std::move(basis)), k);  // gap checked here
  }
  return out;
}

FactorModelSpec::FactorModelSpec(std::vector<Matrix> loadings_in,
                                 std::vector<SymMatrix> residual_covs_in,
                                 Frame common)
    : loadings(std::move(loadings_in)),
      residual_covs(std::move(residual_covs_in)),
      common_frame(std::move(common)) {
  if (loadings.empty() || loadings.size() != residual_covs.size()) {
    throw InvalidInputError("FactorModelSpec: loadings/residuals mismatch");
  }
  const int d = common_frame.dim();
  const int k = common_frame.rank();
  for (std::size_t l = 0; l < loadings.size(); ++l) {
    if (loadings[l].rows() != d || loadings[l].cols() != k) {
      throw InvalidInputError("FactorModelSpec: loading matrix shape mismatch");
    }
    if (residual_covs[l].dim() != d) {
      throw InvalidInputError("FactorModelSpec: residual covariance dim mismatch");
    }
    // Top-K space of B B^T must coincide with the shared frame.
    const auto top = linalg::top_k_eigen(
        SymMatrix(loadings[l] * loadings[l].transpose()), k,
        linalg::SolverPolicy::kDense);
    if (linalg::subspace_distance(top.vectors, common_frame) > 1e-8) {
      throw InvalidInputError(
          "FactorModelSpec: loadings do not share the common top-K space");
    }
  }
}

SymMatrix FactorModelSpec::population_covariance(int machine) const {
  const Matrix& b = loadings.at(machine);
  return SymMatrix(b * b.transpose() + residual_covs.at(machine).data());
}

Vector FactorModelSpec::factor_strengths(int machine) const {
  const Matrix& b = loadings.at(machine);
  Eigen::SelfAdjointEigenSolver<Matrix> gram(
      Matrix(b.transpose() * b));  // eigenvalues of B B^T restricted to Col(B)
  return gram.eigenvalues().reverse();
}

FactorModelSpec make_factor_spec(int d, int k, int m,
                                 const std::vector<Vector>& strengths,
                                 const std::vector<double>& noise_sd,
                                 std::uint64_t seed) {
  if (static_cast<int>(strengths.size()) != m ||
      static_cast<int>(noise_sd.size()) != m) {
    throw InvalidInputError("make_factor_spec: need per-machine parameters");
  }
  const Frame shared = random_frame(d, k, seed);
  std::vector<Matrix> loadings;
  std::vector<SymMatrix> residuals;
  loadings.reserve(m);
  residuals.reserve(m);
  for (int l = 0; l < m; ++l) {
    if (strengths[l].size() != k || strengths[l].minCoeff() <= 0.0) {
      throw InvalidInputError("make_factor_spec: strengths must be positive");
    }
    loadings.push_back(Matrix(shared.data() * strengths[l].cwiseSqrt().asDiagonal()));
    residuals.push_back(SymMatrix(noise_sd[l] * noise_sd[l] *
                                  Matrix::Identity(d, d)));
  }
  return FactorModelSpec(std::move(loadings), std::move(residuals), shared);
}

Partition factor_model(const FactorModelSpec& spec, std::int64_t n,
                       std::uint32_t machine, std::uint64_t master_seed) {
  if (machine >= static_cast<std::uint32_t>(spec.machines())) {
    throw InvalidInputError("factor_model: machine index out of range");
  }
  if (n < 1) throw InvalidInputError("factor_model: need n >= 1");
  const int d = spec.dim();
  const int k = spec.factors();
  CounterRng rng(stream_seed(master_seed, machine));
  Matrix factors(n, k);
  fill_gaussian(rng, factors);
  Matrix noise(n, d);
  fill_gaussian(rng, noise);

  const SymMatrix& sigma_u = spec.residual_covs[machine];
  const double residual_scale = sigma_u.data().cwiseAbs().maxCoeff();
  Matrix rows = factors * spec.loadings[machine].transpose();
  if (residual_scale > 0.0) {
    // Symmetric square root of Sigma_u.
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_u.data());
    const Vector roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix sqrt_u =
        es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
    rows += noise * sqrt_u;  // sqrt_u symmetric
  }
  Partition partition;
  partition.machine = machine;
  partition.seed = stream_seed(master_seed, machine);
  partition.data = std::move(rows);
  return partition;
}

Frame random_frame(int d, int k, std::uint64_t seed) {
  CounterRng rng(CounterRng::derive(seed, 0x72616d65));
  Matrix block(d, k);
  fill_gaussian(rng, block);
  Eigen::HouseholderQR<Matrix> qr(block);
  Matrix q = qr.householderQ() * Matrix::Identity(d, k);
  // Fix signs against the R diagonal so the frame is a deterministic
  // function of the seed.
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return Frame(std::move(q));
}

// ----- binary / CSV partition formats -------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'P', 'C', 'A'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("truncated partition file: " + path);
  return value;
}

}  // namespace

void write_partition(const Partition& partition, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, partition.machine);
  put(out, static_cast<std::uint64_t>(partition.data.rows()));
  put(out, static_cast<std::uint64_t>(partition.data.cols()));
  put(out, partition.seed);
  for (Eigen::Index i = 0; i < partition.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < partition.data.cols(); ++j) {
      put(out, partition.data(i, j));
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

Partition read_partition(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a partition file (bad magic): " + path);
  }
  const auto version = take<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw IoError("unsupported partition version " + std::to_string(version) +
                  ": " + path);
  }
  Partition partition;
  partition.machine = take<std::uint32_t>(in, path);
  const auto n = take<std::uint64_t>(in, path);
  const auto d = take<std::uint64_t>(in, path);
  partition.seed = take<std::uint64_t>(in, path);
  if (n < 1 || d < 1 || n > (1ULL << 40) || d > (1ULL << 24)) {
    throw IoError("implausible partition header: " + path);
  }
  partition.data.resize(static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < partition.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < partition.data.cols(); ++j) {
      partition.data(i, j) = take<double>(in, path);
    }
  }
  return partition;
}

void write_partition_csv(const Partition& partition, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  char buf[32];
  for (Eigen::Index i = 0; i < partition.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < partition.data.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", partition.data(i, j));
      out << buf << (j + 1 < partition.data.cols() ? "," : "\n");
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

std::uint64_t partition_file_bytes(std::int64_t n, int d) {
  return 4 + 4 + 4 + 8 + 8 + 8 +
         static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(d) * 8;
}

}  // namespace dpca::models
