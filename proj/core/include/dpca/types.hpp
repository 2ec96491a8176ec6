#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace dpca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what) : Error(what) {}
};

// Eigengap at the requested split is zero (or negative within tolerance).
class GapError : public Error {
 public:
  explicit GapError(const std::string& what) : Error(what) {}
};

// A matrix that must be full rank is numerically singular.
class SingularityError : public Error {
 public:
  explicit SingularityError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Transport-level failure (timeout, connection refused, dead worker).
// `machine` is the index of the worker that failed, or -1 if unknown.
class TransportError : public Error {
 public:
  TransportError(int machine, const std::string& what)
      : Error(what), machine_(machine) {}
  int machine() const { return machine_; }

 private:
  int machine_ = -1;
};

// Protocol-level failure (unexpected message kind, dimension mismatch,
// worker-reported error).
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(what) {}
};

// Malformed or truncated message buffer; `offset` is where decoding stopped.
class DecodeError : public Error {
 public:
  DecodeError(std::size_t offset, const std::string& what)
      : Error(what + " (offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_ = 0;
};

namespace tol {
inline constexpr double kSymmetryRel = 1e-12;   // SymMatrix asymmetry, relative to max-abs
inline constexpr double kFrameOrtho = 1e-10;    // max-abs of FtF - I
inline constexpr double kSpectrumOrder = 1e-12; // slack allowed in descending check
}  // namespace tol

// Dense symmetric matrix. Symmetrized on construction; inputs whose
// asymmetry exceeds tol::kSymmetryRel (relative to the max-abs entry)
// or that contain non-finite values are rejected.
class SymMatrix {
 public:
  explicit SymMatrix(Matrix entries) : data_(std::move(entries)) {
    if (data_.rows() != data_.cols() || data_.rows() < 1) {
      throw InvalidInputError("SymMatrix: expected a square matrix, got " +
                              std::to_string(data_.rows()) + "x" +
                              std::to_string(data_.cols()));
    }
    if (!data_.allFinite()) {
      throw InvalidInputError("SymMatrix: non-finite entries");
    }
    const double scale = data_.cwiseAbs().maxCoeff();
    const double asym = (data_ - data_.transpose()).cwiseAbs().maxCoeff();
    if (asym > tol::kSymmetryRel * std::max(scale, 1.0)) {
      throw InvalidInputError("SymMatrix: asymmetry " + std::to_string(asym) +
                              " exceeds tolerance");
    }
    data_ = ((data_ + data_.transpose()) * 0.5).eval();
  }

  static SymMatrix Zero(int dim) { return SymMatrix(Matrix::Zero(dim, dim)); }
  static SymMatrix Identity(int dim) {
    return SymMatrix(Matrix::Identity(dim, dim));
  }

  int dim() const { return static_cast<int>(data_.rows()); }
  const Matrix& data() const { return data_; }

 private:
  Matrix data_;
};

// Column-orthonormal d x K frame.
class Frame {
 public:
  explicit Frame(Matrix columns) : data_(std::move(columns)) {
    if (data_.rows() < 1 || data_.cols() < 1 || data_.cols() > data_.rows()) {
      throw InvalidInputError("Frame: bad shape " + std::to_string(data_.rows()) +
                              "x" + std::to_string(data_.cols()));
    }
    if (!data_.allFinite()) {
      throw InvalidInputError("Frame: non-finite entries");
    }
    const Matrix gram = data_.transpose() * data_;
    const double dev =
        (gram - Matrix::Identity(data_.cols(), data_.cols())).cwiseAbs().maxCoeff();
    if (dev > tol::kFrameOrtho) {
      throw InvalidInputError("Frame: columns not orthonormal (deviation " +
                              std::to_string(dev) + ")");
    }
  }

  int dim() const { return static_cast<int>(data_.rows()); }
  int rank() const { return static_cast<int>(data_.cols()); }
  const Matrix& data() const { return data_; }

 private:
  Matrix data_;
};

// Eigenvalues in descending order, all finite.
class Spectrum {
 public:
  explicit Spectrum(Vector values) : values_(std::move(values)) {
    if (values_.size() < 1) {
      throw InvalidInputError("Spectrum: empty");
    }
    if (!values_.allFinite()) {
      throw InvalidInputError("Spectrum: non-finite values");
    }
    const double scale = std::max(1.0, values_.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i + 1 < values_.size(); ++i) {
      if (values_[i] < values_[i + 1] - tol::kSpectrumOrder * scale) {
        throw InvalidInputError("Spectrum: values not in descending order");
      }
    }
  }

  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  const Vector& values() const { return values_; }

 private:
  Vector values_;
};

// Contiguous eigenvalue index window [start, start + count), zero-based.
// start = 0, count = K selects the leading K-dimensional eigenspace.
struct IndexWindow {
  int start = 0;
  int count = 0;
};

}  // namespace dpca
