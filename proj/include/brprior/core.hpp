#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace brprior {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Seed = std::uint64_t;
using Rng = std::mt19937_64;

// Raised when a computation is well-posed in its inputs but numerically
// impossible (singular information, non-finite values, failed tuning).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for bad arguments, unknown names, or malformed configuration.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense d x d x d array, row-major: element (i, j, k) lives at (i*d + j)*d + k.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(std::size_t d) : d_(d), data_(d * d * d, 0.0) {}

  std::size_t dim() const { return d_; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * d_ + j) * d_ + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * d_ + j) * d_ + k];
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  Tensor3& operator+=(const Tensor3& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor3& operator-=(const Tensor3& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor3& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(Tensor3 a, double s) { return a *= s; }
  friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Adds s * (a outer b outer c).
  void add_outer(double s, const Vector& a, const Vector& b, const Vector& c) {
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j) {
        const double sij = s * a[i] * b[j];
        for (std::size_t k = 0; k < d_; ++k) (*this)(i, j, k) += sij * c[k];
      }
  }

 private:
  void check_same(const Tensor3& o) const {
    if (o.d_ != d_) throw UsageError("Tensor3 dimension mismatch");
  }

  std::size_t d_ = 0;
  std::vector<double> data_;
};

/// A parameter vector with component names.
class ParamPoint {
 public:
  ParamPoint() = default;
  ParamPoint(Vector values, std::vector<std::string> labels)
      : values_(std::move(values)), labels_(std::move(labels)) {
    if (values_.size() < 1) throw UsageError("ParamPoint needs at least one component");
    if (labels_.empty()) {
      for (Eigen::Index i = 0; i < values_.size(); ++i)
        labels_.push_back("theta" + std::to_string(i + 1));
    }
    if (static_cast<Eigen::Index>(labels_.size()) != values_.size())
      throw UsageError("ParamPoint label count does not match dimension");
    if (!values_.allFinite()) throw UsageError("ParamPoint entries must be finite");
  }
  explicit ParamPoint(Vector values) : ParamPoint(std::move(values), {}) {}

  std::size_t dim() const { return static_cast<std::size_t>(values_.size()); }
  const Vector& values() const { return values_; }
  const std::vector<std::string>& labels() const { return labels_; }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

 private:
  Vector values_;
  std::vector<std::string> labels_;
};

// splitmix64 finalizer; stable seed derivation independent of the standard library.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`.
inline Seed derive_seed(Seed master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x5851f42d4c957f2dULL));
}

inline Rng make_rng(Seed seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

/// Round-trippable decimal form of a double (17 significant digits).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Inverse via pivoted LU; throws NumericError when (near) singular.
inline Matrix checked_inverse(const Matrix& m, const char* what, double rcond_floor = 1e-13) {
  Eigen::FullPivLU<Matrix> lu(m);
  if (!m.allFinite() || !lu.isInvertible() || lu.rcond() < rcond_floor)
    throw NumericError(std::string("singular ") + what);
  return lu.inverse();
}

/// log|det m| for a symmetric positive definite matrix.
inline double log_det_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string("non-positive-definite ") + what);
  const Matrix& l = llt.matrixL();
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

}  // namespace brprior
