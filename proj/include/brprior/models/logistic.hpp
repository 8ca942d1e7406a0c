#pragma once

#include "brprior/model.hpp"
#include "brprior/models/exponential_family.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace brprior {

/// Logistic regression on a fixed design X (n x p):
/// log p_i = y_i x_i'beta - log(1 + exp(x_i'beta)).
///
/// The Hessian -X'W(beta)X is data-free, so kappa_{r,st} = 0. Cumulants
/// average over the design rows; the full-sample information is X'W X.
class LogisticModel final : public Model {
 public:
  explicit LogisticModel(Matrix design) : x_(std::move(design)) {
    if (x_.rows() < 1 || x_.cols() < 1) throw UsageError("logistic: empty design");
    if (!x_.allFinite()) throw UsageError("logistic: design must be finite");
    Eigen::FullPivLU<Matrix> lu(x_.transpose() * x_);
    if (lu.rank() < x_.cols() || lu.rcond() < 1e-12)
      throw UsageError("logistic: rank-deficient design (X'X singular)");
  }

  const Matrix& design() const { return x_; }

  std::string name() const override { return "logistic"; }
  std::size_t dim() const override { return static_cast<std::size_t>(x_.cols()); }
  std::vector<std::string> labels() const override {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < dim(); ++j) out.push_back("beta" + std::to_string(j + 1));
    return out;
  }
  Capabilities capabilities() const override { return {.condition_c = true}; }

  double logdensity(const Dataset& d, std::size_t i, const Vector& b) const override {
    const double eta = row(d, i).dot(b);
    return d.y(i) * eta - detail::softplus(eta);
  }
  Vector score(const Dataset& d, std::size_t i, const Vector& b) const override {
    const Vector xi = row(d, i);
    return (d.y(i) - detail::logistic_cdf(xi.dot(b))) * xi;
  }
  Matrix hessian(const Dataset& d, std::size_t i, const Vector& b) const override {
    const Vector xi = row(d, i);
    const double p = detail::logistic_cdf(xi.dot(b));
    return -p * (1.0 - p) * xi * xi.transpose();
  }
  Tensor3 third(const Dataset& d, std::size_t i, const Vector& b) const override {
    const Vector xi = row(d, i);
    const double p = detail::logistic_cdf(xi.dot(b));
    Tensor3 out(dim());
    out.add_outer(-p * (1.0 - p) * (1.0 - 2.0 * p), xi, xi, xi);
    return out;
  }

  double loglik(const Dataset& d, const Vector& b) const override {
    const Matrix& xs = d.covariates ? *d.covariates : x_;
    const Vector eta = xs * b;
    double s = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      s += d.responses(i, 0) * eta[i] - detail::softplus(eta[i]);
    return s;
  }

  std::optional<CumulantSet> analytic_cumulants(const Vector& b) const override {
    const std::size_t p = dim();
    CumulantSet c = CumulantSet::zeros(p);
    const double inv_n = 1.0 / static_cast<double>(x_.rows());
    for (Eigen::Index i = 0; i < x_.rows(); ++i) {
      const Vector xi = x_.row(i).transpose();
      const double f = detail::logistic_cdf(xi.dot(b));
      const double w = f * (1.0 - f);
      const double w2 = w * (1.0 - 2.0 * f);
      c.kappa2_cross += inv_n * w * xi * xi.transpose();
      c.kappa3_pure.add_outer(-inv_n * w2, xi, xi, xi);
      c.kappa3_score.add_outer(inv_n * w2, xi, xi, xi);
    }
    c.kappa2_hess = -c.kappa2_cross;
    c.finalize();
    return c;
  }

  Matrix fisher_information(const Vector& b) const override {
    const Vector eta = x_ * b;
    Vector w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double f = detail::logistic_cdf(eta[i]);
      w[i] = f * (1.0 - f);
    }
    return x_.transpose() * w.asDiagonal() * x_ / static_cast<double>(x_.rows());
  }

  std::size_t unit_count() const override { return static_cast<std::size_t>(x_.rows()); }

  Dataset draw_units(const Vector& b, std::size_t count, Rng& rng) const override {
    Dataset d;
    d.responses.resize(static_cast<Eigen::Index>(count), 1);
    Matrix xs(static_cast<Eigen::Index>(count), x_.cols());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t m = 0; m < count; ++m) {
      const auto r = static_cast<Eigen::Index>(m % unit_count());
      const auto me = static_cast<Eigen::Index>(m);
      xs.row(me) = x_.row(r);
      d.responses(me, 0) = u(rng) < detail::logistic_cdf(x_.row(r).dot(b)) ? 1.0 : 0.0;
    }
    d.covariates = std::move(xs);
    return d;
  }

  Vector initial_guess(const Dataset&) const override {
    return Vector::Zero(static_cast<Eigen::Index>(dim()));
  }

  std::string fisher_formula() const override { return "|X'W(beta)X|"; }

  /// log|X'W(beta)X| with the unscaled design.
  double log_det_xwx(const Vector& b) const {
    return log_det_spd(static_cast<double>(x_.rows()) * fisher_information(b), "X'WX");
  }

 private:
  Vector row(const Dataset& d, std::size_t i) const {
    if (d.covariates) return d.x(i);
    return x_.row(static_cast<Eigen::Index>(i % unit_count())).transpose();
  }

  Matrix x_;
};

inline std::shared_ptr<LogisticModel> build_logistic(Matrix design) {
  return std::make_shared<LogisticModel>(std::move(design));
}

/// Covariance with entries rho^|i-j|.
inline Matrix ar1_covariance(std::size_t p, double rho) {
  Matrix s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::pow(rho, std::abs(static_cast<double>(i) - static_cast<double>(j)));
  return s;
}

/// Rows drawn i.i.d. from N_p(0, sigma).
inline Matrix draw_gaussian_design(std::size_t rows, const Matrix& sigma, Rng& rng) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw UsageError("covariate covariance is not positive definite");
  const Matrix l = llt.matrixL();
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(rows), sigma.rows());
  Vector e(sigma.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = z(rng);
    x.row(i) = (l * e).transpose();
  }
  return x;
}

}  // namespace brprior
