#pragma once

#include "brprior/model.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <memory>
#include <random>

namespace brprior {

/// Gumbel (maximum) location model with known scale sigma:
/// log p = -log sigma - z - e^{-z}, z = (y - mu) / sigma.
class GumbelModel final : public Model {
 public:
  explicit GumbelModel(double sigma = 1.0) : sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw UsageError("gumbel: sigma must be positive");
  }

  double sigma() const { return sigma_; }

  std::string name() const override { return "gumbel"; }
  std::size_t dim() const override { return 1; }
  std::vector<std::string> labels() const override { return {"mu"}; }
  Capabilities capabilities() const override {
    return {.one_dim_iid = true, .condition_c = false, .constant_fisher = true};
  }

  double logdensity(const Dataset& d, std::size_t i, const Vector& t) const override {
    const double z = (d.y(i) - t[0]) / sigma_;
    return -std::log(sigma_) - z - std::exp(-z);
  }
  Vector score(const Dataset& d, std::size_t i, const Vector& t) const override {
    const double z = (d.y(i) - t[0]) / sigma_;
    return Vector::Constant(1, (1.0 - std::exp(-z)) / sigma_);
  }
  Matrix hessian(const Dataset& d, std::size_t i, const Vector& t) const override {
    const double z = (d.y(i) - t[0]) / sigma_;
    return Matrix::Constant(1, 1, -std::exp(-z) / (sigma_ * sigma_));
  }
  Tensor3 third(const Dataset& d, std::size_t i, const Vector& t) const override {
    const double z = (d.y(i) - t[0]) / sigma_;
    Tensor3 out(1);
    out(0, 0, 0) = -std::exp(-z) / (sigma_ * sigma_ * sigma_);
    return out;
  }

  // e^{-z} ~ Exp(1), so every expectation is an exponential moment.
  std::optional<CumulantSet> analytic_cumulants(const Vector&) const override {
    const double s2 = sigma_ * sigma_;
    const double s3 = s2 * sigma_;
    CumulantSet c = CumulantSet::zeros(1);
    c.kappa2_cross(0, 0) = 1.0 / s2;
    c.kappa2_hess(0, 0) = -1.0 / s2;
    c.kappa3_pure(0, 0, 0) = -1.0 / s3;
    c.kappa3_cross(0, 0, 0) = 1.0 / s3;
    c.kappa3_score(0, 0, 0) = -2.0 / s3;
    c.finalize();
    return c;
  }

  Dataset draw_units(const Vector& t, std::size_t count, Rng& rng) const override {
    std::extreme_value_distribution<double> g(t[0], sigma_);
    Dataset d;
    d.responses.resize(static_cast<Eigen::Index>(count), 1);
    for (std::size_t m = 0; m < count; ++m) d.responses(static_cast<Eigen::Index>(m), 0) = g(rng);
    return d;
  }

  Vector initial_guess(const Dataset& d) const override {
    return Vector::Constant(1, sigma_ * (std::log(static_cast<double>(d.size())) - log_s(d)));
  }

  std::optional<DeclaredPrior> declared_prior(PriorKind k) const override {
    const double s = sigma_;
    if (k == PriorKind::MM)
      return DeclaredPrior{[s](const Vector& t) { return t[0] / (2.0 * s); }, "exp(mu/(2 sigma))"};
    if (k == PriorKind::BM)
      return DeclaredPrior{[s](const Vector& t) { return -t[0] / (2.0 * s); }, "exp(-mu/(2 sigma))"};
    return std::nullopt;
  }

  // Under prior e^{c mu}, t = S e^{mu/sigma} is Gamma(n + c sigma) with
  // S = sum e^{-y/sigma}, so E[mu] = sigma (digamma(n + c sigma) - log S).
  std::optional<Vector> exact_posterior_mean(const Dataset& d, PriorKind k) const override {
    double shift = 0.0;
    switch (k) {
      case PriorKind::BR:
      case PriorKind::Jeffreys:
      case PriorKind::Uniform: shift = 0.0; break;
      case PriorKind::MM: shift = 0.5; break;
      case PriorKind::BM: shift = -0.5; break;
      default: return std::nullopt;
    }
    const double shape = static_cast<double>(d.size()) + shift;
    if (shape <= 0.0) return std::nullopt;
    return Vector::Constant(1, sigma_ * (boost::math::digamma(shape) - log_s(d)));
  }

 private:
  double log_s(const Dataset& d) const {
    const Vector a = -d.responses.col(0) / sigma_;
    const double m = a.maxCoeff();
    return m + std::log((a.array() - m).exp().sum());
  }

  double sigma_;
};

inline std::shared_ptr<Model> build_gumbel(double sigma_known = 1.0) {
  return std::make_shared<GumbelModel>(sigma_known);
}

}  // namespace brprior
