#pragma once

#include "brprior/model.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace brprior {

/// Poisson with mean parameter lambda. The Hessian -y/lambda^2 depends on
/// the data, so only the one-dimensional closed form applies.
class PoissonMeanModel final : public Model {
 public:
  std::string name() const override { return "poisson"; }
  std::size_t dim() const override { return 1; }
  std::vector<std::string> labels() const override { return {"lambda"}; }
  bool in_domain(const Vector& t) const override {
    return t.size() == 1 && std::isfinite(t[0]) && t[0] > 0.0;
  }
  Capabilities capabilities() const override { return {.one_dim_iid = true}; }

  double logdensity(const Dataset& d, std::size_t i, const Vector& t) const override {
    const double y = d.y(i);
    return y * std::log(t[0]) - t[0] - std::lgamma(y + 1.0);
  }
  Vector score(const Dataset& d, std::size_t i, const Vector& t) const override {
    return Vector::Constant(1, d.y(i) / t[0] - 1.0);
  }
  Matrix hessian(const Dataset& d, std::size_t i, const Vector& t) const override {
    return Matrix::Constant(1, 1, -d.y(i) / (t[0] * t[0]));
  }
  Tensor3 third(const Dataset& d, std::size_t i, const Vector& t) const override {
    Tensor3 out(1);
    out(0, 0, 0) = 2.0 * d.y(i) / (t[0] * t[0] * t[0]);
    return out;
  }

  std::optional<CumulantSet> analytic_cumulants(const Vector& t) const override {
    if (!in_domain(t)) throw NumericError("poisson: lambda must be positive");
    const double l = t[0];
    CumulantSet c = CumulantSet::zeros(1);
    c.kappa2_cross(0, 0) = 1.0 / l;
    c.kappa2_hess(0, 0) = -1.0 / l;
    c.kappa3_pure(0, 0, 0) = 2.0 / (l * l);
    c.kappa3_cross(0, 0, 0) = -1.0 / (l * l);
    c.kappa3_score(0, 0, 0) = 1.0 / (l * l);
    c.finalize();
    return c;
  }

  Dataset draw_units(const Vector& t, std::size_t count, Rng& rng) const override {
    std::poisson_distribution<long> p(t[0]);
    Dataset d;
    d.responses.resize(static_cast<Eigen::Index>(count), 1);
    for (std::size_t m = 0; m < count; ++m)
      d.responses(static_cast<Eigen::Index>(m), 0) = static_cast<double>(p(rng));
    return d;
  }

  Vector initial_guess(const Dataset& d) const override {
    return Vector::Constant(1, std::max(d.responses.col(0).mean(), 1e-3));
  }

  // Prior lambda^a gives a Gamma(sum y + a + 1, n) posterior.
  std::optional<Vector> exact_posterior_mean(const Dataset& d, PriorKind k) const override {
    double a = 0.0;
    switch (k) {
      case PriorKind::BR:
      case PriorKind::MM: a = -1.0; break;
      case PriorKind::BM:
      case PriorKind::Uniform: a = 0.0; break;
      case PriorKind::Jeffreys: a = -0.5; break;
      default: return std::nullopt;
    }
    const double shape = d.responses.col(0).sum() + a + 1.0;
    if (shape <= 0.0) return std::nullopt;
    return Vector::Constant(1, shape / static_cast<double>(d.size()));
  }
};

inline std::shared_ptr<Model> make_poisson() { return std::make_shared<PoissonMeanModel>(); }

}  // namespace brprior
