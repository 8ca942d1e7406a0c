#pragma once

#include "brprior/model.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <random>

namespace brprior {

/// Ingredients of a canonical-form family p(y|theta) = a(y) c(theta) exp(theta . T(y)).
///
/// The derivatives of log c are supplied analytically; the model's Hessian
/// is then data-free, so kappa_{r,st} vanishes.
struct CanonicalFamily {
  std::string name;
  std::vector<std::string> labels;
  std::function<bool(const Vector&)> in_domain = [](const Vector& t) { return t.allFinite(); };
  std::function<double(const Vector&)> log_c;
  std::function<Vector(const Vector&)> grad_log_c;
  std::function<Matrix(const Vector&)> hess_log_c;
  std::function<Tensor3(const Vector&)> third_log_c;
  std::function<Vector(const Vector& y)> sufficient;  // T(y)
  std::function<double(const Vector& y)> log_base;    // log a(y)
  std::function<Vector(const Vector& theta, Rng&)> draw;
  std::function<Vector(const Dataset&)> initial_guess;
  // Closed-form posterior mean under a prior kind, when the family has one.
  std::function<std::optional<Vector>(const Dataset&, PriorKind)> exact_posterior_mean;
};

class ExponentialFamilyModel final : public Model {
 public:
  explicit ExponentialFamilyModel(CanonicalFamily f) : f_(std::move(f)) {
    if (!f_.log_c || !f_.grad_log_c || !f_.hess_log_c || !f_.third_log_c || !f_.sufficient ||
        !f_.draw)
      throw UsageError("canonical family '" + f_.name + "' is missing a required function");
    if (f_.labels.empty()) throw UsageError("canonical family needs parameter labels");
  }

  std::string name() const override { return f_.name; }
  std::size_t dim() const override { return f_.labels.size(); }
  std::vector<std::string> labels() const override { return f_.labels; }
  bool in_domain(const Vector& theta) const override { return f_.in_domain(theta); }
  Capabilities capabilities() const override {
    return {.one_dim_iid = dim() == 1, .condition_c = true, .constant_fisher = false};
  }

  double logdensity(const Dataset& data, std::size_t i, const Vector& theta) const override {
    check(theta);
    const Vector y = data.row(i);
    const double base = f_.log_base ? f_.log_base(y) : 0.0;
    return base + f_.log_c(theta) + theta.dot(f_.sufficient(y));
  }
  Vector score(const Dataset& data, std::size_t i, const Vector& theta) const override {
    check(theta);
    return f_.grad_log_c(theta) + f_.sufficient(data.row(i));
  }
  Matrix hessian(const Dataset&, std::size_t, const Vector& theta) const override {
    check(theta);
    return f_.hess_log_c(theta);
  }
  Tensor3 third(const Dataset&, std::size_t, const Vector& theta) const override {
    check(theta);
    return f_.third_log_c(theta);
  }

  // Cumulants of T are derivatives of -log c, so every array follows from
  // the supplied derivatives without integration.
  std::optional<CumulantSet> analytic_cumulants(const Vector& theta) const override {
    check(theta);
    CumulantSet c = CumulantSet::zeros(dim());
    const Matrix h = f_.hess_log_c(theta);
    const Tensor3 t = f_.third_log_c(theta);
    c.kappa2_hess = h;
    c.kappa2_cross = -h;
    c.kappa3_pure = t;
    c.kappa3_score = -1.0 * t;
    c.finalize();
    return c;
  }

  Dataset draw_units(const Vector& theta, std::size_t count, Rng& rng) const override {
    check(theta);
    Dataset d;
    const Vector first = f_.draw(theta, rng);
    d.responses.resize(static_cast<Eigen::Index>(count), first.size());
    if (count > 0) d.responses.row(0) = first.transpose();
    for (std::size_t m = 1; m < count; ++m)
      d.responses.row(static_cast<Eigen::Index>(m)) = f_.draw(theta, rng).transpose();
    return d;
  }

  Vector initial_guess(const Dataset& data) const override {
    if (f_.initial_guess) return f_.initial_guess(data);
    return Vector::Zero(static_cast<Eigen::Index>(dim()));
  }

  std::string fisher_formula() const override { return "|-d2 log c(theta)|"; }

  std::optional<Vector> exact_posterior_mean(const Dataset& data, PriorKind k) const override {
    if (!f_.exact_posterior_mean) return std::nullopt;
    return f_.exact_posterior_mean(data, k);
  }

 private:
  void check(const Vector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != dim() || !f_.in_domain(theta))
      throw NumericError(f_.name + ": invalid natural-parameter point");
  }

  CanonicalFamily f_;
};

inline std::shared_ptr<Model> build_exponential_family(CanonicalFamily f) {
  return std::make_shared<ExponentialFamilyModel>(std::move(f));
}

/// Exponential distribution with rate theta: log p = log theta - theta y.
inline std::shared_ptr<Model> make_exponential_rate() {
  CanonicalFamily f;
  f.name = "exponential";
  f.labels = {"theta"};
  f.in_domain = [](const Vector& t) { return t.size() == 1 && std::isfinite(t[0]) && t[0] > 0.0; };
  f.log_c = [](const Vector& t) { return std::log(t[0]); };
  f.grad_log_c = [](const Vector& t) { return Vector::Constant(1, 1.0 / t[0]); };
  f.hess_log_c = [](const Vector& t) { return Matrix::Constant(1, 1, -1.0 / (t[0] * t[0])); };
  f.third_log_c = [](const Vector& t) {
    Tensor3 out(1);
    out(0, 0, 0) = 2.0 / (t[0] * t[0] * t[0]);
    return out;
  };
  f.sufficient = [](const Vector& y) { return Vector::Constant(1, -y[0]); };
  f.draw = [](const Vector& t, Rng& rng) {
    std::exponential_distribution<double> e(t[0]);
    return Vector::Constant(1, e(rng));
  };
  f.initial_guess = [](const Dataset& d) {
    return Vector::Constant(1, 1.0 / d.responses.col(0).mean());
  };
  // Prior theta^a gives a Gamma(n + a + 1, sum y) posterior.
  f.exact_posterior_mean = [](const Dataset& d, PriorKind k) -> std::optional<Vector> {
    double a = 0.0;
    switch (k) {
      case PriorKind::BR: a = -2.0; break;
      case PriorKind::BM:
      case PriorKind::MM:
      case PriorKind::Jeffreys: a = -1.0; break;
      case PriorKind::Uniform: a = 0.0; break;
      default: return std::nullopt;
    }
    const double shape = static_cast<double>(d.size()) + a + 1.0;
    if (shape <= 0.0) return std::nullopt;
    return Vector::Constant(1, shape / d.responses.col(0).sum());
  };
  return build_exponential_family(std::move(f));
}

namespace detail {
inline double logistic_cdf(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}
inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}
}  // namespace detail

/// Bernoulli with canonical (logit) parameter: log c = -log(1 + e^theta).
inline std::shared_ptr<Model> make_bernoulli_canonical() {
  CanonicalFamily f;
  f.name = "bernoulli-logit";
  f.labels = {"eta"};
  f.log_c = [](const Vector& t) { return -detail::softplus(t[0]); };
  f.grad_log_c = [](const Vector& t) { return Vector::Constant(1, -detail::logistic_cdf(t[0])); };
  f.hess_log_c = [](const Vector& t) {
    const double p = detail::logistic_cdf(t[0]);
    return Matrix::Constant(1, 1, -p * (1.0 - p));
  };
  f.third_log_c = [](const Vector& t) {
    const double p = detail::logistic_cdf(t[0]);
    Tensor3 out(1);
    out(0, 0, 0) = -p * (1.0 - p) * (1.0 - 2.0 * p);
    return out;
  };
  f.sufficient = [](const Vector& y) { return Vector::Constant(1, y[0]); };
  f.draw = [](const Vector& t, Rng& rng) {
    std::bernoulli_distribution b(detail::logistic_cdf(t[0]));
    return Vector::Constant(1, b(rng) ? 1.0 : 0.0);
  };
  f.initial_guess = [](const Dataset&) { return Vector::Zero(1); };
  return build_exponential_family(std::move(f));
}

/// Poisson with canonical (log-rate) parameter: log c = -e^theta, a(y) = 1/y!.
inline std::shared_ptr<Model> make_poisson_canonical() {
  CanonicalFamily f;
  f.name = "poisson-log";
  f.labels = {"log_lambda"};
  f.log_c = [](const Vector& t) { return -std::exp(t[0]); };
  f.grad_log_c = [](const Vector& t) { return Vector::Constant(1, -std::exp(t[0])); };
  f.hess_log_c = [](const Vector& t) { return Matrix::Constant(1, 1, -std::exp(t[0])); };
  f.third_log_c = [](const Vector& t) {
    Tensor3 out(1);
    out(0, 0, 0) = -std::exp(t[0]);
    return out;
  };
  f.sufficient = [](const Vector& y) { return Vector::Constant(1, y[0]); };
  f.log_base = [](const Vector& y) { return -std::lgamma(y[0] + 1.0); };
  f.draw = [](const Vector& t, Rng& rng) {
    std::poisson_distribution<long> p(std::exp(t[0]));
    return Vector::Constant(1, static_cast<double>(p(rng)));
  };
  f.initial_guess = [](const Dataset& d) {
    return Vector::Constant(1, std::log(std::max(d.responses.col(0).mean(), 0.5)));
  };
  return build_exponential_family(std::move(f));
}

}  // namespace brprior
