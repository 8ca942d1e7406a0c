#pragma once

#include "brprior/model.hpp"
#include "brprior/models/exponential_family.hpp"

#include <boost/math/quadrature/sinh_sinh.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <random>

namespace brprior {

/// Expectations of kernel derivatives under the kernel density e^{g}.
struct KernelMoments {
  double mass = 1.0;    // integral of e^g
  double fisher = 0.0;  // E[g'^2]
  double mean_g2 = 0.0; // E[g'']
  double mean_g3 = 0.0; // E[g''']
  double g1_g2 = 0.0;   // E[g' g'']
  double g1_cubed = 0.0;// E[g'^3]
};

/// A one-dimensional log-density kernel g with three derivatives.
struct Kernel1d {
  std::string name;
  std::function<double(double)> g, g1, g2, g3;
  std::function<double(Rng&)> draw;
  KernelMoments moments;
};

/// Moments of a kernel by double-exponential quadrature over the real line.
inline KernelMoments kernel_moments_by_quadrature(const Kernel1d& k) {
  boost::math::quadrature::sinh_sinh<double> q;
  auto expect = [&](auto&& f) {
    return q.integrate([&](double z) {
      const double w = std::exp(k.g(z));
      return w == 0.0 ? 0.0 : f(z) * w;
    });
  };
  KernelMoments m;
  m.mass = expect([](double) { return 1.0; });
  m.fisher = expect([&](double z) { return k.g1(z) * k.g1(z); }) / m.mass;
  m.mean_g2 = expect([&](double z) { return k.g2(z); }) / m.mass;
  m.mean_g3 = expect([&](double z) { return k.g3(z); }) / m.mass;
  m.g1_g2 = expect([&](double z) { return k.g1(z) * k.g2(z); }) / m.mass;
  m.g1_cubed = expect([&](double z) { return k.g1(z) * k.g1(z) * k.g1(z); }) / m.mass;
  return m;
}

/// User kernel: moments are computed numerically and the kernel is trusted.
inline Kernel1d make_kernel(std::string name, std::function<double(double)> g,
                            std::function<double(double)> g1, std::function<double(double)> g2,
                            std::function<double(double)> g3, std::function<double(Rng&)> draw) {
  Kernel1d k{std::move(name), std::move(g), std::move(g1), std::move(g2), std::move(g3),
             std::move(draw), {}};
  k.moments = kernel_moments_by_quadrature(k);
  return k;
}

inline Kernel1d gaussian_kernel(double sd = 1.0) {
  if (!(sd > 0.0)) throw UsageError("gaussian kernel: sd must be positive");
  const double v = sd * sd;
  Kernel1d k;
  k.name = "gaussian";
  k.g = [v](double z) { return -z * z / (2.0 * v) - 0.5 * std::log(2.0 * M_PI * v); };
  k.g1 = [v](double z) { return -z / v; };
  k.g2 = [v](double) { return -1.0 / v; };
  k.g3 = [](double) { return 0.0; };
  k.draw = [sd](Rng& rng) { return std::normal_distribution<double>(0.0, sd)(rng); };
  k.moments = {.mass = 1.0, .fisher = 1.0 / v, .mean_g2 = -1.0 / v};
  return k;
}

/// Standard logistic density e^{-z} / (1 + e^{-z})^2.
inline Kernel1d logistic_kernel() {
  Kernel1d k;
  k.name = "logistic";
  k.g = [](double z) { return -std::abs(z) - 2.0 * std::log1p(std::exp(-std::abs(z))); };
  k.g1 = [](double z) { return 1.0 - 2.0 * detail::logistic_cdf(z); };
  k.g2 = [](double z) {
    const double f = detail::logistic_cdf(z);
    return -2.0 * f * (1.0 - f);
  };
  k.g3 = [](double z) {
    const double f = detail::logistic_cdf(z);
    return -2.0 * f * (1.0 - f) * (1.0 - 2.0 * f);
  };
  k.draw = [](Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double p = u(rng);
    while (p <= 0.0) p = u(rng);
    return std::log(p / (1.0 - p));
  };
  k.moments = {.mass = 1.0, .fisher = 1.0 / 3.0, .mean_g2 = -1.0 / 3.0};
  return k;
}

inline Kernel1d builtin_kernel(const std::string& name) {
  Kernel1d k;
  if (name == "gaussian") k = gaussian_kernel();
  else if (name == "logistic") k = logistic_kernel();
  else throw UsageError("unknown kernel '" + name + "' (valid: gaussian, logistic)");
  const double mass = kernel_moments_by_quadrature(k).mass;
  if (std::abs(mass - 1.0) > 1e-8) throw UsageError("kernel '" + name + "' is not normalized");
  return k;
}

/// Multivariate location family p(y|mu) = prod_j e^{g(y_j - mu_j)}.
/// Responses are n x d. Fisher information is E[g'^2] I for every mu.
class LocationModel final : public Model {
 public:
  LocationModel(Kernel1d kernel, std::size_t d) : k_(std::move(kernel)), d_(d) {
    if (d < 1) throw UsageError("location: dimension must be positive");
  }

  const Kernel1d& kernel() const { return k_; }

  std::string name() const override { return "location"; }
  std::size_t dim() const override { return d_; }
  std::vector<std::string> labels() const override {
    if (d_ == 1) return {"mu"};
    std::vector<std::string> out;
    for (std::size_t j = 0; j < d_; ++j) out.push_back("mu" + std::to_string(j + 1));
    return out;
  }
  Capabilities capabilities() const override {
    return {.one_dim_iid = d_ == 1, .condition_c = false, .constant_fisher = true};
  }

  double logdensity(const Dataset& d, std::size_t i, const Vector& mu) const override {
    const Vector y = d.row(i);
    double s = 0.0;
    for (Eigen::Index j = 0; j < mu.size(); ++j) s += k_.g(y[j] - mu[j]);
    return s;
  }
  Vector score(const Dataset& d, std::size_t i, const Vector& mu) const override {
    const Vector y = d.row(i);
    Vector out(mu.size());
    for (Eigen::Index j = 0; j < mu.size(); ++j) out[j] = -k_.g1(y[j] - mu[j]);
    return out;
  }
  Matrix hessian(const Dataset& d, std::size_t i, const Vector& mu) const override {
    const Vector y = d.row(i);
    Matrix out = Matrix::Zero(mu.size(), mu.size());
    for (Eigen::Index j = 0; j < mu.size(); ++j) out(j, j) = k_.g2(y[j] - mu[j]);
    return out;
  }
  Tensor3 third(const Dataset& d, std::size_t i, const Vector& mu) const override {
    const Vector y = d.row(i);
    Tensor3 out(d_);
    for (std::size_t j = 0; j < d_; ++j) {
      const auto je = static_cast<Eigen::Index>(j);
      out(j, j, j) = -k_.g3(y[je] - mu[je]);
    }
    return out;
  }

  // Components are independent with mean-zero scores, so only the
  // all-equal-index entries of the third-order arrays survive.
  std::optional<CumulantSet> analytic_cumulants(const Vector&) const override {
    const auto& m = k_.moments;
    CumulantSet c = CumulantSet::zeros(d_);
    for (std::size_t j = 0; j < d_; ++j) {
      const auto je = static_cast<Eigen::Index>(j);
      c.kappa2_cross(je, je) = m.fisher;
      c.kappa2_hess(je, je) = m.mean_g2;
      c.kappa3_pure(j, j, j) = -m.mean_g3;
      c.kappa3_cross(j, j, j) = -m.g1_g2;
      c.kappa3_score(j, j, j) = -m.g1_cubed;
    }
    c.finalize();
    return c;
  }

  Dataset draw_units(const Vector& mu, std::size_t count, Rng& rng) const override {
    Dataset d;
    d.responses.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d_));
    for (std::size_t m = 0; m < count; ++m)
      for (std::size_t j = 0; j < d_; ++j)
        d.responses(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) =
            mu[static_cast<Eigen::Index>(j)] + k_.draw(rng);
    return d;
  }

  Vector initial_guess(const Dataset& d) const override {
    return d.responses.colwise().mean().transpose();
  }

  // Gaussian kernel with every prior kind reducing to a flat prior: the
  // posterior is N(ybar, sd^2 / n) per component.
  std::optional<Vector> exact_posterior_mean(const Dataset& d, PriorKind k) const override {
    if (k_.name != "gaussian" || k == PriorKind::Custom) return std::nullopt;
    return d.responses.colwise().mean().transpose();
  }

 private:
  Kernel1d k_;
  std::size_t d_;
};

inline std::shared_ptr<Model> build_location(Kernel1d kernel, std::size_t d) {
  return std::make_shared<LocationModel>(std::move(kernel), d);
}

/// Regression with location errors: p(y_i|beta) = e^{g(y_i - z_i'beta)} on a
/// fixed design Z. Information is -E[g''] Z'Z, free of beta.
class LocationRegressionModel final : public Model {
 public:
  LocationRegressionModel(Kernel1d kernel, Matrix design) : k_(std::move(kernel)), z_(std::move(design)) {
    if (z_.rows() < 1 || z_.cols() < 1) throw UsageError("linreg: empty design");
    Eigen::FullPivLU<Matrix> lu(z_.transpose() * z_);
    if (lu.rank() < z_.cols() || lu.rcond() < 1e-12)
      throw UsageError("linreg: rank-deficient design (Z'Z singular)");
    const double inv_n = 1.0 / static_cast<double>(z_.rows());
    m2_ = z_.transpose() * z_ * inv_n;
    m3_ = Tensor3(dim());
    for (Eigen::Index i = 0; i < z_.rows(); ++i) {
      const Vector zi = z_.row(i).transpose();
      m3_.add_outer(inv_n, zi, zi, zi);
    }
  }

  const Matrix& design() const { return z_; }
  const Kernel1d& kernel() const { return k_; }

  std::string name() const override { return "linreg"; }
  std::size_t dim() const override { return static_cast<std::size_t>(z_.cols()); }
  std::vector<std::string> labels() const override {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < dim(); ++j) out.push_back("beta" + std::to_string(j + 1));
    return out;
  }
  Capabilities capabilities() const override { return {.constant_fisher = true}; }

  double logdensity(const Dataset& d, std::size_t i, const Vector& b) const override {
    return k_.g(d.y(i) - row(d, i).dot(b));
  }
  Vector score(const Dataset& d, std::size_t i, const Vector& b) const override {
    const Vector zi = row(d, i);
    return -k_.g1(d.y(i) - zi.dot(b)) * zi;
  }
  Matrix hessian(const Dataset& d, std::size_t i, const Vector& b) const override {
    const Vector zi = row(d, i);
    return k_.g2(d.y(i) - zi.dot(b)) * zi * zi.transpose();
  }
  Tensor3 third(const Dataset& d, std::size_t i, const Vector& b) const override {
    const Vector zi = row(d, i);
    Tensor3 out(dim());
    out.add_outer(-k_.g3(d.y(i) - zi.dot(b)), zi, zi, zi);
    return out;
  }

  std::optional<CumulantSet> analytic_cumulants(const Vector&) const override {
    const auto& m = k_.moments;
    CumulantSet c = CumulantSet::zeros(dim());
    c.kappa2_cross = m.fisher * m2_;
    c.kappa2_hess = m.mean_g2 * m2_;
    c.kappa3_pure = -m.mean_g3 * m3_;
    c.kappa3_cross = -m.g1_g2 * m3_;
    c.kappa3_score = -m.g1_cubed * m3_;
    c.finalize();
    return c;
  }

  std::size_t unit_count() const override { return static_cast<std::size_t>(z_.rows()); }

  Dataset draw_units(const Vector& b, std::size_t count, Rng& rng) const override {
    Dataset d;
    d.responses.resize(static_cast<Eigen::Index>(count), 1);
    Matrix zs(static_cast<Eigen::Index>(count), z_.cols());
    for (std::size_t m = 0; m < count; ++m) {
      const auto r = static_cast<Eigen::Index>(m % unit_count());
      const auto me = static_cast<Eigen::Index>(m);
      zs.row(me) = z_.row(r);
      d.responses(me, 0) = z_.row(r).dot(b) + k_.draw(rng);
    }
    d.covariates = std::move(zs);
    return d;
  }

  /// Least squares on the data's design.
  Vector initial_guess(const Dataset& d) const override {
    const Matrix zs = d.covariates ? *d.covariates : z_.topRows(static_cast<Eigen::Index>(d.size()));
    return zs.colPivHouseholderQr().solve(d.responses.col(0));
  }

  std::optional<Vector> exact_posterior_mean(const Dataset& d, PriorKind k) const override {
    if (k_.name != "gaussian" || k == PriorKind::Custom) return std::nullopt;
    return initial_guess(d);
  }

 private:
  Vector row(const Dataset& d, std::size_t i) const {
    if (d.covariates) return d.x(i);
    return z_.row(static_cast<Eigen::Index>(i % unit_count())).transpose();
  }

  Kernel1d k_;
  Matrix z_;
  Matrix m2_;
  Tensor3 m3_;
};

inline std::shared_ptr<Model> build_location_regression(Kernel1d kernel, Matrix design) {
  return std::make_shared<LocationRegressionModel>(std::move(kernel), std::move(design));
}

}  // namespace brprior
