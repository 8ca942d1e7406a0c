#pragma once

#include "brprior/cumulants.hpp"
#include "brprior/model.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <functional>
#include <optional>
#include <string>

namespace brprior {

/// A prior represented by its log-gradient field, with an unnormalized
/// log-density when one is known or has been reconstructed.
struct PriorField {
  PriorKind kind = PriorKind::Custom;
  std::function<Vector(const Vector&)> log_grad;
  std::function<double(const Vector&)> log_density;  // may be empty
  std::string closed_form;                           // empty when not closed-form

  bool has_density() const { return static_cast<bool>(log_density); }

  /// log pi(theta with theta_j := value) - log pi(theta). Uses the density
  /// when present, otherwise integrates the j-th gradient component along
  /// the one-dimensional move.
  double log_density_diff(const Vector& theta, std::size_t j, double value) const {
    const auto je = static_cast<Eigen::Index>(j);
    if (has_density()) {
      Vector moved = theta;
      moved[je] = value;
      return log_density(moved) - log_density(theta);
    }
    return integrate_component(theta, j, theta[je], value);
  }

  /// Integral of the j-th gradient component over theta_j in [from, to]
  /// with the other coordinates held at theta.
  double integrate_component(const Vector& theta, std::size_t j, double from, double to) const {
    if (from == to) return 0.0;
    const auto je = static_cast<Eigen::Index>(j);
    Vector p = theta;
    auto f = [&](double x) {
      p[je] = x;
      return log_grad(p)[je];
    };
    // Split long moves so 20-point Gauss-Legendre stays accurate.
    const int pieces = std::max(1, static_cast<int>(std::ceil(std::abs(to - from) /
                                                              (0.25 * std::max(1.0, std::abs(from))))));
    const int capped = std::min(pieces, 64);
    double sum = 0.0;
    const double w = (to - from) / capped;
    for (int k = 0; k < capped; ++k)
      sum += boost::math::quadrature::gauss<double, 20>::integrate(f, from + k * w, from + (k + 1) * w);
    return sum;
  }
};

/// Thrown by closed_form_br when the model declares none of the structures
/// that give a closed-form bias-reduction prior.
class UnsupportedClosedForm : public UsageError {
 public:
  using UsageError::UsageError;
};

namespace detail {

inline CumulantSet cumulants_at(const Model& model, const Vector& theta) {
  if (!model.in_domain(theta)) throw NumericError(model.name() + ": theta outside parameter space");
  auto c = model.analytic_cumulants(theta);
  if (!c) throw NumericError(model.name() + ": analytic cumulants unavailable");
  return *std::move(c);
}

// sum_{r,s} kappa^{r,s} kappa_{rsj}
inline double contract_pure(const CumulantSet& c, std::size_t j) {
  double s = 0.0;
  for (std::size_t r = 0; r < c.dim(); ++r)
    for (std::size_t q = 0; q < c.dim(); ++q)
      s += c.fisher_inv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) *
           c.kappa3_pure(r, q, j);
  return s;
}

// sum_{r,s} kappa^{r,s} kappa_{r,js}
inline double contract_cross(const CumulantSet& c, std::size_t j) {
  double s = 0.0;
  for (std::size_t r = 0; r < c.dim(); ++r)
    for (std::size_t q = 0; q < c.dim(); ++q)
      s += c.fisher_inv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) *
           c.kappa3_cross(r, j, q);
  return s;
}

/// Central-difference gradient with one Richardson step; the step shrinks
/// until both probes stay inside the domain.
inline Vector richardson_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                  const std::function<bool(const Vector&)>& in_domain) {
  Vector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double h = 1e-3 * std::max(1.0, std::abs(x[j]));
    auto probe = [&](double step) {
      Vector up = x, dn = x;
      up[j] += step;
      dn[j] -= step;
      if (!in_domain(up) || !in_domain(dn)) return std::optional<double>{};
      return std::optional<double>{(f(up) - f(dn)) / (2.0 * step)};
    };
    std::optional<double> d1, d2;
    for (int tries = 0; tries < 60; ++tries, h *= 0.5) {
      d1 = probe(h);
      d2 = probe(h / 2);
      if (d1 && d2) break;
    }
    if (!d1 || !d2) throw NumericError("gradient probe cannot stay inside the parameter space");
    g[j] = (4.0 * *d2 - *d1) / 3.0;
  }
  return g;
}

}  // namespace detail

/// Gradient of log pi_BR: g_j = -sum kappa^{r,s} (kappa_{rsj} + kappa_{r,js}).
inline Vector br_log_grad(const Model& model, const Vector& theta) {
  const CumulantSet c = detail::cumulants_at(model, theta);
  Vector g(static_cast<Eigen::Index>(c.dim()));
  for (std::size_t j = 0; j < c.dim(); ++j)
    g[static_cast<Eigen::Index>(j)] = -(detail::contract_pure(c, j) + detail::contract_cross(c, j));
  return g;
}

/// Gradient of log pi_BM (posterior-mode bias reduction):
/// g_j = -sum kappa^{r,s} (kappa_{jrs} / 2 + kappa_{r,js}).
inline Vector bm_log_grad(const Model& model, const Vector& theta) {
  const CumulantSet c = detail::cumulants_at(model, theta);
  Vector g(static_cast<Eigen::Index>(c.dim()));
  for (std::size_t j = 0; j < c.dim(); ++j)
    g[static_cast<Eigen::Index>(j)] =
        -(0.5 * detail::contract_pure(c, j) + detail::contract_cross(c, j));
  return g;
}

/// Gradient of log pi_MM (moment matching): g_j = -(1/2) sum kappa_{jrs} kappa^{r,s}.
inline Vector mm_log_grad(const Model& model, const Vector& theta) {
  const CumulantSet c = detail::cumulants_at(model, theta);
  Vector g(static_cast<Eigen::Index>(c.dim()));
  for (std::size_t j = 0; j < c.dim(); ++j)
    g[static_cast<Eigen::Index>(j)] = -0.5 * detail::contract_pure(c, j);
  return g;
}

/// br - bm - mm; identically zero when pi_BR = pi_BM * pi_MM.
inline Vector factorization_residual(const Model& model, const Vector& theta) {
  return br_log_grad(model, theta) - bm_log_grad(model, theta) - mm_log_grad(model, theta);
}

/// (1/2) log det of the full-sample Fisher information (unnormalized).
inline double jeffreys_log_density(const Model& model, const Vector& theta) {
  if (!model.in_domain(theta)) throw NumericError(model.name() + ": theta outside parameter space");
  return 0.5 * log_det_spd(model.fisher_scale() * model.fisher_information(theta), "Fisher information");
}

inline double log_det_information(const Model& model, const Vector& theta) {
  if (!model.in_domain(theta)) throw NumericError(model.name() + ": theta outside parameter space");
  return log_det_spd(model.fisher_scale() * model.fisher_information(theta), "Fisher information");
}

namespace detail {

inline PriorField density_prior(const Model& model, PriorKind kind,
                                std::function<double(const Vector&)> log_density,
                                std::string formula) {
  PriorField p;
  p.kind = kind;
  p.closed_form = std::move(formula);
  p.log_density = log_density;
  const Model* m = &model;
  p.log_grad = [m, log_density](const Vector& theta) {
    return richardson_gradient(log_density, theta, [m](const Vector& t) { return m->in_domain(t); });
  };
  return p;
}

inline PriorField uniform_prior(PriorKind kind) {
  PriorField p;
  p.kind = kind;
  p.closed_form = "1";
  p.log_density = [](const Vector&) { return 0.0; };
  p.log_grad = [](const Vector& t) { return Vector::Zero(t.size()); };
  return p;
}

}  // namespace detail

inline PriorField uniform_prior() { return detail::uniform_prior(PriorKind::Uniform); }

/// The returned field refers to `model`, which must outlive it.
inline PriorField jeffreys_prior(const Model& model) {
  const Model* m = &model;
  return detail::density_prior(
      model, PriorKind::Jeffreys, [m](const Vector& t) { return jeffreys_log_density(*m, t); },
      model.fisher_formula() + "^(1/2)");
}

/// Closed-form pi_BR from the model's declared structure: a declared fact
/// first, then constant information (uniform), condition (C) (|I|), and
/// one-dimensional i.i.d. (I_1). The field refers to `model`.
inline PriorField closed_form_br(const Model& model) {
  if (auto decl = model.declared_prior(PriorKind::BR))
    return detail::density_prior(model, PriorKind::BR, decl->log_density, decl->formula);
  const Capabilities caps = model.capabilities();
  if (caps.constant_fisher) return detail::uniform_prior(PriorKind::BR);
  const Model* m = &model;
  if (caps.condition_c)
    return detail::density_prior(
        model, PriorKind::BR, [m](const Vector& t) { return log_det_information(*m, t); },
        model.fisher_formula());
  if (caps.one_dim_iid && model.dim() == 1)
    return detail::density_prior(
        model, PriorKind::BR,
        [m](const Vector& t) { return std::log(m->fisher_information(t)(0, 0)); }, "I_1(theta)");
  throw UnsupportedClosedForm(model.name() +
                              ": no closed-form bias-reduction prior; integrate br_log_grad instead");
}

/// Closed form for any prior kind when one is known, else nullopt.
inline std::optional<PriorField> closed_form_prior(const Model& model, PriorKind kind) {
  switch (kind) {
    case PriorKind::Uniform: return uniform_prior();
    case PriorKind::Jeffreys: return jeffreys_prior(model);
    case PriorKind::BR:
      try {
        return closed_form_br(model);
      } catch (const UnsupportedClosedForm&) {
        return std::nullopt;
      }
    case PriorKind::BM:
    case PriorKind::MM: {
      if (auto decl = model.declared_prior(kind))
        return detail::density_prior(model, kind, decl->log_density, decl->formula);
      // Under (C) both fields equal half the gradient of log|I|.
      if (model.capabilities().condition_c) {
        const Model* m = &model;
        return detail::density_prior(
            model, kind, [m](const Vector& t) { return 0.5 * log_det_information(*m, t); },
            model.fisher_formula() + "^(1/2)");
      }
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

/// The cumulant-defined gradient field of a prior kind.
inline std::function<Vector(const Vector&)> gradient_field(const Model& model, PriorKind kind) {
  const Model* m = &model;
  switch (kind) {
    case PriorKind::BR: return [m](const Vector& t) { return br_log_grad(*m, t); };
    case PriorKind::BM: return [m](const Vector& t) { return bm_log_grad(*m, t); };
    case PriorKind::MM: return [m](const Vector& t) { return mm_log_grad(*m, t); };
    case PriorKind::Jeffreys: return jeffreys_prior(model).log_grad;
    case PriorKind::Uniform: return [](const Vector& t) { return Vector::Zero(t.size()); };
    default: throw UsageError("gradient_field: custom priors carry their own field");
  }
}

/// A prior carried only by its cumulant gradient field (no density); MCMC
/// integrates it along coordinate moves. The field refers to `model`.
inline PriorField field_prior(const Model& model, PriorKind kind) {
  PriorField p;
  p.kind = kind;
  p.log_grad = gradient_field(model, kind);
  return p;
}

/// Antisymmetric part dg_j/dtheta_k - dg_k/dtheta_j of the Jacobian of a
/// gradient field, by central differences with step 1e-5 * max(1, |theta_k|).
/// A field can only be the gradient of a log-density where this vanishes.
inline Matrix field_curl(const std::function<Vector(const Vector&)>& field, const Vector& theta) {
  const auto d = theta.size();
  Matrix jac(d, d);  // jac(j, k) = d g_j / d theta_k
  for (Eigen::Index k = 0; k < d; ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[k]));
    Vector up = theta, dn = theta;
    up[k] += h;
    dn[k] -= h;
    jac.col(k) = (field(up) - field(dn)) / (2.0 * h);
  }
  return jac - jac.transpose();
}

inline Matrix integrability_check(const Model& model, const Vector& theta) {
  return field_curl(gradient_field(model, PriorKind::BR), theta);
}

/// Log-density reconstructed by integrating `field` along axis-parallel
/// segments from `anchor` (coordinate 1 first). Requires the field's curl
/// at the anchor to be below 1e-3.
inline PriorField integrated_prior(PriorKind kind, std::function<Vector(const Vector&)> field,
                                   const Vector& anchor) {
  const Matrix curl = field_curl(field, anchor);
  if (curl.cwiseAbs().maxCoeff() > 1e-3)
    throw NumericError("gradient field is not integrable near the anchor (curl " +
                       format_double(curl.cwiseAbs().maxCoeff()) + ")");
  PriorField p;
  p.kind = kind;
  p.log_grad = field;
  PriorField path;
  path.log_grad = field;
  p.log_density = [path, anchor](const Vector& theta) {
    Vector cur = anchor;
    double s = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      s += path.integrate_component(cur, static_cast<std::size_t>(j), anchor[j], theta[j]);
      cur[j] = theta[j];
    }
    return s;
  };
  return p;
}

/// Prior of `kind` for `model`: closed form when known, otherwise the
/// cumulant gradient field integrated from `anchor`. The field refers to
/// `model`.
inline PriorField make_prior(const Model& model, PriorKind kind, const Vector& anchor) {
  if (auto p = closed_form_prior(model, kind)) return *std::move(p);
  return integrated_prior(kind, gradient_field(model, kind), anchor);
}

inline PriorField custom_prior(std::function<Vector(const Vector&)> log_grad,
                               std::function<double(const Vector&)> log_density = {},
                               std::string formula = {}) {
  PriorField p;
  p.kind = PriorKind::Custom;
  p.log_grad = std::move(log_grad);
  p.log_density = std::move(log_density);
  p.closed_form = std::move(formula);
  return p;
}

}  // namespace brprior
