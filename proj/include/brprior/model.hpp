#pragma once

#include "brprior/core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace brprior {

/// Per-observation cumulant arrays at a parameter point.
///
/// Every entry is the 1/n-scaled expectation, so for non-identically
/// distributed observations (regression designs, strata) the arrays are
/// averages over the observation units. `kappa3_cross(r, s, t)` stores
/// E[l_r l_st]: the first index is the score index, the last two the
/// Hessian pair.
struct CumulantSet {
  Matrix kappa2_cross;   // E[l_r l_s]
  Matrix kappa2_hess;    // E[l_rs]
  Tensor3 kappa3_pure;   // E[l_rst]
  Tensor3 kappa3_cross;  // E[l_r l_st]
  Tensor3 kappa3_score;  // E[l_r l_s l_t]
  Matrix fisher;         // -kappa2_hess
  Matrix fisher_inv;     // inverse of kappa2_cross

  std::size_t dim() const { return static_cast<std::size_t>(kappa2_cross.rows()); }

  /// Fills fisher and fisher_inv. Throws NumericError if kappa2_cross is
  /// not symmetric positive definite.
  void finalize() {
    fisher = -kappa2_hess;
    const Matrix sym = 0.5 * (kappa2_cross + kappa2_cross.transpose());
    Eigen::LLT<Matrix> llt(sym);
    if (!sym.allFinite() || llt.info() != Eigen::Success)
      throw NumericError("singular information: kappa_{r,s} is not positive definite");
    Eigen::FullPivLU<Matrix> lu(kappa2_cross);
    if (lu.rcond() < 1e-14) throw NumericError("singular information: kappa_{r,s} is ill-conditioned");
    fisher_inv = lu.inverse();
  }

  static CumulantSet zeros(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    CumulantSet c;
    c.kappa2_cross = Matrix::Zero(n, n);
    c.kappa2_hess = Matrix::Zero(n, n);
    c.kappa3_pure = Tensor3(d);
    c.kappa3_cross = Tensor3(d);
    c.kappa3_score = Tensor3(d);
    c.fisher = Matrix::Zero(n, n);
    c.fisher_inv = Matrix::Zero(n, n);
    return c;
  }
};

/// Observed responses with optional covariates and stratum labels.
struct Dataset {
  Matrix responses;                 // n x q, q = 1 for scalar responses
  std::optional<Matrix> covariates; // n x p
  std::vector<std::size_t> strata;  // empty, or one label per row

  std::size_t size() const { return static_cast<std::size_t>(responses.rows()); }
  double y(std::size_t i) const { return responses(static_cast<Eigen::Index>(i), 0); }
  Vector row(std::size_t i) const { return responses.row(static_cast<Eigen::Index>(i)).transpose(); }
  Vector x(std::size_t i) const { return covariates->row(static_cast<Eigen::Index>(i)).transpose(); }

  void validate() const {
    if (covariates && covariates->rows() != responses.rows())
      throw UsageError("covariate row count does not match response count");
    if (!strata.empty() && strata.size() != size())
      throw UsageError("stratum label count does not match response count");
  }
};

enum class PriorKind { BR, BM, MM, Jeffreys, Uniform, Custom };

inline const char* prior_kind_name(PriorKind k) {
  switch (k) {
    case PriorKind::BR: return "br";
    case PriorKind::BM: return "bm";
    case PriorKind::MM: return "mm";
    case PriorKind::Jeffreys: return "jeffreys";
    case PriorKind::Uniform: return "uniform";
    case PriorKind::Custom: return "custom";
  }
  return "?";
}

inline PriorKind parse_prior_kind(const std::string& s) {
  if (s == "br") return PriorKind::BR;
  if (s == "bm") return PriorKind::BM;
  if (s == "mm") return PriorKind::MM;
  if (s == "jeffreys") return PriorKind::Jeffreys;
  if (s == "uniform") return PriorKind::Uniform;
  throw UsageError("unknown prior '" + s + "' (valid: br, bm, mm, jeffreys, uniform)");
}

/// Structural facts a model declares; closed-form BR priors dispatch on them.
struct Capabilities {
  bool one_dim_iid = false;      // scalar parameter, i.i.d. observations
  bool condition_c = false;      // kappa_{r,st} == 0 (data-free Hessian)
  bool constant_fisher = false;  // information does not depend on theta
};

/// A closed-form (unnormalized) log prior density a model knows about.
struct DeclaredPrior {
  std::function<double(const Vector&)> log_density;
  std::string formula;
};

/// A sampling family p_i(y_i | theta) with derivatives up to third order.
///
/// Observation i of a Dataset is evaluated through (data, i) so models can
/// read covariates or stratum labels of that row. Samplers cycle through
/// `unit_count()` observation units; i.i.d. models have a single unit.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < dim(); ++i) out.push_back("theta" + std::to_string(i + 1));
    return out;
  }
  virtual bool in_domain(const Vector& theta) const { return theta.allFinite(); }
  virtual Capabilities capabilities() const { return {}; }

  virtual double logdensity(const Dataset& data, std::size_t i, const Vector& theta) const = 0;
  virtual Vector score(const Dataset& data, std::size_t i, const Vector& theta) const = 0;
  virtual Matrix hessian(const Dataset& data, std::size_t i, const Vector& theta) const = 0;
  virtual Tensor3 third(const Dataset& data, std::size_t i, const Vector& theta) const = 0;

  virtual double loglik(const Dataset& data, const Vector& theta) const {
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) s += logdensity(data, i, theta);
    return s;
  }

  virtual std::optional<CumulantSet> analytic_cumulants(const Vector& theta) const = 0;

  /// Per-observation Fisher information; models override when cheaper than
  /// building the full cumulant set.
  virtual Matrix fisher_information(const Vector& theta) const {
    auto c = analytic_cumulants(theta);
    if (!c) throw NumericError(name() + ": no analytic Fisher information");
    return c->kappa2_cross;
  }

  virtual std::size_t unit_count() const { return 1; }
  /// `count` observations; observation m comes from unit m % unit_count().
  virtual Dataset draw_units(const Vector& theta, std::size_t count, Rng& rng) const = 0;

  Dataset sample(const Vector& theta, std::size_t n, Seed seed) const {
    Rng rng = make_rng(seed);
    return draw_units(theta, n, rng);
  }

  /// Starting point for likelihood maximization.
  virtual Vector initial_guess(const Dataset& data) const = 0;

  /// Full-sample information is fisher_scale() times the per-observation one.
  virtual double fisher_scale() const { return static_cast<double>(unit_count()); }
  virtual std::string fisher_formula() const { return "|I(theta)|"; }

  virtual std::optional<DeclaredPrior> declared_prior(PriorKind) const { return std::nullopt; }

  virtual std::optional<Vector> exact_posterior_mean(const Dataset&, PriorKind) const {
    return std::nullopt;
  }
  virtual std::optional<Vector> exact_posterior_mode(const Dataset&, PriorKind) const {
    return std::nullopt;
  }

  ParamPoint point(const Vector& theta) const { return ParamPoint(theta, labels()); }
};

}  // namespace brprior
