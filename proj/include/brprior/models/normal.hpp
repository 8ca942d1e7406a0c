#pragma once

#include "brprior/model.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <random>

namespace brprior {

/// K strata of normal observations sharing a variance: Y_ki ~ N(mu_k, xi).
/// Parameters are ordered (mu_1, ..., mu_K, xi). With K = 1 this is the
/// ordinary normal model with theta = (mu, xi).
///
/// Per-observation cumulants average over strata with weights n_k / N.
class NormalStrataModel final : public Model {
 public:
  explicit NormalStrataModel(std::vector<std::size_t> stratum_sizes)
      : sizes_(std::move(stratum_sizes)) {
    if (sizes_.empty()) throw UsageError("normal: need at least one stratum");
    for (auto s : sizes_)
      if (s == 0) throw UsageError("normal: stratum sizes must be positive");
    total_ = std::accumulate(sizes_.begin(), sizes_.end(), std::size_t{0});
  }

  std::size_t strata() const { return sizes_.size(); }
  const std::vector<std::size_t>& stratum_sizes() const { return sizes_; }

  std::string name() const override {
    return strata() == 1 ? "normal" : "normal-strata:" + std::to_string(strata());
  }
  std::size_t dim() const override { return strata() + 1; }
  std::vector<std::string> labels() const override {
    if (strata() == 1) return {"mu", "xi"};
    std::vector<std::string> out;
    for (std::size_t k = 0; k < strata(); ++k) out.push_back("mu" + std::to_string(k + 1));
    out.push_back("xi");
    return out;
  }
  bool in_domain(const Vector& t) const override {
    return static_cast<std::size_t>(t.size()) == dim() && t.allFinite() && t[xi_index()] > 0.0;
  }

  double logdensity(const Dataset& d, std::size_t i, const Vector& t) const override {
    const double xi = t[xi_index()];
    const double e = d.y(i) - t[stratum_of(d, i)];
    return -0.5 * std::log(2.0 * M_PI * xi) - e * e / (2.0 * xi);
  }
  Vector score(const Dataset& d, std::size_t i, const Vector& t) const override {
    const auto k = stratum_of(d, i);
    const auto x = xi_index();
    const double xi = t[x];
    const double e = d.y(i) - t[k];
    Vector g = Vector::Zero(t.size());
    g[k] = e / xi;
    g[x] = -0.5 / xi + e * e / (2.0 * xi * xi);
    return g;
  }
  Matrix hessian(const Dataset& d, std::size_t i, const Vector& t) const override {
    const auto k = stratum_of(d, i);
    const auto x = xi_index();
    const double xi = t[x];
    const double e = d.y(i) - t[k];
    Matrix h = Matrix::Zero(t.size(), t.size());
    h(k, k) = -1.0 / xi;
    h(k, x) = h(x, k) = -e / (xi * xi);
    h(x, x) = 0.5 / (xi * xi) - e * e / (xi * xi * xi);
    return h;
  }
  Tensor3 third(const Dataset& d, std::size_t i, const Vector& t) const override {
    const auto k = static_cast<std::size_t>(stratum_of(d, i));
    const auto x = static_cast<std::size_t>(xi_index());
    const double xi = t[xi_index()];
    const double e = d.y(i) - t[static_cast<Eigen::Index>(k)];
    Tensor3 out(dim());
    const double kkx = 1.0 / (xi * xi);
    out(k, k, x) = out(k, x, k) = out(x, k, k) = kkx;
    const double kxx = 2.0 * e / (xi * xi * xi);
    out(k, x, x) = out(x, k, x) = out(x, x, k) = kxx;
    out(x, x, x) = -1.0 / (xi * xi * xi) + 3.0 * e * e / (xi * xi * xi * xi);
    return out;
  }

  std::optional<CumulantSet> analytic_cumulants(const Vector& t) const override {
    if (!in_domain(t)) throw NumericError(name() + ": xi must be positive");
    const double xi = t[xi_index()];
    const auto x = static_cast<std::size_t>(xi_index());
    const auto xe = xi_index();
    CumulantSet c = CumulantSet::zeros(dim());
    c.kappa2_cross(xe, xe) = 0.5 / (xi * xi);
    c.kappa2_hess(xe, xe) = -0.5 / (xi * xi);
    c.kappa3_pure(x, x, x) = 2.0 / (xi * xi * xi);
    c.kappa3_cross(x, x, x) = -1.0 / (xi * xi * xi);
    c.kappa3_score(x, x, x) = 1.0 / (xi * xi * xi);
    for (std::size_t k = 0; k < strata(); ++k) {
      const double w = static_cast<double>(sizes_[k]) / static_cast<double>(total_);
      const auto ke = static_cast<Eigen::Index>(k);
      c.kappa2_cross(ke, ke) = w / xi;
      c.kappa2_hess(ke, ke) = -w / xi;
      const double a = w / (xi * xi);
      c.kappa3_pure(k, k, x) = c.kappa3_pure(k, x, k) = c.kappa3_pure(x, k, k) = a;
      c.kappa3_score(k, k, x) = c.kappa3_score(k, x, k) = c.kappa3_score(x, k, k) = a;
      c.kappa3_cross(k, k, x) = c.kappa3_cross(k, x, k) = -a;
    }
    c.finalize();
    return c;
  }

  std::size_t unit_count() const override { return total_; }

  Dataset draw_units(const Vector& t, std::size_t count, Rng& rng) const override {
    if (!in_domain(t)) throw NumericError(name() + ": xi must be positive");
    std::normal_distribution<double> z(0.0, 1.0);
    const double sd = std::sqrt(t[xi_index()]);
    Dataset d;
    d.responses.resize(static_cast<Eigen::Index>(count), 1);
    d.strata.resize(count);
    for (std::size_t m = 0; m < count; ++m) {
      const std::size_t k = unit_stratum(m % total_);
      d.strata[m] = k;
      d.responses(static_cast<Eigen::Index>(m), 0) = t[static_cast<Eigen::Index>(k)] + sd * z(rng);
    }
    return d;
  }

  /// Maximum-likelihood estimate: stratum means and SS_W / N.
  Vector initial_guess(const Dataset& d) const override {
    const auto s = stats(d);
    Vector out(dim());
    for (std::size_t k = 0; k < strata(); ++k) out[static_cast<Eigen::Index>(k)] = s.means[k];
    out[xi_index()] = std::max(s.ss_within / static_cast<double>(s.n), 1e-12);
    return out;
  }

  std::optional<DeclaredPrior> declared_prior(PriorKind k) const override {
    const auto x = xi_index();
    const double kk = static_cast<double>(strata());
    auto power = [x](double a, std::string f) {
      return DeclaredPrior{[x, a](const Vector& t) { return a * std::log(t[x]); }, std::move(f)};
    };
    switch (k) {
      case PriorKind::BR: return power(-2.0, "xi^-2");
      case PriorKind::BM: return power(kk / 2.0, "xi^(K/2)");
      case PriorKind::MM: return power(-kk / 2.0 - 2.0, "xi^(-K/2-2)");
      default: return std::nullopt;
    }
  }

  /// Exponent a of the power prior xi^a (flat in every mu_k) for a kind.
  double power_exponent(PriorKind k) const {
    const double kk = static_cast<double>(strata());
    switch (k) {
      case PriorKind::BR: return -2.0;
      case PriorKind::BM: return kk / 2.0;
      case PriorKind::MM: return -kk / 2.0 - 2.0;
      case PriorKind::Jeffreys: return -kk / 2.0 - 1.0;
      case PriorKind::Uniform: return 0.0;
      default: throw UsageError("normal: no power form for prior kind");
    }
  }

  // Integrating out the means leaves xi ~ InvGamma((N - K)/2 - a - 1, SS_W / 2).
  std::optional<Vector> exact_posterior_mean(const Dataset& d, PriorKind k) const override {
    if (k == PriorKind::Custom) return std::nullopt;
    const auto s = stats(d);
    const double denom =
        static_cast<double>(s.n) - static_cast<double>(strata()) - 2.0 * power_exponent(k) - 4.0;
    if (denom <= 0.0) return std::nullopt;
    Vector out(dim());
    for (std::size_t j = 0; j < strata(); ++j) out[static_cast<Eigen::Index>(j)] = s.means[j];
    out[xi_index()] = s.ss_within / denom;
    return out;
  }

  // Joint mode: means at the stratum averages, xi = SS_W / (N - 2a).
  std::optional<Vector> exact_posterior_mode(const Dataset& d, PriorKind k) const override {
    if (k == PriorKind::Custom) return std::nullopt;
    const auto s = stats(d);
    const double denom = static_cast<double>(s.n) - 2.0 * power_exponent(k);
    if (denom <= 0.0) return std::nullopt;
    Vector out(dim());
    for (std::size_t j = 0; j < strata(); ++j) out[static_cast<Eigen::Index>(j)] = s.means[j];
    out[xi_index()] = s.ss_within / denom;
    return out;
  }

  struct StrataStats {
    std::vector<double> means;
    std::vector<std::size_t> counts;
    double ss_within = 0.0;
    std::size_t n = 0;
  };

  StrataStats stats(const Dataset& d) const {
    StrataStats s;
    s.means.assign(strata(), 0.0);
    s.counts.assign(strata(), 0);
    s.n = d.size();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto k = static_cast<std::size_t>(stratum_of(d, i));
      s.means[k] += d.y(i);
      ++s.counts[k];
    }
    for (std::size_t k = 0; k < strata(); ++k) {
      if (s.counts[k] == 0) throw NumericError(name() + ": empty stratum in data");
      s.means[k] /= static_cast<double>(s.counts[k]);
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double e = d.y(i) - s.means[static_cast<std::size_t>(stratum_of(d, i))];
      s.ss_within += e * e;
    }
    return s;
  }

 private:
  Eigen::Index xi_index() const { return static_cast<Eigen::Index>(strata()); }

  Eigen::Index stratum_of(const Dataset& d, std::size_t i) const {
    if (d.strata.empty()) {
      if (strata() != 1) throw UsageError(name() + ": data has no stratum labels");
      return 0;
    }
    if (d.strata[i] >= strata()) throw UsageError(name() + ": stratum label out of range");
    return static_cast<Eigen::Index>(d.strata[i]);
  }

  std::size_t unit_stratum(std::size_t unit) const {
    for (std::size_t k = 0; k < sizes_.size(); ++k) {
      if (unit < sizes_[k]) return k;
      unit -= sizes_[k];
    }
    return sizes_.size() - 1;
  }

  std::vector<std::size_t> sizes_;
  std::size_t total_ = 0;
};

/// Normal model with `strata` strata; each stratum gets `per_stratum` units
/// for cumulant weighting and sampling.
inline std::shared_ptr<NormalStrataModel> build_normal(std::size_t strata,
                                                       std::size_t per_stratum = 1) {
  if (strata < 1) throw UsageError("normal: K must be at least 1");
  return std::make_shared<NormalStrataModel>(std::vector<std::size_t>(strata, per_stratum));
}

inline std::shared_ptr<NormalStrataModel> build_normal(std::vector<std::size_t> sizes) {
  return std::make_shared<NormalStrataModel>(std::move(sizes));
}

}  // namespace brprior
