#pragma once

#include "brprior/cumulants.hpp"
#include "brprior/inference.hpp"
#include "brprior/priors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace brprior {

/// A first-order (O(1/n)) bias term evaluated for sample size n.
struct BiasVector {
  Vector values;
  std::size_t n = 0;
  std::string order = "first_order";
  bool plug_in = false;  // evaluated at an estimate rather than the true theta
};

/// Cox-Snell first-order MLE bias:
/// B_k = (1/2n) sum kappa^{k,s} kappa^{t,u} (kappa_{stu} + 2 kappa_{t,su}).
inline BiasVector cox_snell_bias(const CumulantSet& c, std::size_t n) {
  if (n == 0) throw UsageError("cox_snell_bias: n must be positive");
  const std::size_t d = c.dim();
  const Matrix& ki = c.fisher_inv;
  Vector inner = Vector::Zero(static_cast<Eigen::Index>(d));  // indexed by s
  for (std::size_t s = 0; s < d; ++s)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t u = 0; u < d; ++u)
        inner[static_cast<Eigen::Index>(s)] +=
            ki(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(u)) *
            (c.kappa3_pure(s, t, u) + 2.0 * c.kappa3_cross(t, s, u));
  return {ki * inner / (2.0 * static_cast<double>(n)), n};
}

/// The same bias written with the score cumulants before the third-order
/// Bartlett identity is applied:
/// B_k = -(1/2n) sum kappa^{k,s} kappa^{t,u} (kappa_{s,t,u} + kappa_{s,tu}).
inline BiasVector cox_snell_bias_prebartlett(const CumulantSet& c, std::size_t n) {
  if (n == 0) throw UsageError("cox_snell_bias: n must be positive");
  const std::size_t d = c.dim();
  const Matrix& ki = c.fisher_inv;
  Vector inner = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t s = 0; s < d; ++s)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t u = 0; u < d; ++u)
        inner[static_cast<Eigen::Index>(s)] +=
            ki(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(u)) *
            (c.kappa3_score(s, t, u) + c.kappa3_cross(s, t, u));
  return {-ki * inner / (2.0 * static_cast<double>(n)), n};
}

/// Laplace approximation of the posterior mean around the MLE:
/// theta_k + (1/n) sum_j h^{kj} (pi_j / pi - (1/2) sum h^{rs} h_{rsj}),
/// with h = -l/n. The MLE is supplied by the caller.
inline Vector laplace_posterior_mean(const Model& model, const Dataset& data, const PriorField& prior,
                                     const ParamPoint& mle) {
  const LoglikBundle b = observed_loglik_bundle(model, data, mle);
  if (b.h_grad.norm() >= 1e-6)
    throw NumericError("laplace: supplied point is not stationary (|grad h| = " +
                       format_double(b.h_grad.norm()) + ")");
  if (b.singular || !b.h_inv) throw NumericError("laplace: observed Hessian is singular");
  const Matrix& hi = *b.h_inv;
  const std::size_t d = model.dim();
  const Vector pg = prior.log_grad(mle.values());
  Vector bracket(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    double contraction = 0.0;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = 0; s < d; ++s)
        contraction += hi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) * b.h_third(r, s, j);
    bracket[static_cast<Eigen::Index>(j)] = pg[static_cast<Eigen::Index>(j)] - 0.5 * contraction;
  }
  return mle.values() + hi * bracket / static_cast<double>(b.n);
}

/// First-order frequentist bias of the posterior mean at theta:
/// (1/n) sum_j kappa^{k,j} (d_j log pi + sum kappa^{r,s}(kappa_{rsj} + kappa_{r,js})).
inline BiasVector posterior_bias_first_order(const Model& model, const ParamPoint& theta,
                                             const PriorField& prior, std::size_t n) {
  if (n == 0) throw UsageError("posterior_bias_first_order: n must be positive");
  const CumulantSet c = analytic_cumulants(model, theta);
  const Vector bracket = prior.log_grad(theta.values()) - br_log_grad(model, theta.values());
  return {c.fisher_inv * bracket / static_cast<double>(n), n};
}

struct ProbeRecord {
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::size_t component = 0;
  double bias = 0.0;
};

struct ProbeRow {
  std::size_t n = 0;
  Vector mean_bias;
  Vector se;
  Vector predicted;  // first-order predictor at theta0
  std::size_t included = 0;
  std::size_t excluded = 0;
};

struct ProbeTable {
  std::string model;
  std::string prior;
  std::string method;  // "exact" or "mcmc"
  std::vector<ProbeRow> rows;
  std::vector<ProbeRecord> records;
  Vector slopes;       // least-squares slope of log|mean bias| on log n per component

  void write_csv(std::ostream& os) const {
    os << "n,replicate,component,bias\n";
    for (const auto& r : records)
      os << r.n << ',' << r.replicate << ',' << r.component + 1 << ',' << format_double(r.bias) << '\n';
  }

  nlohmann::json summary_json() const {
    nlohmann::json j;
    j["model"] = model;
    j["prior"] = prior;
    j["method"] = method;
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"n", r.n},
                           {"mean_bias", vec(r.mean_bias)},
                           {"se", vec(r.se)},
                           {"predicted_first_order", vec(r.predicted)},
                           {"included", r.included},
                           {"excluded", r.excluded}});
    j["log_abs_bias_slope"] = vec(slopes);
    return j;
  }
};

struct ProbeOptions {
  std::size_t mcmc_draws = 2000;
  std::size_t mcmc_burn_in = 500;
};

/// Empirical bias of the posterior mean over a grid of sample sizes.
/// Exact posterior means are used when the model has them for this prior
/// kind, otherwise a tuned Metropolis-within-Gibbs chain. Replicate r at
/// grid index g uses seed derive_seed(derive_seed(seed, g), r).
inline ProbeTable bias_order_probe(const Model& model, const PriorField& prior, const ParamPoint& theta0,
                                   const std::vector<std::size_t>& n_grid, std::size_t replicates,
                                   Seed seed, const ProbeOptions& opt = {}) {
  if (n_grid.empty()) throw UsageError("bias_order_probe: empty n grid");
  if (replicates < 2) throw UsageError("bias_order_probe: need at least 2 replicates");
  const auto d = static_cast<Eigen::Index>(model.dim());
  ProbeTable out;
  out.model = model.name();
  out.prior = prior_kind_name(prior.kind);
  out.method = "exact";
  const Vector& t0 = theta0.values();

  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const std::size_t n = n_grid[g];
    if (n == 0) throw UsageError("bias_order_probe: sample sizes must be positive");
    const Seed grid_seed = derive_seed(seed, g);
    ProbeRow row;
    row.n = n;
    Vector sum = Vector::Zero(d), sumsq = Vector::Zero(d);
    for (std::size_t r = 0; r < replicates; ++r) {
      const Seed rs = derive_seed(grid_seed, r);
      const Dataset data = model.sample(t0, n, rs);
      std::optional<Vector> est = conjugate_posterior_mean(model, data, prior);
      if (!est) {
        out.method = "mcmc";
        try {
          McmcConfig cfg;
          cfg.draws = opt.mcmc_draws;
          cfg.burn_in = opt.mcmc_burn_in;
          cfg.seed = derive_seed(rs, 1);
          McmcConfig pilot = cfg;
          pilot.draws = 500;
          pilot.burn_in = 100;
          pilot.seed = derive_seed(rs, 2);
          cfg.step_sizes = tune_step_sizes(model, data, prior, pilot);
          est = metropolis_within_gibbs(model, data, prior, cfg).mean();
        } catch (const NumericError&) {
          ++row.excluded;
          continue;
        }
      }
      const Vector bias = *est - t0;
      for (Eigen::Index k = 0; k < d; ++k)
        out.records.push_back({n, r, static_cast<std::size_t>(k), bias[k]});
      sum += bias;
      sumsq += bias.cwiseProduct(bias);
      ++row.included;
    }
    if (row.included < 2) throw NumericError("bias_order_probe: too few usable replicates at n = " + std::to_string(n));
    const double m = static_cast<double>(row.included);
    row.mean_bias = sum / m;
    const Vector var = ((sumsq - m * row.mean_bias.cwiseProduct(row.mean_bias)) / (m - 1.0)).cwiseMax(0.0);
    row.se = (var / m).cwiseSqrt();
    row.predicted = posterior_bias_first_order(model, theta0, prior, n).values;
    out.rows.push_back(std::move(row));
  }

  out.slopes = Vector::Constant(d, std::numeric_limits<double>::quiet_NaN());
  if (out.rows.size() >= 2) {
    for (Eigen::Index k = 0; k < d; ++k) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
      for (const auto& r : out.rows) {
        const double b = std::abs(r.mean_bias[k]);
        if (!(b > 0.0)) continue;
        const double x = std::log(static_cast<double>(r.n)), y = std::log(b);
        sx += x, sy += y, sxx += x * x, sxy += x * y, m += 1;
      }
      if (m >= 2 && m * sxx - sx * sx > 0) out.slopes[k] = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    }
  }
  return out;
}

}  // namespace brprior
