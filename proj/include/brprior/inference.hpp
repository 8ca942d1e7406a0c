#pragma once

#include "brprior/model.hpp"
#include "brprior/priors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>

namespace brprior {

enum class MleStatus { Converged, MaxIter, DivergingNorm, SingularHessian };

inline const char* mle_status_name(MleStatus s) {
  switch (s) {
    case MleStatus::Converged: return "converged";
    case MleStatus::MaxIter: return "max_iter";
    case MleStatus::DivergingNorm: return "diverging_norm";
    case MleStatus::SingularHessian: return "singular_hessian";
  }
  return "?";
}

struct MleResult {
  Vector theta;
  MleStatus status = MleStatus::MaxIter;
  std::size_t iterations = 0;
  double gradient_norm = std::numeric_limits<double>::infinity();
  double loglik = -std::numeric_limits<double>::infinity();

  bool converged() const { return status == MleStatus::Converged; }
};

struct NewtonOptions {
  std::size_t max_iter = 200;
  double gradient_tol = 1e-8;
  // Smallest eigenvalue of the per-observation observed information below
  // which a stationary point is treated as an escape to infinity
  // (logistic separation: the likelihood keeps rising along a ray).
  double min_information = 1e-6;
  double max_norm = 1e6;
};

namespace detail {

inline void sum_derivatives(const Model& model, const Dataset& data, const Vector& t, Vector& g,
                            Matrix& h) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  g = Vector::Zero(d);
  h = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < data.size(); ++i) {
    g += model.score(data, i, t);
    h += model.hessian(data, i, t);
  }
}

}  // namespace detail

/// Newton-Raphson maximization of the log-likelihood with step halving.
/// Non-convergence is reported through MleResult::status, never thrown.
inline MleResult newton_mle(const Model& model, const Dataset& data,
                            std::optional<Vector> init = std::nullopt, const NewtonOptions& opt = {}) {
  if (data.size() == 0) throw UsageError("newton_mle: empty dataset");
  data.validate();
  MleResult res;
  res.theta = init ? *init : model.initial_guess(data);
  if (static_cast<std::size_t>(res.theta.size()) != model.dim())
    throw UsageError(model.name() + ": initial value has wrong dimension");
  if (!model.in_domain(res.theta)) throw UsageError(model.name() + ": initial value outside parameter space");
  const double n = static_cast<double>(data.size());

  Vector g;
  Matrix h;
  res.loglik = model.loglik(data, res.theta);
  for (res.iterations = 0; res.iterations <= opt.max_iter; ++res.iterations) {
    detail::sum_derivatives(model, data, res.theta, g, h);
    res.gradient_norm = g.norm();
    if (!std::isfinite(res.gradient_norm)) {
      res.status = MleStatus::SingularHessian;
      return res;
    }
    if (res.theta.norm() > opt.max_norm) {
      res.status = MleStatus::DivergingNorm;
      return res;
    }
    const Matrix info = -h / n;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (info + info.transpose()));
    const double lam_min = eig.eigenvalues().minCoeff();
    if (res.gradient_norm < opt.gradient_tol) {
      res.status = lam_min < opt.min_information ? MleStatus::DivergingNorm : MleStatus::Converged;
      return res;
    }
    if (res.iterations == opt.max_iter) break;

    Vector step;
    if (lam_min > 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
      step = (-h).ldlt().solve(g);
    } else {
      // Flat or indefinite curvature: regularize towards gradient ascent.
      const double shift = std::abs(lam_min) + 1e-6 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
      const Matrix reg = -h + n * shift * Matrix::Identity(h.rows(), h.cols());
      step = reg.ldlt().solve(g);
    }
    if (!step.allFinite()) {
      res.status = MleStatus::SingularHessian;
      return res;
    }

    double scale = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, scale *= 0.5) {
      const Vector cand = res.theta + scale * step;
      if (!model.in_domain(cand)) continue;
      const double ll = model.loglik(data, cand);
      if (std::isfinite(ll) && ll >= res.loglik - 1e-12 * std::abs(res.loglik)) {
        moved = cand != res.theta;
        res.theta = cand;
        res.loglik = ll;
        break;
      }
    }
    if (!moved) {
      // No representable improvement left: accept a stationary point whose
      // gradient sits at rounding level for this sample size.
      if (res.gradient_norm < opt.gradient_tol * n && lam_min >= opt.min_information) {
        res.status = MleStatus::Converged;
        return res;
      }
      res.status = lam_min < opt.min_information ? MleStatus::DivergingNorm : MleStatus::SingularHessian;
      return res;
    }
  }
  res.status = MleStatus::MaxIter;
  return res;
}

/// Metropolis-within-Gibbs configuration. `draws` counts retained draws
/// unless `draws_include_burn_in` is set, in which case it is the total.
struct McmcConfig {
  std::size_t draws = 10000;
  std::size_t burn_in = 1000;
  Vector step_sizes;          // empty: derived from the curvature at init
  Seed seed = 0;
  std::optional<Vector> init; // empty: the MLE
  double accept_lo = 0.2;
  double accept_hi = 0.5;
  bool draws_include_burn_in = false;

  std::size_t total_iterations() const { return draws_include_burn_in ? draws : draws + burn_in; }
  std::size_t retained() const { return draws_include_burn_in ? draws - burn_in : draws; }

  void validate() const {
    if (draws == 0) throw UsageError("mcmc: draws must be positive");
    if (draws_include_burn_in && draws <= burn_in) throw UsageError("mcmc: draws must exceed burn_in");
    for (Eigen::Index j = 0; j < step_sizes.size(); ++j)
      if (!(step_sizes[j] > 0.0) || !std::isfinite(step_sizes[j]))
        throw UsageError("mcmc: step sizes must be positive");
    if (!(0.0 < accept_lo && accept_lo < accept_hi && accept_hi < 1.0))
      throw UsageError("mcmc: target acceptance interval must satisfy 0 < lo < hi < 1");
  }
};

inline nlohmann::json to_json(const McmcConfig& c) {
  nlohmann::json j;
  j["draws"] = c.draws;
  j["burn_in"] = c.burn_in;
  j["draws_include_burn_in"] = c.draws_include_burn_in;
  j["step_sizes"] = std::vector<double>(c.step_sizes.data(), c.step_sizes.data() + c.step_sizes.size());
  j["seed"] = c.seed;
  j["target_accept"] = {c.accept_lo, c.accept_hi};
  if (c.init) j["init"] = std::vector<double>(c.init->data(), c.init->data() + c.init->size());
  return j;
}

struct Chain {
  Matrix samples;      // retained draws x d
  Vector accept_rates; // per coordinate, over all iterations
  Seed seed = 0;
  McmcConfig config;   // with the step sizes and init actually used

  Vector mean() const { return samples.colwise().mean().transpose(); }

  /// Effective sample size per coordinate (Geyer initial positive sequence).
  Vector ess() const {
    const Eigen::Index n = samples.rows();
    Vector out(samples.cols());
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      const Vector x = samples.col(j).array() - samples.col(j).mean();
      const double c0 = x.squaredNorm() / static_cast<double>(n);
      if (c0 <= 0.0) {
        out[j] = static_cast<double>(n);
        continue;
      }
      auto rho = [&](Eigen::Index lag) {
        return x.head(n - lag).dot(x.tail(n - lag)) / (static_cast<double>(n) * c0);
      };
      double tau = -1.0;  // 1 + 2 sum rho_k = -1 + 2 sum of pair sums from lag 0
      for (Eigen::Index lag = 0; lag + 1 < n; lag += 2) {
        const double pair = rho(lag) + rho(lag + 1);
        if (pair <= 0.0) break;
        tau += 2.0 * pair;
      }
      out[j] = static_cast<double>(n) / std::max(tau, 1e-12);
    }
    return out;
  }

  /// Monte Carlo standard error of the posterior mean per coordinate.
  Vector mc_se() const {
    const Vector e = ess();
    Vector out(samples.cols());
    const double n = static_cast<double>(samples.rows());
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      const Vector x = samples.col(j).array() - samples.col(j).mean();
      const double var = x.squaredNorm() / std::max(1.0, n - 1.0);
      out[j] = std::sqrt(var / e[j]);
    }
    return out;
  }

  /// One row per retained draw; header from the labels.
  void write_csv(std::ostream& os, const std::vector<std::string>& labels) const {
    os << "draw";
    for (const auto& l : labels) os << ',' << l;
    os << '\n';
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      os << i;
      for (Eigen::Index j = 0; j < samples.cols(); ++j) os << ',' << format_double(samples(i, j));
      os << '\n';
    }
  }

  nlohmann::json config_json() const {
    nlohmann::json j = to_json(config);
    j["accept_rates"] = std::vector<double>(accept_rates.data(), accept_rates.data() + accept_rates.size());
    return j;
  }
};

namespace detail {

// Conditional posterior scale per coordinate from the log-likelihood curvature.
inline Vector default_steps(const Model& model, const Dataset& data, const Vector& t) {
  Vector g;
  Matrix h;
  sum_derivatives(model, data, t, g, h);
  Vector steps(t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    const double prec = -h(j, j);
    steps[j] = prec > 0.0 && std::isfinite(prec) ? 2.4 / std::sqrt(prec) : 1.0;
  }
  return steps;
}

inline Vector resolve_init(const Model& model, const Dataset& data, const McmcConfig& cfg) {
  if (cfg.init) {
    if (!model.in_domain(*cfg.init)) throw UsageError("mcmc: init outside parameter space");
    return *cfg.init;
  }
  const MleResult mle = newton_mle(model, data);
  if (!mle.converged())
    throw NumericError(std::string("mcmc: MLE initial value failed (") + mle_status_name(mle.status) + ")");
  return mle.theta;
}

}  // namespace detail

/// Coordinate-wise normal random-walk Metropolis, one systematic sweep per
/// iteration. Proposals outside the parameter space are rejected. The
/// prior enters only through log-density differences, so improper priors
/// and gradient-only fields are fine.
namespace detail {

inline Chain run_chain(const Model& model, const Dataset& data, const PriorField& prior, McmcConfig cfg) {
  cfg.validate();
  data.validate();
  const Vector init = detail::resolve_init(model, data, cfg);
  cfg.init = init;
  if (cfg.step_sizes.size() == 0) cfg.step_sizes = detail::default_steps(model, data, init);
  if (static_cast<std::size_t>(cfg.step_sizes.size()) != model.dim())
    throw UsageError("mcmc: step_sizes length must equal the parameter dimension");

  const auto d = static_cast<Eigen::Index>(model.dim());
  Rng rng = make_rng(cfg.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  Vector cur = init;
  double cur_ll = model.loglik(data, cur);
  double cur_lp = prior.has_density() ? prior.log_density(cur) : 0.0;
  if (!std::isfinite(cur_ll) || !std::isfinite(cur_lp))
    throw NumericError("mcmc: log-posterior not finite at the initial value");

  const std::size_t total = cfg.total_iterations();
  Chain chain;
  chain.seed = cfg.seed;
  chain.samples.resize(static_cast<Eigen::Index>(cfg.retained()), d);
  Vector accepted = Vector::Zero(d);

  for (std::size_t it = 0; it < total; ++it) {
    for (Eigen::Index j = 0; j < d; ++j) {
      Vector prop = cur;
      prop[j] += cfg.step_sizes[j] * z(rng);
      const double log_u = std::log(u(rng));
      if (!model.in_domain(prop)) continue;
      const double ll = model.loglik(data, prop);
      double lp = 0.0, dlp;
      if (prior.has_density()) {
        lp = prior.log_density(prop);
        dlp = lp - cur_lp;
      } else {
        dlp = prior.log_density_diff(cur, static_cast<std::size_t>(j), prop[j]);
      }
      const double log_ratio = ll - cur_ll + dlp;
      if (std::isfinite(log_ratio) && log_u < log_ratio) {
        cur = std::move(prop);
        cur_ll = ll;
        cur_lp = lp;
        accepted[j] += 1.0;
      }
    }
    if (it >= cfg.burn_in) chain.samples.row(static_cast<Eigen::Index>(it - cfg.burn_in)) = cur.transpose();
  }
  chain.accept_rates = accepted / static_cast<double>(total);
  chain.config = std::move(cfg);
  return chain;
}

}  // namespace detail

inline Chain metropolis_within_gibbs(const Model& model, const Dataset& data, const PriorField& prior,
                                     McmcConfig cfg) {
  Chain chain = detail::run_chain(model, data, prior, std::move(cfg));
  for (Eigen::Index j = 0; j < chain.accept_rates.size(); ++j)
    if (chain.accept_rates[j] == 0.0)
      throw NumericError("mcmc: zero acceptance on coordinate " + std::to_string(j + 1) + " (step " +
                         format_double(chain.config.step_sizes[j]) + ")");
  return chain;
}

/// Per-coordinate step sizes giving pilot acceptance inside the inner band
/// [lo + 0.05, hi - 0.05] of the target interval. Each coordinate is
/// bisected in log space; unbracketed sides double or halve the step.
/// Pilot r uses seed derive_seed(pilot.seed, r).
inline Vector tune_step_sizes(const Model& model, const Dataset& data, const PriorField& prior,
                              McmcConfig pilot) {
  pilot.validate();
  if (pilot.retained() < 500) throw UsageError("tune_step_sizes: pilot needs at least 500 draws");
  const Vector init = detail::resolve_init(model, data, pilot);
  pilot.init = init;
  Vector steps = pilot.step_sizes.size() ? pilot.step_sizes : detail::default_steps(model, data, init);
  const auto d = steps.size();
  const double lo = pilot.accept_lo + 0.05, hi = pilot.accept_hi - 0.05;
  Vector bracket_lo = Vector::Zero(d);                                          // 0: none
  Vector bracket_hi = Vector::Constant(d, std::numeric_limits<double>::infinity());

  Vector rates;
  for (int round = 0; round < 20; ++round) {
    McmcConfig cfg = pilot;
    cfg.step_sizes = steps;
    cfg.seed = derive_seed(pilot.seed, static_cast<std::uint64_t>(round));
    rates = detail::run_chain(model, data, prior, cfg).accept_rates;
    bool done = true;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (rates[j] >= lo && rates[j] <= hi) continue;
      done = false;
      if (rates[j] > hi) {
        bracket_lo[j] = steps[j];
        steps[j] = std::isinf(bracket_hi[j]) ? steps[j] * 2.0 : std::sqrt(steps[j] * bracket_hi[j]);
      } else {
        bracket_hi[j] = steps[j];
        steps[j] = bracket_lo[j] == 0.0 ? steps[j] * 0.5 : std::sqrt(steps[j] * bracket_lo[j]);
      }
    }
    if (done) return steps;
  }
  std::string msg = "tune_step_sizes: no step sizes in the target band after 20 rounds (rates";
  for (Eigen::Index j = 0; j < d; ++j) msg += ' ' + format_fixed(rates[j], 3);
  throw NumericError(msg + ")");
}

/// Exact posterior mean when the (model, prior kind) pair has a closed form.
inline std::optional<Vector> conjugate_posterior_mean(const Model& model, const Dataset& data,
                                                      const PriorField& prior) {
  if (prior.kind == PriorKind::Custom) return std::nullopt;
  return model.exact_posterior_mean(data, prior.kind);
}

inline std::optional<Vector> conjugate_posterior_mode(const Model& model, const Dataset& data,
                                                      const PriorField& prior) {
  if (prior.kind == PriorKind::Custom) return std::nullopt;
  return model.exact_posterior_mode(data, prior.kind);
}

}  // namespace brprior
