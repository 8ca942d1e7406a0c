#pragma once

#include "brprior/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <optional>
#include <string>

namespace brprior {

/// Analytic per-observation cumulants of `model` at `theta`.
inline CumulantSet analytic_cumulants(const Model& model, const ParamPoint& theta) {
  if (theta.dim() != model.dim()) throw UsageError(model.name() + ": parameter dimension mismatch");
  if (!model.in_domain(theta.values())) throw NumericError(model.name() + ": theta outside parameter space");
  auto c = model.analytic_cumulants(theta.values());
  if (!c) throw NumericError(model.name() + ": analytic cumulants unavailable");
  return *std::move(c);
}

/// Entry-wise standard errors matching the layout of CumulantSet.
struct CumulantErrors {
  Matrix kappa2_cross;
  Matrix kappa2_hess;
  Tensor3 kappa3_pure;
  Tensor3 kappa3_cross;
  Tensor3 kappa3_score;
};

struct BartlettResiduals {
  Matrix second;  // kappa_rs + kappa_{r,s}
  Tensor3 third;  // kappa_stu + kappa_{s,tu} + kappa_{t,su} + kappa_{u,st} + kappa_{s,t,u}
};

struct McCumulants {
  CumulantSet estimate;
  CumulantErrors se;
  // Bartlett residuals are formed per draw, so these SEs account for the
  // correlation between the terms.
  BartlettResiduals residual_se;
  std::size_t draws = 0;
};

namespace detail {
struct Moment {
  long double sum = 0.0L;
  long double sumsq = 0.0L;
  void add(double v) {
    sum += v;
    sumsq += static_cast<long double>(v) * v;
  }
  double mean(std::size_t n) const { return static_cast<double>(sum / n); }
  double se(std::size_t n) const {
    const long double m = sum / n;
    long double var = (sumsq - n * m * m) / (n - 1);
    if (var < 0) var = 0;
    return static_cast<double>(std::sqrt(var / n));
  }
};
}  // namespace detail

/// Monte Carlo estimates of every cumulant array from single-observation
/// draws. Observation m is drawn from unit m % unit_count(), so designs and
/// strata are averaged the same way as the analytic arrays.
inline McCumulants mc_cumulants(const Model& model, const ParamPoint& theta, std::size_t draws,
                                Seed seed) {
  if (draws < 1000) throw UsageError("mc_cumulants: need at least 1000 draws");
  if (theta.dim() != model.dim()) throw UsageError(model.name() + ": parameter dimension mismatch");
  const Vector& t = theta.values();
  const std::size_t d = model.dim();
  const auto de = static_cast<Eigen::Index>(d);
  const Dataset data = model.sample(t, draws, seed);

  std::vector<detail::Moment> m2c(d * d), m2h(d * d), b2(d * d);
  std::vector<detail::Moment> m3p(d * d * d), m3c(d * d * d), m3s(d * d * d), b3(d * d * d);

  for (std::size_t i = 0; i < draws; ++i) {
    const Vector s = model.score(data, i, t);
    const Matrix h = model.hessian(data, i, t);
    const Tensor3 th = model.third(data, i, t);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t q = 0; q < d; ++q) {
        const auto re = static_cast<Eigen::Index>(r), qe = static_cast<Eigen::Index>(q);
        const double cross = s[re] * s[qe];
        m2c[r * d + q].add(cross);
        m2h[r * d + q].add(h(re, qe));
        b2[r * d + q].add(cross + h(re, qe));
      }
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        for (std::size_t c = 0; c < d; ++c) {
          const auto ae = static_cast<Eigen::Index>(a), be = static_cast<Eigen::Index>(b),
                     ce = static_cast<Eigen::Index>(c);
          const std::size_t idx = (a * d + b) * d + c;
          const double pure = th(a, b, c);
          const double cross = s[ae] * h(be, ce);
          const double score3 = s[ae] * s[be] * s[ce];
          m3p[idx].add(pure);
          m3c[idx].add(cross);
          m3s[idx].add(score3);
          b3[idx].add(pure + cross + s[be] * h(ae, ce) + s[ce] * h(ae, be) + score3);
        }
  }

  McCumulants out;
  out.draws = draws;
  out.estimate = CumulantSet::zeros(d);
  out.se = {Matrix::Zero(de, de), Matrix::Zero(de, de), Tensor3(d), Tensor3(d), Tensor3(d)};
  out.residual_se = {Matrix::Zero(de, de), Tensor3(d)};
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t q = 0; q < d; ++q) {
      const auto re = static_cast<Eigen::Index>(r), qe = static_cast<Eigen::Index>(q);
      out.estimate.kappa2_cross(re, qe) = m2c[r * d + q].mean(draws);
      out.estimate.kappa2_hess(re, qe) = m2h[r * d + q].mean(draws);
      out.se.kappa2_cross(re, qe) = m2c[r * d + q].se(draws);
      out.se.kappa2_hess(re, qe) = m2h[r * d + q].se(draws);
      out.residual_se.second(re, qe) = b2[r * d + q].se(draws);
    }
  for (std::size_t idx = 0; idx < d * d * d; ++idx) {
    out.estimate.kappa3_pure.data()[idx] = m3p[idx].mean(draws);
    out.estimate.kappa3_cross.data()[idx] = m3c[idx].mean(draws);
    out.estimate.kappa3_score.data()[idx] = m3s[idx].mean(draws);
    out.se.kappa3_pure.data()[idx] = m3p[idx].se(draws);
    out.se.kappa3_cross.data()[idx] = m3c[idx].se(draws);
    out.se.kappa3_score.data()[idx] = m3s[idx].se(draws);
    out.residual_se.third.data()[idx] = b3[idx].se(draws);
  }
  out.estimate.finalize();
  return out;
}

/// Second- and third-order Bartlett identity residuals; both vanish for
/// exact cumulants of a regular model.
inline BartlettResiduals bartlett_residuals(const CumulantSet& c) {
  const std::size_t d = c.dim();
  BartlettResiduals r{c.kappa2_hess + c.kappa2_cross, Tensor3(d)};
  for (std::size_t s = 0; s < d; ++s)
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t u = 0; u < d; ++u)
        r.third(s, t, u) = c.kappa3_pure(s, t, u) + c.kappa3_cross(s, t, u) +
                           c.kappa3_cross(t, s, u) + c.kappa3_cross(u, s, t) +
                           c.kappa3_score(s, t, u);
  return r;
}

/// Cube tensor and connection coefficients of the full-sample model.
struct GeometryCoefficients {
  Tensor3 cube;        // T_rsj
  Tensor3 e_conn;      // Gamma^(e)_{rs,j}, indices (r, s, j)
  double alpha = 1.0;
  Tensor3 alpha_conn;  // Gamma^(alpha)_{rs,j} = e_conn + (1 - alpha)/2 cube
};

inline GeometryCoefficients geometry_coefficients(const CumulantSet& c, std::size_t n, double alpha) {
  const std::size_t d = c.dim();
  const double nn = static_cast<double>(n);
  GeometryCoefficients g{c.kappa3_score * nn, Tensor3(d), alpha, Tensor3(d)};
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s)
      for (std::size_t j = 0; j < d; ++j) g.e_conn(r, s, j) = nn * c.kappa3_cross(j, r, s);
  g.alpha_conn = g.e_conn + ((1.0 - alpha) / 2.0) * g.cube;
  return g;
}

/// Observed log-likelihood derivatives and their h = -l/n counterparts.
struct LoglikBundle {
  double loglik = 0.0;
  Vector gradient;
  Matrix hessian;
  Tensor3 third;
  std::size_t n = 0;
  double h = 0.0;
  Vector h_grad;
  Matrix h_hess;
  Tensor3 h_third;
  std::optional<Matrix> h_inv;  // absent when h_hess is singular
  bool singular = false;
};

inline LoglikBundle observed_loglik_bundle(const Model& model, const Dataset& data,
                                           const ParamPoint& theta) {
  if (data.size() == 0) throw UsageError("observed_loglik_bundle: empty dataset");
  data.validate();
  const Vector& t = theta.values();
  const std::size_t d = model.dim();
  LoglikBundle b;
  b.n = data.size();
  b.gradient = Vector::Zero(static_cast<Eigen::Index>(d));
  b.hessian = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  b.third = Tensor3(d);
  for (std::size_t i = 0; i < data.size(); ++i) {
    b.loglik += model.logdensity(data, i, t);
    b.gradient += model.score(data, i, t);
    b.hessian += model.hessian(data, i, t);
    b.third += model.third(data, i, t);
  }
  const double scale = -1.0 / static_cast<double>(b.n);
  b.h = scale * b.loglik;
  b.h_grad = scale * b.gradient;
  b.h_hess = scale * b.hessian;
  b.h_third = scale * b.third;
  try {
    b.h_inv = checked_inverse(b.h_hess, "observed Hessian", 1e-14);
  } catch (const NumericError&) {
    b.singular = true;
  }
  return b;
}

/// Result of comparing analytic derivatives with central differences.
struct DerivativeCheck {
  double score_err = 0.0;
  double hessian_err = 0.0;
  double third_err = 0.0;
  bool ok(double tol) const { return score_err <= tol && hessian_err <= tol && third_err <= tol; }
};

namespace detail {
inline double mixed_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (1.0 + std::abs(numeric));
}
}  // namespace detail

/// Validates score, Hessian and third derivatives of observation i by
/// central differences with step 1e-5 * max(1, |theta_j|). Each order is
/// differenced from the one below it (logdensity -> score -> Hessian ->
/// third), which anchors the whole chain to logdensity.
/// Errors are max over entries of |a - n| / (1 + |n|).
inline DerivativeCheck check_derivatives(const Model& model, const Dataset& data, std::size_t i,
                                         const Vector& theta) {
  const std::size_t d = model.dim();
  const Vector s = model.score(data, i, theta);
  const Matrix h = model.hessian(data, i, theta);
  const Tensor3 t = model.third(data, i, theta);
  DerivativeCheck out;
  for (std::size_t j = 0; j < d; ++j) {
    const auto je = static_cast<Eigen::Index>(j);
    const double step = 1e-5 * std::max(1.0, std::abs(theta[je]));
    Vector up = theta, dn = theta;
    up[je] += step;
    dn[je] -= step;
    const double ds = (model.logdensity(data, i, up) - model.logdensity(data, i, dn)) / (2 * step);
    out.score_err = std::max(out.score_err, detail::mixed_err(s[je], ds));
    const Vector dh = (model.score(data, i, up) - model.score(data, i, dn)) / (2 * step);
    const Matrix dt = (model.hessian(data, i, up) - model.hessian(data, i, dn)) / (2 * step);
    for (std::size_t r = 0; r < d; ++r) {
      const auto re = static_cast<Eigen::Index>(r);
      out.hessian_err = std::max(out.hessian_err, detail::mixed_err(h(re, je), dh[re]));
      for (std::size_t q = 0; q < d; ++q)
        out.third_err = std::max(out.third_err,
                                 detail::mixed_err(t(r, q, j), dt(re, static_cast<Eigen::Index>(q))));
    }
  }
  return out;
}

// JSON layout: matrices as nested row arrays, tensors as flat row-major
// arrays where (i, j, k) sits at (i*d + j)*d + k.
inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t d) {
  const auto de = static_cast<Eigen::Index>(d);
  Matrix m(de, de);
  if (j.size() != d) throw UsageError("matrix JSON has wrong row count");
  for (std::size_t r = 0; r < d; ++r) {
    if (j[r].size() != d) throw UsageError("matrix JSON has wrong column count");
    for (std::size_t c = 0; c < d; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

inline nlohmann::json tensor_to_json(const Tensor3& t) {
  return nlohmann::json(std::vector<double>(t.data().begin(), t.data().end()));
}

inline Tensor3 tensor_from_json(const nlohmann::json& j, std::size_t d) {
  if (j.size() != d * d * d) throw UsageError("tensor JSON has wrong length");
  Tensor3 t(d);
  for (std::size_t i = 0; i < d * d * d; ++i) t.data()[i] = j[i].get<double>();
  return t;
}

inline nlohmann::json to_json(const CumulantSet& c) {
  return {{"dim", c.dim()},
          {"tensor_layout", "row-major"},
          {"kappa2_cross", matrix_to_json(c.kappa2_cross)},
          {"kappa2_hess", matrix_to_json(c.kappa2_hess)},
          {"kappa3_pure", tensor_to_json(c.kappa3_pure)},
          {"kappa3_cross", tensor_to_json(c.kappa3_cross)},
          {"kappa3_score", tensor_to_json(c.kappa3_score)},
          {"fisher", matrix_to_json(c.fisher)},
          {"fisher_inv", matrix_to_json(c.fisher_inv)}};
}

inline CumulantSet cumulants_from_json(const nlohmann::json& j) {
  const auto d = j.at("dim").get<std::size_t>();
  CumulantSet c = CumulantSet::zeros(d);
  c.kappa2_cross = matrix_from_json(j.at("kappa2_cross"), d);
  c.kappa2_hess = matrix_from_json(j.at("kappa2_hess"), d);
  c.kappa3_pure = tensor_from_json(j.at("kappa3_pure"), d);
  c.kappa3_cross = tensor_from_json(j.at("kappa3_cross"), d);
  c.kappa3_score = tensor_from_json(j.at("kappa3_score"), d);
  c.finalize();
  return c;
}

}  // namespace brprior
