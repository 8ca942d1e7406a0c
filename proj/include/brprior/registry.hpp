#pragma once

#include "brprior/io.hpp"
#include "brprior/models/exponential_family.hpp"
#include "brprior/models/gumbel.hpp"
#include "brprior/models/location.hpp"
#include "brprior/models/logistic.hpp"
#include "brprior/models/normal.hpp"
#include "brprior/models/poisson.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace brprior {

inline const char* const kModelNames =
    "exponential, poisson, normal, normal-strata:K, logistic, gumbel, location, linreg";

/// Construction options for models addressed by name.
struct ModelOptions {
  std::optional<std::string> design_csv;  // logistic, linreg
  std::size_t rows = 30;                  // generated design rows
  std::size_t columns = 3;                // generated logistic design columns
  double rho = 0.1;                       // generated logistic design correlation
  Seed design_seed = 1;
  std::string kernel = "gaussian";        // location, linreg
  std::size_t location_dim = 1;
  std::size_t per_stratum = 10;           // normal-strata:K stratum size
  std::vector<std::size_t> strata_sizes;  // overrides per_stratum
  double sigma = 1.0;                     // gumbel scale
};

namespace detail {
inline std::size_t parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size() || v < 1) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError("invalid " + what + " '" + s + "'");
  }
}
}  // namespace detail

/// Logistic design with rows drawn from N_p(0, Sigma), Sigma_ij = rho^|i-j|.
inline Matrix generated_logistic_design(std::size_t rows, std::size_t cols, double rho, Seed seed) {
  Rng rng = make_rng(seed);
  return draw_gaussian_design(rows, ar1_covariance(cols, rho), rng);
}

/// Regression design: an intercept column plus standard normal columns.
inline Matrix generated_regression_design(std::size_t rows, std::size_t cols, Seed seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < x.cols(); ++j) x(i, j) = z(rng);
  }
  return x;
}

inline std::shared_ptr<Model> build_model(const std::string& name, const ModelOptions& opt = {}) {
  if (name == "exponential") return make_exponential_rate();
  if (name == "poisson") return make_poisson();
  if (name == "gumbel") return build_gumbel(opt.sigma);
  if (name == "normal") return build_normal(1, opt.strata_sizes.empty() ? 1 : opt.strata_sizes.front());
  const std::string strata_prefix = "normal-strata:";
  if (name.rfind(strata_prefix, 0) == 0) {
    const std::size_t k = detail::parse_count(name.substr(strata_prefix.size()), "stratum count");
    if (!opt.strata_sizes.empty()) {
      if (opt.strata_sizes.size() != k) throw UsageError("strata sizes must list " + std::to_string(k) + " values");
      return build_normal(opt.strata_sizes);
    }
    return build_normal(k, opt.per_stratum);
  }
  if (name == "logistic") {
    Matrix x = opt.design_csv ? read_design_csv(*opt.design_csv)
                              : generated_logistic_design(opt.rows, opt.columns, opt.rho, opt.design_seed);
    return build_logistic(std::move(x));
  }
  if (name == "location") return build_location(builtin_kernel(opt.kernel), opt.location_dim);
  if (name == "linreg") {
    Matrix z = opt.design_csv ? read_design_csv(*opt.design_csv)
                              : generated_regression_design(opt.rows, 2, opt.design_seed);
    return build_location_regression(builtin_kernel(opt.kernel), std::move(z));
  }
  throw UsageError("unknown model '" + name + "' (valid: " + kModelNames + ")");
}

}  // namespace brprior
