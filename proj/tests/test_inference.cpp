#include "zoo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace brprior;

namespace {

Vector v1(double x) { return zoo::vec({x}); }

Dataset scalar_data(std::vector<double> ys) {
  Dataset d;
  d.responses = Eigen::Map<const Matrix>(ys.data(), static_cast<Eigen::Index>(ys.size()), 1);
  return d;
}

// Gaussian in the first coordinate; the second never enters the likelihood.
class FlatCoordinateModel final : public Model {
 public:
  std::string name() const override { return "flat"; }
  std::size_t dim() const override { return 2; }
  double logdensity(const Dataset& d, std::size_t i, const Vector& t) const override {
    const double e = d.y(i) - t[0];
    return -0.5 * e * e;
  }
  Vector score(const Dataset& d, std::size_t i, const Vector& t) const override {
    return zoo::vec({d.y(i) - t[0], 0.0});
  }
  Matrix hessian(const Dataset&, std::size_t, const Vector&) const override {
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = -1.0;
    return h;
  }
  Tensor3 third(const Dataset&, std::size_t, const Vector&) const override { return Tensor3(2); }
  std::optional<CumulantSet> analytic_cumulants(const Vector&) const override { return std::nullopt; }
  Dataset draw_units(const Vector& t, std::size_t count, Rng& rng) const override {
    Dataset d;
    d.responses.resize(static_cast<Eigen::Index>(count), 1);
    std::normal_distribution<double> z(t[0], 1.0);
    for (Eigen::Index i = 0; i < d.responses.rows(); ++i) d.responses(i, 0) = z(rng);
    return d;
  }
  Vector initial_guess(const Dataset&) const override { return Vector::Zero(2); }
};

McmcConfig config(std::size_t draws, std::size_t burn_in, Seed seed) {
  McmcConfig c;
  c.draws = draws;
  c.burn_in = burn_in;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Newton, ClosedFormMles) {
  const Dataset d = scalar_data({0.5, 1.5, 2.0, 0.25, 0.75});
  const MleResult e = newton_mle(*make_exponential_rate(), d);
  ASSERT_TRUE(e.converged());
  EXPECT_NEAR(e.theta[0], 1.0, 1e-10);
  EXPECT_LT(e.gradient_norm, 1e-8 * 5);

  const MleResult p = newton_mle(*make_poisson(), scalar_data({1, 4, 0, 2, 3}));
  ASSERT_TRUE(p.converged());
  EXPECT_NEAR(p.theta[0], 2.0, 1e-10);

  const MleResult n = newton_mle(*build_normal(1), d);
  ASSERT_TRUE(n.converged());
  EXPECT_NEAR(n.theta[0], 1.0, 1e-10);
  EXPECT_NEAR(n.theta[1], 2.125 / 5.0, 1e-10);
  EXPECT_STREQ(mle_status_name(n.status), "converged");
}

TEST(Newton, LogisticMatchesGradientAscent) {
  const Matrix x = zoo::logistic_design();
  const auto m = build_logistic(x);
  const Dataset d = m->sample(zoo::vec({-1.25, 0.75, 0.2}), 30, 4);
  const MleResult r = newton_mle(*m, d);
  ASSERT_TRUE(r.converged()) << mle_status_name(r.status);

  // Plain gradient ascent with a step below 4 / lambda_max(X'X).
  const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(x.transpose() * x).eigenvalues().maxCoeff();
  Vector b = Vector::Zero(3);
  for (int it = 0; it < 2000000; ++it) {
    Vector g = Vector::Zero(3);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      g += (d.responses(i, 0) - 1.0 / (1.0 + std::exp(-x.row(i).dot(b)))) * x.row(i).transpose();
    if (g.norm() < 1e-12) break;
    b += (3.0 / lmax) * g;
  }
  EXPECT_LT((r.theta - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Newton, SeparatedLogisticIsNotConverged) {
  Matrix x(7, 2);
  for (int i = 0; i < 7; ++i) x.row(i) << 1.0, i - 3.0;
  const auto m = build_logistic(x);
  Dataset d;
  d.responses = Matrix(7, 1);
  d.responses << 0, 0, 0, 0, 1, 1, 1;
  d.covariates = x;
  const MleResult r = newton_mle(*m, d);
  EXPECT_FALSE(r.converged());
  EXPECT_NE(r.status, MleStatus::Converged);
}

TEST(Newton, BoundaryDataDoesNotConverge) {
  // All-zero counts put the Poisson MLE on the boundary.
  const MleResult r = newton_mle(*make_poisson(), scalar_data({0, 0, 0}));
  EXPECT_FALSE(r.converged());
}

TEST(Mcmc, ExponentialMatchesConjugateMean) {
  const auto m = make_exponential_rate();
  const Dataset d = m->sample(v1(2.0), 20, 8);
  for (PriorKind k : {PriorKind::BR, PriorKind::Uniform}) {
    const PriorField p = make_prior(*m, k, v1(2.0));
    const Chain c = metropolis_within_gibbs(*m, d, p, config(20000, 1000, 5));
    const double exact = (*conjugate_posterior_mean(*m, d, p))[0];
    EXPECT_LT(std::abs(c.mean()[0] - exact), 3.0 * c.mc_se()[0]) << prior_kind_name(k);
  }
}

TEST(Mcmc, GradientOnlyPriorMatchesConjugateMean) {
  const auto m = make_exponential_rate();
  const Dataset d = m->sample(v1(2.0), 20, 9);
  const PriorField field = field_prior(*m, PriorKind::BR);
  ASSERT_FALSE(field.has_density());
  const Chain c = metropolis_within_gibbs(*m, d, field, config(20000, 1000, 6));
  const double exact = (*m->exact_posterior_mean(d, PriorKind::BR))[0];
  EXPECT_LT(std::abs(c.mean()[0] - exact), 3.0 * c.mc_se()[0]);
}

TEST(Mcmc, NormalStrataMatchesConjugateMean) {
  const auto m = build_normal(std::vector<std::size_t>{5, 6});
  const Dataset d = m->sample(zoo::vec({0.0, 2.0, 1.5}), 11, 2);
  const PriorField p = make_prior(*m, PriorKind::BR, zoo::vec({0.0, 0.0, 1.0}));
  McmcConfig cfg = config(30000, 2000, 7);
  cfg.step_sizes = tune_step_sizes(*m, d, p, config(1000, 200, 70));
  const Chain c = metropolis_within_gibbs(*m, d, p, cfg);
  const Vector exact = *m->exact_posterior_mean(d, PriorKind::BR);
  const Vector se = c.mc_se();
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_LT(std::abs(c.mean()[j] - exact[j]), 3.0 * se[j]) << "coord " << j;
}

TEST(Mcmc, SameSeedSameChain) {
  const auto m = build_logistic(zoo::logistic_design());
  const Dataset d = m->sample(zoo::vec({-1.25, 0.75, 0.2}), 30, 4);
  const PriorField p = make_prior(*m, PriorKind::BR, zoo::vec({-1.25, 0.75, 0.2}));
  const Chain a = metropolis_within_gibbs(*m, d, p, config(500, 100, 42));
  const Chain b = metropolis_within_gibbs(*m, d, p, config(500, 100, 42));
  const Chain c = metropolis_within_gibbs(*m, d, p, config(500, 100, 43));
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  EXPECT_EQ(a.config_json().dump(), b.config_json().dump());
}

TEST(Mcmc, DrawCountingAndCsv) {
  const auto m = make_exponential_rate();
  const Dataset d = m->sample(v1(1.0), 10, 1);
  McmcConfig cfg = config(300, 100, 3);
  EXPECT_EQ(metropolis_within_gibbs(*m, d, uniform_prior(), cfg).samples.rows(), 300);
  cfg.draws_include_burn_in = true;
  const Chain c = metropolis_within_gibbs(*m, d, uniform_prior(), cfg);
  EXPECT_EQ(c.samples.rows(), 200);
  std::ostringstream os;
  c.write_csv(os, m->labels());
  const std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 201);
  EXPECT_EQ(s.rfind("draw,theta\n", 0), 0u);
}

TEST(Mcmc, ConfigValidation) {
  const auto m = make_exponential_rate();
  const Dataset d = m->sample(v1(1.0), 10, 1);
  McmcConfig cfg = config(0, 0, 1);
  EXPECT_THROW(metropolis_within_gibbs(*m, d, uniform_prior(), cfg), UsageError);
  cfg = config(100, 100, 1);
  cfg.draws_include_burn_in = true;
  EXPECT_THROW(metropolis_within_gibbs(*m, d, uniform_prior(), cfg), UsageError);
  cfg = config(100, 10, 1);
  cfg.step_sizes = zoo::vec({-1.0});
  EXPECT_THROW(metropolis_within_gibbs(*m, d, uniform_prior(), cfg), UsageError);
  cfg.step_sizes = zoo::vec({1.0, 1.0});
  EXPECT_THROW(metropolis_within_gibbs(*m, d, uniform_prior(), cfg), UsageError);
  cfg = config(100, 10, 1);
  cfg.accept_lo = 0.6;
  EXPECT_THROW(metropolis_within_gibbs(*m, d, uniform_prior(), cfg), UsageError);
  cfg = config(100, 10, 1);
  cfg.init = v1(-1.0);
  EXPECT_THROW(metropolis_within_gibbs(*m, d, uniform_prior(), cfg), UsageError);
}

TEST(Mcmc, ZeroAcceptanceIsAnError) {
  const auto m = make_exponential_rate();
  const Dataset d = m->sample(v1(1.0), 20, 1);
  McmcConfig cfg = config(200, 0, 1);
  cfg.step_sizes = v1(1e12);
  EXPECT_THROW(metropolis_within_gibbs(*m, d, uniform_prior(), cfg), NumericError);
}

TEST(Tuning, AcceptanceLandsInTargetBand) {
  const auto m = build_logistic(zoo::logistic_design());
  const Dataset d = m->sample(zoo::vec({-1.25, 0.75, 0.2}), 30, 4);
  const PriorField p = make_prior(*m, PriorKind::BR, zoo::vec({-1.25, 0.75, 0.2}));
  const Vector steps = tune_step_sizes(*m, d, p, config(1000, 200, 11));
  McmcConfig cfg = config(4000, 500, 12);
  cfg.step_sizes = steps;
  const Chain c = metropolis_within_gibbs(*m, d, p, cfg);
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_GE(c.accept_rates[j], 0.2) << j;
    EXPECT_LE(c.accept_rates[j], 0.5) << j;
  }
}

TEST(Tuning, LargerSamplesGiveSmallerSteps) {
  const auto m = make_exponential_rate();
  for (Seed s : {1u, 2u, 3u}) {
    const Dataset small = m->sample(v1(2.0), 50, s), large = m->sample(v1(2.0), 200, s);
    const double a = tune_step_sizes(*m, small, uniform_prior(), config(1000, 100, s))[0];
    const double b = tune_step_sizes(*m, large, uniform_prior(), config(1000, 100, s))[0];
    EXPECT_LT(b, a) << "seed " << s;
  }
}

TEST(Tuning, FlatCoordinateCannotBeTuned) {
  const FlatCoordinateModel m;
  const Dataset d = m.sample(zoo::vec({0.5, 0.0}), 30, 1);
  McmcConfig pilot = config(500, 100, 1);
  EXPECT_THROW(tune_step_sizes(m, d, uniform_prior(), pilot), NumericError);  // MLE is not unique
  pilot.init = zoo::vec({0.5, 0.0});
  EXPECT_THROW(tune_step_sizes(m, d, uniform_prior(), pilot), NumericError);  // acceptance stays at 1
}

TEST(Tuning, ShortPilotIsRejected) {
  const auto m = make_exponential_rate();
  const Dataset d = m->sample(v1(1.0), 10, 1);
  EXPECT_THROW(tune_step_sizes(*m, d, uniform_prior(), config(499, 100, 1)), UsageError);
}

TEST(Chain, EssOfIndependentDrawsIsNearCount) {
  Chain c;
  Rng rng = make_rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  c.samples.resize(20000, 1);
  for (Eigen::Index i = 0; i < 20000; ++i) c.samples(i, 0) = z(rng);
  EXPECT_NEAR(c.ess()[0] / 20000.0, 1.0, 0.1);
  EXPECT_NEAR(c.mc_se()[0], 1.0 / std::sqrt(20000.0), 1e-3);
}
