#include "zoo.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace brprior;

namespace {

Vector v1(double x) { return zoo::vec({x}); }

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

void expect_close(double a, double b) { EXPECT_NEAR(a, b, 1e-14 * (1.0 + std::abs(a))); }

}  // namespace

TEST(ParamPoint, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(ParamPoint(Vector(0)), UsageError);
  EXPECT_THROW(ParamPoint(zoo::vec({1.0, std::nan("")})), UsageError);
  EXPECT_THROW(ParamPoint(zoo::vec({1.0, INFINITY})), UsageError);
  const ParamPoint p(zoo::vec({1.0, 2.0}));
  EXPECT_EQ(p.dim(), 2u);
  EXPECT_EQ(p.labels().size(), 2u);
}

TEST(AnalyticCumulants, ExponentialRateAtTwo) {
  const auto m = make_exponential_rate();
  const CumulantSet c = analytic_cumulants(*m, m->point(v1(2.0)));
  EXPECT_DOUBLE_EQ(c.kappa2_cross(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(c.kappa3_pure(0, 0, 0), 0.25);
  EXPECT_DOUBLE_EQ(c.kappa3_cross(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(c.kappa3_score(0, 0, 0), -0.25);
  EXPECT_DOUBLE_EQ(c.fisher_inv(0, 0), 4.0);
}

TEST(AnalyticCumulants, GumbelInformationIsOneForAllLocations) {
  const auto m = build_gumbel(1.0);
  for (double mu : {-4.0, -1.0, 0.0, 0.7, 3.0}) {
    const CumulantSet c = analytic_cumulants(*m, m->point(v1(mu)));
    EXPECT_DOUBLE_EQ(c.kappa2_cross(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(c.kappa3_pure(0, 0, 0), -1.0);
    EXPECT_DOUBLE_EQ(c.kappa3_cross(0, 0, 0), 1.0);
  }
}

TEST(AnalyticCumulants, OutsideDomainThrows) {
  const auto m = make_exponential_rate();
  EXPECT_THROW(analytic_cumulants(*m, m->point(v1(-1.0))), NumericError);
  EXPECT_THROW(analytic_cumulants(*m, ParamPoint(zoo::vec({1.0, 2.0}))), UsageError);
}

TEST(CumulantSet, SingularInformationThrows) {
  CumulantSet c = CumulantSet::zeros(2);
  c.kappa2_cross(0, 0) = 1.0;
  EXPECT_THROW(c.finalize(), NumericError);
}

// Symmetries, identities and inversion accuracy at random points of every model.
TEST(AnalyticCumulants, StructuralInvariantsAcrossZoo) {
  Rng rng = make_rng(11);
  for (const auto& z : zoo::members()) {
    SCOPED_TRACE(z.label);
    const std::size_t d = z.model->dim();
    for (int rep = 0; rep < 20; ++rep) {
      const CumulantSet c = analytic_cumulants(*z.model, z.model->point(z.draw_theta(rng)));
      EXPECT_LT(max_abs(c.kappa2_cross - c.kappa2_cross.transpose()), 1e-14);
      EXPECT_LT(max_abs(c.kappa2_hess - c.kappa2_hess.transpose()), 1e-14);
      EXPECT_LT(max_abs(c.kappa2_hess + c.kappa2_cross), 1e-12 * (1 + max_abs(c.kappa2_cross)));
      const Matrix id = c.fisher_inv * c.kappa2_cross;
      EXPECT_LT(max_abs(id - Matrix::Identity(id.rows(), id.cols())), 1e-10);
      EXPECT_LT(max_abs(c.fisher_inv * c.fisher - Matrix::Identity(id.rows(), id.cols())), 1e-10);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t k = 0; k < d; ++k) {
            expect_close(c.kappa3_pure(i, j, k), c.kappa3_pure(j, i, k));
            expect_close(c.kappa3_pure(i, j, k), c.kappa3_pure(k, j, i));
            expect_close(c.kappa3_score(i, j, k), c.kappa3_score(j, i, k));
            expect_close(c.kappa3_score(i, j, k), c.kappa3_score(k, j, i));
            expect_close(c.kappa3_cross(i, j, k), c.kappa3_cross(i, k, j));
          }
    }
  }
}

TEST(BartlettResiduals, VanishForAnalyticCumulants) {
  Rng rng = make_rng(12);
  for (const auto& z : zoo::members()) {
    SCOPED_TRACE(z.label);
    for (int rep = 0; rep < 20; ++rep) {
      const BartlettResiduals r = bartlett_residuals(analytic_cumulants(*z.model, z.model->point(z.draw_theta(rng))));
      EXPECT_LT(max_abs(r.second), 1e-8);
      EXPECT_LT(r.third.max_abs(), 1e-8);
    }
  }
}

TEST(BartlettResiduals, ZeroInputGivesZero) {
  const BartlettResiduals r = bartlett_residuals(CumulantSet::zeros(3));
  EXPECT_EQ(max_abs(r.second), 0.0);
  EXPECT_EQ(r.third.max_abs(), 0.0);
}

TEST(McCumulants, ExponentialInformationWithinFourSe) {
  const auto m = make_exponential_rate();
  const McCumulants mc = mc_cumulants(*m, m->point(v1(2.0)), 1'000'000, 2024);
  EXPECT_LT(std::abs(mc.estimate.kappa2_cross(0, 0) - 0.25), 4 * mc.se.kappa2_cross(0, 0));
  EXPECT_GT(mc.se.kappa2_cross(0, 0), 0.0);
}

TEST(McCumulants, NormalThirdOrderWithinFourSe) {
  const auto m = build_normal(1);
  const ParamPoint theta = m->point(zoo::vec({0.0, 1.0}));
  const CumulantSet a = analytic_cumulants(*m, theta);
  const McCumulants mc = mc_cumulants(*m, theta, 1'000'000, 2025);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k)
        EXPECT_LE(std::abs(mc.estimate.kappa3_pure(i, j, k) - a.kappa3_pure(i, j, k)),
                  4 * mc.se.kappa3_pure(i, j, k) + 1e-12);
}

TEST(McCumulants, BartlettResidualsWithinFourCombinedSe) {
  const auto m = build_gumbel(1.0);
  const McCumulants mc = mc_cumulants(*m, m->point(v1(0.5)), 200'000, 99);
  const BartlettResiduals r = bartlett_residuals(mc.estimate);
  EXPECT_LE(std::abs(r.second(0, 0)), 4 * mc.residual_se.second(0, 0) + 1e-12);
  EXPECT_LE(std::abs(r.third(0, 0, 0)), 4 * mc.residual_se.third(0, 0, 0) + 1e-12);
}

TEST(McCumulants, ReproduciblePerSeed) {
  const auto m = build_normal(1);
  const ParamPoint theta = m->point(zoo::vec({0.3, 2.0}));
  const std::string a = to_json(mc_cumulants(*m, theta, 1000, 5).estimate).dump();
  const std::string b = to_json(mc_cumulants(*m, theta, 1000, 5).estimate).dump();
  const std::string c = to_json(mc_cumulants(*m, theta, 1000, 6).estimate).dump();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_THROW(mc_cumulants(*m, theta, 999, 5), UsageError);
}

TEST(GeometryCoefficients, AlphaFamily) {
  const auto m = build_normal(std::vector<std::size_t>{3, 5});
  const CumulantSet c = analytic_cumulants(*m, m->point(zoo::vec({0.2, -1.0, 1.7})));
  const GeometryCoefficients e = geometry_coefficients(c, 40, 1.0);
  const GeometryCoefficients mconn = geometry_coefficients(c, 40, -1.0);
  EXPECT_EQ((e.alpha_conn - e.e_conn).max_abs(), 0.0);
  EXPECT_EQ((mconn.alpha_conn - (mconn.e_conn + mconn.cube)).max_abs(), 0.0);
  EXPECT_EQ((mconn.alpha_conn - e.alpha_conn - e.cube).max_abs(), 0.0);
  const GeometryCoefficients half = geometry_coefficients(c, 40, 0.5);
  EXPECT_LT((half.alpha_conn - (half.e_conn + 0.25 * half.cube)).max_abs(), 1e-15);
  // Hessian pair first, score index last.
  EXPECT_DOUBLE_EQ(e.e_conn(0, 2, 0), 40 * c.kappa3_cross(0, 0, 2));
}

TEST(GeometryCoefficients, ExponentialEConnectionVanishes) {
  const auto m = make_exponential_rate();
  const GeometryCoefficients g = geometry_coefficients(analytic_cumulants(*m, m->point(v1(2.0))), 1, 0.0);
  EXPECT_EQ(g.e_conn(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g.cube(0, 0, 0), -0.25);
}

TEST(ObservedBundle, NormalGradientVanishesAtSampleMoments) {
  const auto m = build_normal(1);
  const Dataset data = m->sample(zoo::vec({1.0, 2.0}), 50, 3);
  const double mean = data.responses.col(0).mean();
  const double var = (data.responses.col(0).array() - mean).square().mean();
  const LoglikBundle b = observed_loglik_bundle(*m, data, m->point(zoo::vec({mean, var})));
  EXPECT_LT(b.gradient.norm(), 1e-10);
  ASSERT_TRUE(b.h_inv.has_value());
  EXPECT_LT(max_abs(*b.h_inv * b.h_hess - Matrix::Identity(2, 2)), 1e-10);
}

TEST(ObservedBundle, LogisticHessianIsMinusXtWX) {
  const Matrix x = zoo::logistic_design();
  const auto m = build_logistic(x);
  const Vector beta = zoo::vec({-1.25, 0.75, 0.2});
  const Dataset data = m->sample(beta, 30, 8);
  const LoglikBundle b = observed_loglik_bundle(*m, data, m->point(beta));
  Matrix xtwx = Matrix::Zero(3, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(beta)));
    xtwx += p * (1 - p) * x.row(i).transpose() * x.row(i);
  }
  EXPECT_LT(max_abs(b.hessian + xtwx), 1e-10);
}

TEST(ObservedBundle, SingleExponentialObservation) {
  const auto m = make_exponential_rate();
  Dataset d;
  d.responses = Matrix::Constant(1, 1, 0.7);
  const LoglikBundle b = observed_loglik_bundle(*m, d, m->point(v1(1.3)));
  EXPECT_DOUBLE_EQ(b.loglik, std::log(1.3) - 1.3 * 0.7);
  EXPECT_DOUBLE_EQ(b.h, -b.loglik);
  EXPECT_THROW(observed_loglik_bundle(*m, Dataset{Matrix(0, 1), std::nullopt, {}}, m->point(v1(1.0))),
               UsageError);
}

TEST(ObservedBundle, SingularHessianFlagged) {
  const auto m = build_logistic((Matrix(2, 2) << 1, 0, 0, 1).finished());
  Dataset d;
  d.responses = Matrix::Zero(2, 1);
  const LoglikBundle b = observed_loglik_bundle(*m, d, m->point(zoo::vec({800.0, 0.0})));
  EXPECT_TRUE(b.singular);
  EXPECT_FALSE(b.h_inv.has_value());
}

// Score, Hessian and third derivatives against central differences of the
// log-density at 20 random points per model.
TEST(Derivatives, FiniteDifferenceAgreementAcrossZoo) {
  Rng rng = make_rng(13);
  for (const auto& z : zoo::members()) {
    SCOPED_TRACE(z.label);
    for (int rep = 0; rep < 20; ++rep) {
      const Vector theta = z.draw_theta(rng);
      const Dataset data = z.model->sample(theta, 3, derive_seed(77, static_cast<std::uint64_t>(rep)));
      for (std::size_t i = 0; i < data.size(); ++i) {
        const DerivativeCheck chk = check_derivatives(*z.model, data, i, theta);
        EXPECT_TRUE(chk.ok(1e-5)) << "score " << chk.score_err << " hessian " << chk.hessian_err << " third "
                                  << chk.third_err;
      }
    }
  }
}

TEST(Sampling, DeterministicPerSeed) {
  for (const auto& z : zoo::members()) {
    SCOPED_TRACE(z.label);
    const Dataset a = z.model->sample(z.fixed_points[0], 25, 42);
    const Dataset b = z.model->sample(z.fixed_points[0], 25, 42);
    EXPECT_TRUE(a.responses == b.responses);
  }
}

TEST(CumulantJson, RoundTripIsExact) {
  const auto m = build_normal(std::vector<std::size_t>{2, 3});
  const CumulantSet c = analytic_cumulants(*m, m->point(zoo::vec({0.1, 0.2, 0.7})));
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(j.at("tensor_layout"), "row-major");
  const CumulantSet back = cumulants_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
  // (i, j, k) sits at (i*d + j)*d + k
  EXPECT_DOUBLE_EQ(j.at("kappa3_cross")[(0 * 3 + 0) * 3 + 2].get<double>(), c.kappa3_cross(0, 0, 2));
}
