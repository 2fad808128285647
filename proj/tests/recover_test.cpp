#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "schoenberg/recover.hpp"

using namespace schoenberg;

namespace {

double mass_between(const MixingMeasure& m, double lo, double hi) {
  double mass = 0.0;
  for (const auto& a : m.atoms())
    if (a.scale >= lo && a.scale <= hi) mass += a.weight;
  return mass;
}

double rms_misfit(const MixingMeasure& m, const RecoveryProblem& p) {
  double ss = 0.0;
  for (std::size_t j = 0; j < p.t_grid.size(); ++j) {
    const double r = mixture_laplace(m, p.t_grid[j]) - p.f_values[j];
    ss += r * r;
  }
  return std::sqrt(ss / p.t_grid.size());
}

// Either w_k = 0 (then the objective may only increase along e_k) or the
// gradient A^T (A w - b) vanishes in that coordinate.
void expect_complementary_slackness(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                    const Eigen::VectorXd& w, double tol) {
  const Eigen::VectorXd grad = a.transpose() * (a * w - b);
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    ASSERT_GE(w(k), 0.0);
    if (w(k) > 0.0) {
      EXPECT_LE(std::abs(grad(k)), tol) << "k=" << k;
    } else {
      EXPECT_GE(grad(k), -tol) << "k=" << k;
    }
  }
}

}  // namespace

TEST(Grids, LinspaceAndLogspace) {
  EXPECT_EQ(linspace(0.0, 4.0, 41).size(), 41u);
  EXPECT_EQ(linspace(0.0, 4.0, 41)[10], 1.0);
  const auto s = default_s_grid();
  ASSERT_EQ(s.size(), 201u);
  EXPECT_EQ(s.front(), 1e-2);
  EXPECT_EQ(s.back(), 1e2);
  EXPECT_EQ(s[100], 1.0);
  EXPECT_THROW(logspace(0.0, 1.0, 3), InvalidInput);
  EXPECT_THROW(linspace(0.0, 1.0, 0), InvalidInput);
}

TEST(DesignMatrix, Examples) {
  const std::vector<double> t0{0.0}, s12{1.0, 2.0};
  const auto a = design_matrix(t0, s12);
  EXPECT_EQ(a, Eigen::MatrixXd::Ones(1, 2));
  const std::vector<double> tr{std::sqrt(2.0)}, s1{1.0};
  EXPECT_NEAR(design_matrix(tr, s1)(0, 0), std::exp(-1.0), 1e-15);
  const std::vector<double> t3{0.0, 1.0, 2.0};
  const auto c = design_matrix(t3, s1);
  EXPECT_EQ(c(0, 0), 1.0);
  EXPECT_NEAR(c(1, 0), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(c(2, 0), std::exp(-2.0), 1e-15);
}

TEST(Nnls, IdentityExamples) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  const auto a = nnls(id, Eigen::Vector2d(1.0, 2.0));
  EXPECT_NEAR(a.weights(0), 1.0, 1e-15);
  EXPECT_NEAR(a.weights(1), 2.0, 1e-15);
  const auto b = nnls(id, Eigen::Vector2d(1.0, -2.0));
  EXPECT_NEAR(b.weights(0), 1.0, 1e-15);
  EXPECT_EQ(b.weights(1), 0.0);
}

TEST(Nnls, RecoversIndicatorAtOne) {
  const auto t = linspace(0.0, 4.0, 41);
  const auto s = default_s_grid();
  const Eigen::MatrixXd a = design_matrix(t, s);
  Eigen::VectorXd b(41);
  for (int j = 0; j < 41; ++j) b(j) = std::exp(-0.5 * t[j] * t[j]);
  const auto result = nnls(a, b);
  EXPECT_LE((a * result.weights - b).norm() / std::sqrt(41.0), 1e-6);
  EXPECT_NEAR(result.weights(100), 1.0, 1e-6);
  EXPECT_NEAR(result.weights.sum(), 1.0, 1e-6);
  expect_complementary_slackness(a, b, result.weights, 1e-8);
}

TEST(Nnls, ComplementarySlacknessOnRandomProblems) {
  Stream rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = static_cast<int>(rng.integer(2, 30));
    const int cols = static_cast<int>(rng.integer(1, 30));
    Eigen::MatrixXd a(rows, cols);
    Eigen::VectorXd b(rows);
    for (int i = 0; i < rows; ++i) {
      b(i) = rng.normal();
      for (int j = 0; j < cols; ++j) a(i, j) = rng.normal();
    }
    const auto result = nnls(a, b);
    expect_complementary_slackness(a, b, result.weights, 1e-8);
    EXPECT_LE(result.kkt_residual, 1e-10 * (a.transpose() * b).norm() + 1e-12);
  }
}

TEST(Nnls, ComplementarySlacknessOnExpMixtureDesign) {
  const auto t = default_t_grid();
  const auto s = default_s_grid();
  const Eigen::MatrixXd a = design_matrix(t, s);
  Eigen::VectorXd b(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) b(j) = 1.0 / (1.0 + 0.5 * t[j] * t[j]);
  const auto result = nnls(a, b);
  expect_complementary_slackness(a, b, result.weights, 1e-8);
}

TEST(Nnls, RidgeShrinksTowardZero) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  const auto r = nnls(id, Eigen::Vector2d(1.0, 2.0), 1.0);
  EXPECT_NEAR(r.weights(0), 0.5, 1e-14);
  EXPECT_NEAR(r.weights(1), 1.0, 1e-14);
}

TEST(Nnls, InputValidation) {
  EXPECT_THROW(nnls(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(3)), InvalidInput);
  EXPECT_THROW(nnls(Eigen::MatrixXd(2, 0), Eigen::VectorXd::Ones(2)), InvalidInput);
  EXPECT_THROW(nnls(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(2), -1.0), InvalidInput);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(0, 1) = NAN;
  EXPECT_THROW(nnls(bad, Eigen::VectorXd::Ones(2)), InvalidInput);
}

TEST(Nnls, IterationCapCarriesBestIterate) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  try {
    nnls(id, Eigen::Vector3d(1.0, 2.0, 3.0), 0.0, 1);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_EQ(e.best_iterate().size(), 3u);
    EXPECT_GE(e.iterations(), 1u);
    // One column entered before the cap: the largest descent, b = 3.
    EXPECT_EQ(e.best_iterate()[2], 3.0);
  }
}

TEST(RecoverMixing, GaussianConcentratesAtOne) {
  const auto problem = RecoveryProblem::from_profile(RadialProfile::gaussian());
  const auto result = recover_mixing(problem);
  EXPECT_GE(mass_between(result.measure, 0.9, 1.1), 0.99);
  EXPECT_LE(result.residual_norm, 1e-6);
  EXPECT_NEAR(result.measure.total_mass(), 1.0, 1e-12);
}

TEST(RecoverMixing, ExpMixtureRoundTrip) {
  const auto truth = exponential_measure();
  const auto result = recover_mixing(RecoveryProblem::from_profile(RadialProfile::exp_mixture()));
  EXPECT_LE(result.residual_norm, 1e-6);
  EXPECT_LE(wasserstein1(result.measure, truth), 0.05);
}

TEST(RecoverMixing, ConstantProfileSitsAtSmallestScale) {
  const auto one = RadialProfile::from_function([](double) { return 1.0; }, "constant");
  RecoveryOptions options;
  options.ridge = 0.0;
  const auto problem = RecoveryProblem::from_profile(one, default_t_grid(), logspace(1e-12, 1e2, 57), options);
  const auto result = recover_mixing(problem);
  EXPECT_LE(result.residual_norm, 1e-9);
  EXPECT_EQ(result.measure.atoms().front().scale, 1e-12);
  EXPECT_GE(mass_between(result.measure, 0.0, 1e-9), 1.0 - 1e-9);
}

TEST(RecoverMixing, TriangleLeavesResidual) {
  const auto result = recover_mixing(RecoveryProblem::from_profile(RadialProfile::triangle()));
  EXPECT_GT(result.residual_norm, 0.01);
}

TEST(RecoverMixing, ReportedResidualIsSelfConsistent) {
  const RadialProfile profiles[] = {RadialProfile::gaussian(), RadialProfile::exp_mixture(),
                                    RadialProfile::cauchy(), RadialProfile::triangle()};
  for (const auto& f : profiles) {
    const auto problem = RecoveryProblem::from_profile(f);
    const auto result = recover_mixing(problem);
    EXPECT_LE(rms_misfit(result.measure, problem), result.residual_norm + 1e-12) << f.label();
    EXPECT_GE(result.residual_norm, 0.0);
  }
}

TEST(RecoverMixing, CatalogRoundTrips) {
  for (const auto& truth : {MixingMeasure::dirac(1.0), exponential_measure()}) {
    const auto result = recover_mixing(RecoveryProblem::from_profile(mixture_profile(truth)));
    EXPECT_LE(wasserstein1(result.measure, truth), 0.05) << truth.label();
  }
}

// The default s-grid stops at 100, but the Levy law puts about 8% of its mass
// above that, so KS on the default grid is bounded below by that tail. On a
// grid reaching 1e4 the roundtrip is accurate.
TEST(RecoverMixing, LevyRoundTripNeedsWiderScaleGrid) {
  const auto truth = levy_measure();
  const double tail = std::erf(std::sqrt(0.5 / 100.0));  // P(S > 100)
  const auto narrow = recover_mixing(RecoveryProblem::from_profile(mixture_profile(truth)));
  EXPECT_GE(ks_distance(narrow.measure, truth), tail - 0.01);
  const auto wide =
      recover_mixing(RecoveryProblem::from_profile(mixture_profile(truth), default_t_grid(), logspace(1e-2, 1e4, 301)));
  EXPECT_LE(ks_distance(wide.measure, truth), 0.05);
  EXPECT_LE(wide.residual_norm, 1e-6);
}

TEST(RecoverMixing, ScaleEquivariance) {
  const auto squeezed = RadialProfile::from_function([](double t) { return std::exp(-2.0 * t * t); }, "gaussian(2t)");
  const auto result = recover_mixing(RecoveryProblem::from_profile(squeezed));
  EXPECT_LE(wasserstein1(result.measure, MixingMeasure::dirac(4.0)), 0.1);
}

TEST(RecoverMixing, UnnormalizedKeepsSolverMass) {
  RecoveryOptions options;
  options.normalize_mass = false;
  const auto result = recover_mixing(RecoveryProblem::from_profile(RadialProfile::gaussian(), default_t_grid(),
                                                                   default_s_grid(), options));
  EXPECT_FALSE(result.measure.is_probability());
  EXPECT_NEAR(result.measure.total_mass(), 1.0, 1e-6);
  EXPECT_NEAR(result.mass_deficit, 0.0, 1e-6);
}

TEST(RecoveryProblem, Validation) {
  RecoveryProblem p{{0.0, 1.0}, {1.0, 0.5}, {1.0, 2.0}, {}};
  EXPECT_NO_THROW(p.validate());
  auto bad = p;
  bad.t_grid = {0.1, 1.0};
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = p;
  bad.f_values = {0.9, 0.5};
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = p;
  bad.f_values = {1.0};
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = p;
  bad.f_values = {1.0, 1.5};
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = p;
  bad.s_grid = {0.0, 1.0};
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = p;
  bad.s_grid = {2.0, 1.0};
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = p;
  bad.t_grid = {0.0, NAN};
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = p;
  bad.s_grid = {};
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(Distances, WassersteinExamples) {
  const auto d1 = MixingMeasure::dirac(1.0);
  const auto e = exponential_measure();
  EXPECT_EQ(wasserstein1(e, e), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein1(d1, MixingMeasure::dirac(2.0)), 1.0);
  const MixingMeasure split({{0.5, 0.5}, {1.5, 0.5}}, "split");
  EXPECT_DOUBLE_EQ(wasserstein1(d1, split), 0.5);
  EXPECT_DOUBLE_EQ(wasserstein1(split, d1), 0.5);
}

TEST(Distances, KsExamples) {
  const auto e = exponential_measure();
  EXPECT_EQ(ks_distance(e, e), 0.0);
  EXPECT_EQ(ks_distance(MixingMeasure::dirac(1.0), MixingMeasure::dirac(2.0)), 1.0);
  const MixingMeasure split({{0.5, 0.5}, {1.5, 0.5}}, "split");
  EXPECT_DOUBLE_EQ(ks_distance(MixingMeasure::dirac(1.0), split), 0.5);
}

TEST(Distances, EmpiricalAgainstMeasure) {
  const EmpiricalMeasure e({1.0, 1.0, 3.0, 3.0});
  const MixingMeasure m({{1.0, 0.5}, {3.0, 0.5}}, "same");
  EXPECT_EQ(wasserstein1(e, m), 0.0);
  EXPECT_EQ(ks_distance(e, m), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein1(e, MixingMeasure::dirac(2.0)), 1.0);
}
