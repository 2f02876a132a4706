#include <gtest/gtest.h>

#include <mvh/harnack.hpp>

#include "../support/models.hpp"

using mvh::EmpiricalMeasure;
using mvh::HarnackParams;
using mvh::MeasureFlow;
using mvh::RngPolicy;
using testing_models::mat;
using testing_models::state;
using testing_models::vec;

namespace {

HarnackParams small_params() {
  HarnackParams p;
  p.n_paths = 4000;
  p.n_particles = 64;
  p.dt = 0.01;
  p.max_pairs = 4;
  return p;
}

double gauss2(const mvh::SplitState& s) { return 1.0 + std::exp(-s.joined().squaredNorm()); }

}  // namespace

TEST(CouplingPairs, DiracAndPermutationPlans) {
  const auto p = mvh::coupling_pairs(EmpiricalMeasure::dirac(state(0, 0)), EmpiricalMeasure::dirac(state(1, 0)), 4, RngPolicy(1));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].weight, 1.0);

  const auto a = EmpiricalMeasure::uniform(1, 1, mat({{0, 0}, {5, 0}, {10, 0}}));
  const auto b = EmpiricalMeasure::uniform(1, 1, mat({{10.5, 0}, {0.5, 0}, {5.5, 0}}));
  double w2 = 0;
  const auto q = mvh::coupling_pairs(a, b, 4, RngPolicy(1), 1024, &w2);
  ASSERT_EQ(q.size(), 3u);
  EXPECT_NEAR(w2, 0.5, 1e-9);
  for (const auto& c : q) {
    EXPECT_NEAR(c.weight, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(b.atoms()(static_cast<Eigen::Index>(c.j), 0) - a.atoms()(static_cast<Eigen::Index>(c.i), 0), 0.5, 1e-12);
  }
  const auto r = mvh::coupling_pairs(a, b, 2, RngPolicy(1));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].weight, 0.5);
  EXPECT_THROW(mvh::coupling_pairs(a, b, 0, RngPolicy(1)), std::invalid_argument);
}

TEST(Identities, HoldForRandomSamples) {
  mvh::CounterEngine eng = RngPolicy(2).engine(mvh::Stream::probe, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + eng.below(50);
    std::vector<double> lw(n), f(n);
    const double scale = 3.0 * eng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      lw[i] = scale * eng.normal();
      f[i] = 1e-3 + std::exp(eng.normal());
    }
    EXPECT_TRUE(mvh::young_identity(lw, f).holds);
    for (double p : {1.1, 2.0, 5.0}) EXPECT_TRUE(mvh::holder_identity(lw, f, p).holds);
  }
}

TEST(Identities, EqualityCases) {
  const std::vector<double> lw(10, -3.0), f(10, 2.5);
  const auto y = mvh::young_identity(lw, f);
  EXPECT_DOUBLE_EQ(y.lhs, std::log(2.5));
  EXPECT_DOUBLE_EQ(y.rhs, std::log(2.5));
  EXPECT_TRUE(y.holds);
  const auto h = mvh::holder_identity(lw, f, 2.0);
  EXPECT_DOUBLE_EQ(h.lhs, h.rhs);
  EXPECT_THROW(mvh::holder_identity(lw, f, 1.0), std::invalid_argument);
  EXPECT_THROW(mvh::young_identity(lw, std::vector<double>(3, 1.0)), std::invalid_argument);
}

TEST(HarnackCheck, ZeroDriftLogAndPower) {
  const auto model = testing_models::zero_drift();
  const auto g = EmpiricalMeasure::dirac(state(0, 0)), gt = EmpiricalMeasure::dirac(state(0.25, 0.1));
  const auto prm = small_params();
  const auto fl = mvh::harnack_flows(model, g, gt, 1.0, prm, RngPolicy(3));
  const auto lr = mvh::log_harnack_check(model, fl, g, gt, gauss2, 1.0, prm, RngPolicy(3));
  EXPECT_TRUE(lr.pass);
  EXPECT_TRUE(lr.identities_hold);
  EXPECT_EQ(lr.kind, "log");
  EXPECT_GE(lr.slack, 0.0);
  for (double p : {1.5, 2.0, 4.0}) {
    const auto pr = mvh::power_harnack_check(model, fl, g, gt, gauss2, p, 1.0, prm, RngPolicy(3));
    EXPECT_TRUE(pr.pass) << p;
    EXPECT_TRUE(pr.identities_hold) << p;
  }
  EXPECT_THROW(mvh::power_harnack_check(model, fl, g, gt, gauss2, 1.0, 1.0, prm, RngPolicy(3)), std::invalid_argument);
  EXPECT_THROW(mvh::log_harnack_check(model, fl, g, gt, [](const mvh::SplitState&) { return 0.0; }, 1.0, prm, RngPolicy(3)), std::domain_error);
}

TEST(HarnackCheck, BoundedDriftMultiAtom) {
  const auto model = testing_models::bounded_drift();
  const auto g = EmpiricalMeasure::uniform(1, 1, mat({{0, 0}, {0.5, -0.5}}));
  const auto gt = EmpiricalMeasure::uniform(1, 1, mat({{0.25, 0}, {0.75, -0.5}}));
  const auto prm = small_params();
  const auto fl = mvh::harnack_flows(model, g, gt, 0.5, prm, RngPolicy(4));
  const auto lr = mvh::log_harnack_check(model, fl, g, gt, gauss2, 0.5, prm, RngPolicy(4));
  EXPECT_EQ(lr.pairs.size(), 2u);
  EXPECT_TRUE(lr.pass);
  EXPECT_TRUE(lr.identities_hold);
  EXPECT_FALSE(lr.degenerate);
}

TEST(Histogram, IdenticalAndDisjoint) {
  const auto a = EmpiricalMeasure::uniform(1, 1, mat({{0, 0}, {1, 1}}));
  const auto b = EmpiricalMeasure::uniform(1, 1, mat({{5, 5}, {6, 6}}));
  EXPECT_EQ(mvh::histogram_tv(a, a, mvh::bounding_box(a, a, 4)).tv, 0.0);
  EXPECT_EQ(mvh::histogram_tv(a, b, mvh::bounding_box(a, b, 4)).tv, 2.0);
  EXPECT_THROW(mvh::bounding_box(a, b, 0), std::invalid_argument);
}

TEST(HistogramProperty, RefinementNeverDecreasesTv) {
  mvh::CounterEngine eng = RngPolicy(5).engine(mvh::Stream::probe, 0);
  for (int trial = 0; trial < 50; ++trial) {
    mvh::Matrix x(40, 2), y(30, 2);
    for (int i = 0; i < 40; ++i) x.row(i) << eng.normal(), eng.normal();
    for (int i = 0; i < 30; ++i) y.row(i) << 0.5 + eng.normal(), eng.normal();
    const auto a = EmpiricalMeasure::uniform(1, 1, x), b = EmpiricalMeasure::uniform(1, 1, y);
    double prev = 0.0;
    for (std::size_t bins : {1u, 2u, 4u, 8u, 16u}) {
      const double tv = mvh::histogram_tv(a, b, mvh::bounding_box(a, b, bins)).tv;
      EXPECT_GE(tv, prev);
      EXPECT_LE(tv, 2.0);
      prev = tv;
    }
  }
}

TEST(TvEntropy, ZeroDriftPasses) {
  const auto model = testing_models::zero_drift();
  const auto g = EmpiricalMeasure::dirac(state(0, 0)), gt = EmpiricalMeasure::dirac(state(0.25, 0.1));
  auto prm = small_params();
  prm.n_particles = 2000;
  const auto r = mvh::tv_entropy_check(model, g, gt, 1.0, 8, prm, RngPolicy(6));
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.entropy_upper.value, 0.0);
}

TEST(EntropySweep, ZeroDriftCubicBlowUp) {
  const auto model = testing_models::zero_drift();
  const auto x = state(0, 0), y = state(1, 0);
  const auto fl = MeasureFlow::constant(EmpiricalMeasure::dirac(x), {0.0, 1.0});
  const auto s = mvh::entropy_sweep(model, fl, fl, x, y, {0.1, 0.2, 0.5, 1.0}, 50, 0.01, RngPolicy(7));
  for (std::size_t i = 0; i < s.times.size(); ++i) EXPECT_NEAR(s.sup_int_eta_sq[i], 12.0 / std::pow(s.times[i], 3), 1e-6 * s.sup_int_eta_sq[i]);
  EXPECT_NEAR(s.sup_fit.slope, -3.0, 1e-9);
  EXPECT_NEAR(s.mean_fit.slope, -3.0, 1e-9);
}

TEST(Stability, ZeroDriftRatioIsOne) {
  const auto model = testing_models::zero_drift();
  const auto g = EmpiricalMeasure::dirac(state(0, 0)), gt = EmpiricalMeasure::dirac(state(1, 0));
  auto prm = small_params();
  prm.n_particles = 32;
  const auto tab = mvh::stability_study(model, g, gt, {0.25, 0.5, 1.0}, prm, RngPolicy(8));
  EXPECT_DOUBLE_EQ(tab.w2_initial, 1.0);
  for (const auto& r : tab.rows) EXPECT_NEAR(r.ratio_w2, 1.0, 1e-9);
  EXPECT_NEAR(tab.sup_ratio_w2, 1.0, 1e-9);
  EXPECT_THROW(mvh::stability_study(model, g, gt, {}, prm, RngPolicy(8)), std::invalid_argument);
}

TEST(Stability, ShapeFormula) {
  const auto a = mvh::DiniModulus::power(0.5);
  for (double t : {0.01, 0.3, 1.0}) EXPECT_NEAR(mvh::stability_shape(t, 0.75, a), std::pow(t, -0.25) + std::pow(t, -0.375), 1e-12);
}

TEST(ConcaveHolder, HoldsOnRandomSamples) {
  mvh::CounterEngine eng = RngPolicy(9).engine(mvh::Stream::probe, 0);
  const mvh::DiniModulus mods[] = {mvh::DiniModulus::power(0.5), mvh::DiniModulus::log_power(1.5), mvh::DiniModulus::custom({0, 0.5, 1}, {0, 0.9, 1})};
  for (const auto& a : mods)
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> xi(20), eta(20);
      for (std::size_t i = 0; i < 20; ++i) {
        xi[i] = 5.0 * eng.uniform();
        eta[i] = std::abs(eng.normal());
      }
      for (double p : {1.0, 1.5, 3.0}) EXPECT_TRUE(mvh::concave_holder_check(a, xi, eta, p).holds);
    }
  EXPECT_THROW(mvh::concave_holder_check(mods[0], {1.0}, {-1.0}, 2.0), std::invalid_argument);
}
