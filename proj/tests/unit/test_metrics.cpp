#include <gtest/gtest.h>

#include <mvh/metrics.hpp>
#include <mvh/rng.hpp>

#include "../support/models.hpp"
#include "../support/oracles.hpp"

#include <cmath>
#include <sstream>

using mvh::EmpiricalMeasure;
using mvh::SplitState;
using testing_models::mat;
using testing_models::state;
using testing_models::vec;

namespace {

EmpiricalMeasure two_point(double w0, double z = 1.0) { return EmpiricalMeasure(1, 1, mat({{0, 0}, {z, 0}}), vec({w0, 1 - w0})); }

EmpiricalMeasure random_uniform(mvh::CounterEngine& eng, int n, int m = 1, int d = 1) {
  mvh::Matrix a(n, m + d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m + d; ++j) a(i, j) = 4.0 * eng.uniform() - 2.0;
  return EmpiricalMeasure::uniform(m, d, a);
}

EmpiricalMeasure random_weighted(mvh::CounterEngine& eng, int n) {
  mvh::Matrix a(n, 2);
  mvh::Vector w(n);
  for (int i = 0; i < n; ++i) {
    a(i, 0) = 4.0 * eng.uniform() - 2.0;
    a(i, 1) = 4.0 * eng.uniform() - 2.0;
    w(i) = 0.05 + eng.uniform();
  }
  return EmpiricalMeasure(1, 1, a, w / w.sum());
}

}  // namespace

TEST(Rho, Examples) {
  EXPECT_DOUBLE_EQ(mvh::rho_beta_alpha(state(0, 0), state(3, 4), 1.0, mvh::DiniModulus::power(1.0)), 7.0);
  EXPECT_DOUBLE_EQ(mvh::rho_beta_alpha(state(0, 0), state(1, 1), 0.75, mvh::DiniModulus::power(0.5)), 2.0);
  EXPECT_EQ(mvh::rho_beta_alpha(state(0.3, -2), state(0.3, -2), 0.75, mvh::DiniModulus::power(0.5)), 0.0);
  EXPECT_THROW(mvh::rho_beta_alpha(state(0, 0), SplitState(vec({0, 0}), vec({0})), 0.75, mvh::DiniModulus::power(0.5)), std::invalid_argument);
}

TEST(Rho, TriangleAndSymmetryRandom) {
  mvh::CounterEngine eng = mvh::RngPolicy(11).engine(mvh::Stream::probe, 0);
  const auto a = mvh::DiniModulus::power(0.5);
  auto pt = [&] { return SplitState(vec({3 * eng.normal(), 3 * eng.normal()}), vec({3 * eng.normal()})); };
  for (int i = 0; i < 1000; ++i) {
    const SplitState x = pt(), y = pt(), z = pt();
    const double xy = mvh::rho_beta_alpha(x, y, 0.8, a);
    EXPECT_EQ(xy, mvh::rho_beta_alpha(y, x, 0.8, a));
    EXPECT_LE(mvh::rho_beta_alpha(x, z, 0.8, a), xy + mvh::rho_beta_alpha(y, z, 0.8, a) + 1e-12);
  }
}

TEST(Wasserstein, Examples) {
  const auto dx = EmpiricalMeasure::dirac(state(1, 2)), dy = EmpiricalMeasure::dirac(state(4, 6));
  EXPECT_NEAR(mvh::wasserstein(dx, dy, mvh::w_cost(2)).value, 5.0, 1e-15);
  const EmpiricalMeasure mu = EmpiricalMeasure::uniform(1, 1, mat({{0, 0}, {2, 0}}));
  EXPECT_NEAR(mvh::wasserstein(mu, EmpiricalMeasure::dirac(state(1, 0)), mvh::w_cost(2)).value, 1.0, 1e-15);
  const auto a = mvh::DiniModulus::power(0.5);
  EXPECT_NEAR(mvh::wasserstein(dx, dy, mvh::rho_cost(0.75, a)).value, mvh::rho_beta_alpha(state(1, 2), state(4, 6), 0.75, a), 1e-15);
}

TEST(Wasserstein, CapExceeded) {
  mvh::CounterEngine eng = mvh::RngPolicy(1).engine(mvh::Stream::probe, 0);
  const auto a = random_uniform(eng, 6), b = random_uniform(eng, 6);
  EXPECT_THROW(mvh::wasserstein(a, b, mvh::w_cost(1), 10), std::length_error);
  EXPECT_NO_THROW(mvh::wasserstein(a, b, mvh::w_cost(1), 12));
}

TEST(Wasserstein, PlanMarginalsAndDualCertificate) {
  mvh::CounterEngine eng = mvh::RngPolicy(12).engine(mvh::Stream::probe, 0);
  for (int rep = 0; rep < 40; ++rep) {
    const auto mu = random_weighted(eng, 3 + static_cast<int>(eng.below(20)));
    const auto nu = random_weighted(eng, 3 + static_cast<int>(eng.below(20)));
    for (const auto& cost : {mvh::w_cost(1), mvh::w_cost(2), mvh::rho_cost(0.75, mvh::DiniModulus::power(0.5))}) {
      const auto r = mvh::wasserstein(mu, nu, cost);
      EXPECT_LE(r.plan.marginal_error(mu.weights(), nu.weights()), 1e-9);
      EXPECT_GE(r.plan.mass.minCoeff(), -1e-15);
      EXPECT_NEAR(r.plan.mass.sum(), 1.0, 1e-12);
      const mvh::Matrix c = mvh::cost_matrix(mu, nu, cost);
      const double primal = (r.plan.mass.array() * c.array()).sum();
      const double dual = mu.weights().dot(r.u) + nu.weights().dot(r.v);
      double infeas = 0.0;
      for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j) infeas = std::max(infeas, r.u(i) + r.v(j) - c(i, j));
      EXPECT_LE(infeas, 1e-9);
      EXPECT_LE(primal - dual, 1e-8);
      EXPECT_NEAR(primal, r.optimal_cost, 1e-9 * (1 + primal));
    }
  }
}

TEST(Wasserstein, MatchesPermutationOracle) {
  mvh::CounterEngine eng = mvh::RngPolicy(13).engine(mvh::Stream::probe, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 2 + static_cast<int>(eng.below(6));
    const auto mu = random_uniform(eng, n, 2, 1), nu = random_uniform(eng, n, 2, 1);
    for (const auto& cost : {mvh::w_cost(1), mvh::w_cost(2), mvh::rho_cost(0.9, mvh::DiniModulus::log_power(1.0))}) {
      const double oracle = oracle::assignment_min(mvh::cost_matrix(mu, nu, cost));
      EXPECT_NEAR(mvh::wasserstein(mu, nu, cost).optimal_cost, oracle, 1e-9);
      EXPECT_NEAR(mvh::wasserstein_bruteforce(mu, nu, cost), mvh::cost_to_value(cost, oracle), 1e-9);
    }
  }
}

TEST(WassersteinBruteforce, Examples) {
  const auto a = EmpiricalMeasure::dirac(state(0, 0)), b = EmpiricalMeasure::dirac(state(3, 0));
  EXPECT_DOUBLE_EQ(mvh::wasserstein_bruteforce(a, b, mvh::w_cost(1)), 3.0);
  const auto mu = EmpiricalMeasure::uniform(1, 1, mat({{0, 0}, {2, 0}})), nu = EmpiricalMeasure::uniform(1, 1, mat({{1, 0}, {3, 0}}));
  EXPECT_DOUBLE_EQ(mvh::wasserstein_bruteforce(mu, nu, mvh::w_cost(1)), 1.0);
  // matched order: total displacement 2, mass 1/2 per atom
  EXPECT_THROW(mvh::wasserstein_bruteforce(two_point(0.3), two_point(0.5), mvh::w_cost(1)), std::invalid_argument);
}

TEST(Wasserstein, MetricAxiomsRandomTriples) {
  mvh::CounterEngine eng = mvh::RngPolicy(14).engine(mvh::Stream::probe, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const auto a = random_weighted(eng, 2 + static_cast<int>(eng.below(6)));
    const auto b = random_weighted(eng, 2 + static_cast<int>(eng.below(6)));
    const auto c = random_weighted(eng, 2 + static_cast<int>(eng.below(6)));
    for (const auto& cost : {mvh::w_cost(1), mvh::w_cost(2), mvh::rho_cost(0.75, mvh::DiniModulus::power(0.5))}) {
      const double ab = mvh::wasserstein(a, b, cost).value, ba = mvh::wasserstein(b, a, cost).value;
      EXPECT_NEAR(ab, ba, 1e-12);
      EXPECT_LE(mvh::wasserstein(a, c, cost).value, ab + mvh::wasserstein(b, c, cost).value + 1e-9);
      EXPECT_NEAR(mvh::wasserstein(a, a, cost).value, 0.0, 1e-12);
    }
  }
}

TEST(Variation, Examples) {
  const auto mu = two_point(0.5), nu = two_point(0.25);
  EXPECT_EQ(mvh::total_variation(mu, mu), 0.0);
  EXPECT_DOUBLE_EQ(mvh::total_variation(mu, nu), 0.5);
  EXPECT_DOUBLE_EQ(mvh::total_variation(EmpiricalMeasure::dirac(state(0, 0)), EmpiricalMeasure::dirac(state(0, 1))), 2.0);
  EXPECT_EQ(mvh::weighted_variation(mu, mu, 1), 0.0);
  EXPECT_DOUBLE_EQ(mvh::weighted_variation(EmpiricalMeasure::dirac(state(1, 0)), EmpiricalMeasure::dirac(state(0, 1)), 1), 4.0);
  // |1/2-1/4|(1+0) + |1/2-3/4|(1+1)
  EXPECT_DOUBLE_EQ(mvh::weighted_variation(mu, nu, 1), 0.75);
}

TEST(Entropy, Examples) {
  const auto mu = two_point(0.5), nu = two_point(0.25);
  EXPECT_EQ(mvh::relative_entropy(mu, mu), 0.0);
  EXPECT_NEAR(mvh::relative_entropy(nu, mu), 0.13081, 1e-5);
  EXPECT_NEAR(mvh::relative_entropy(nu, mu), 0.25 * std::log(0.5) + 0.75 * std::log(1.5), 1e-15);
  const EmpiricalMeasure outside(1, 1, mat({{0, 0}, {5, 0}}), vec({0.5, 0.5}));
  EXPECT_TRUE(std::isinf(mvh::relative_entropy(outside, mu)));
}

TEST(Pinsker, Examples) {
  const auto mu = two_point(0.5), nu = two_point(0.25);
  const auto same = mvh::pinsker_check(mu, mu);
  EXPECT_TRUE(same.holds);
  EXPECT_EQ(same.tv, 0.0);
  const auto r = mvh::pinsker_check(mu, nu);
  EXPECT_TRUE(r.holds);
  EXPECT_DOUBLE_EQ(r.tv * r.tv, 0.25);
  EXPECT_NEAR(2 * r.ent, 0.26162, 1e-5);
  const auto dis = mvh::pinsker_check(EmpiricalMeasure::dirac(state(0, 0)), EmpiricalMeasure::dirac(state(1, 0)));
  EXPECT_TRUE(dis.holds);
  EXPECT_DOUBLE_EQ(dis.tv, 2.0);
  EXPECT_TRUE(std::isinf(dis.ent));
}

TEST(Variation, PropertiesOnSharedSupport) {
  mvh::CounterEngine eng = mvh::RngPolicy(15).engine(mvh::Stream::probe, 0);
  const auto alpha = mvh::DiniModulus::power(0.5);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = 2 + static_cast<int>(eng.below(6));
    mvh::Matrix a(n, 2);
    mvh::Vector w1(n), w2(n);
    std::vector<double> p(n), q(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = 3 * eng.normal();
      a(i, 1) = 3 * eng.normal();
      w1(i) = 0.01 + eng.uniform();
      w2(i) = 0.01 + eng.uniform();
    }
    w1 /= w1.sum();
    w2 /= w2.sum();
    const EmpiricalMeasure mu(1, 1, a, w1), nu(1, 1, a, w2);
    double tv = 0.0;
    for (int i = 0; i < n; ++i) {
      tv += std::abs(w1(i) - w2(i));
      p[i] = w1(i);
      q[i] = w2(i);
    }
    EXPECT_NEAR(mvh::total_variation(mu, nu), tv, 1e-14);
    EXPECT_NEAR(mvh::relative_entropy(nu, mu), oracle::kl(q, p), 1e-12);
    EXPECT_LE(mvh::total_variation(mu, nu), mvh::weighted_variation(mu, nu, 2.0) + 1e-15);
    const double wba = mvh::wasserstein(mu, nu, mvh::rho_cost(0.75, alpha)).value;
    EXPECT_LE(0.5 / (alpha.eval(1.0) + 1.0) * wba, mvh::weighted_variation(mu, nu, 1.0) + 1e-12);
    EXPECT_TRUE(mvh::pinsker_check(mu, nu).holds);
  }
}

TEST(MeasureCsv, RoundTripIsExact) {
  mvh::CounterEngine eng = mvh::RngPolicy(16).engine(mvh::Stream::probe, 0);
  const auto mu = random_weighted(eng, 7);
  std::ostringstream os;
  mvh::write_measure_csv(os, mu);
  const auto p = std::filesystem::temp_directory_path() / "mvh_measure_roundtrip.csv";
  mvh::write_measure_csv(p.string(), mu);
  const auto back = mvh::read_measure_csv(p.string());
  EXPECT_EQ(back.atoms(), mu.atoms());
  EXPECT_EQ(back.m(), 1);
  EXPECT_TRUE(os.str().rfind("weight,x1_1,x2_1\n", 0) == 0);
  std::filesystem::remove(p);
}

TEST(EmpiricalMeasureType, RejectsBadWeights) {
  EXPECT_THROW(EmpiricalMeasure(1, 1, mat({{0, 0}, {1, 0}}), vec({0.5, 0.6})), std::invalid_argument);
  EXPECT_THROW(EmpiricalMeasure(1, 1, mat({{0, 0}, {1, 0}}), vec({1.5, -0.5})), std::invalid_argument);
  EXPECT_THROW(EmpiricalMeasure(1, 1, mat({{0, NAN}}), vec({1.0})), std::invalid_argument);
}
