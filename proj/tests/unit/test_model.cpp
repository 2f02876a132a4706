#include <gtest/gtest.h>

#include <mvh/model.hpp>

#include "../support/models.hpp"

using mvh::EmpiricalMeasure;
using mvh::HamiltonianModel;
using testing_models::mat;
using testing_models::state;
using testing_models::vec;

TEST(DriftEval, Examples) {
  const auto zd = testing_models::zero_drift();
  const auto g = EmpiricalMeasure::dirac(state(2, 0));
  EXPECT_EQ(zd.drift_eval(0.5, state(3, -1), g), vec({0}));

  const HamiltonianModel damp(mat({{1.0}}), mvh::SigmaSchedule(mat({{1.0}})), mvh::LinearMeanField{mat({{0.0}}), mat({{-1.0}}), mat({{0.0, 0.0}})},
                              1.0, 1.0, mvh::DiniModulus::power(1.0), 1.0);
  EXPECT_DOUBLE_EQ(damp.drift_eval(0.0, state(7, 0.3), g)(0), -0.3);

  const HamiltonianModel shift(mat({{1.0}}), mvh::SigmaSchedule(mat({{1.0}})), mvh::LinearMeanField{mat({{0.0}}), mat({{-1.0}}), mat({{1.0, 0.0}})},
                               2.0, 1.0, mvh::DiniModulus::power(1.0), 1.0);
  EXPECT_DOUBLE_EQ(shift.drift_eval(0.0, state(7, 0.3), g)(0), -0.3 + 2.0);
}

TEST(DriftEval, LinearFormula) {
  const auto lm = testing_models::linear_mean_field();
  const EmpiricalMeasure g = EmpiricalMeasure::uniform(1, 1, mat({{1, 2}, {3, -4}}));
  const auto p = testing_models::lmf_params();
  const double expect = p.A1(0, 0) * 0.5 + p.A2(0, 0) * -1.5 + p.A3(0, 0) * 2.0 + p.A3(0, 1) * -1.0;
  EXPECT_NEAR(lm.drift_eval(0.2, state(0.5, -1.5), g)(0), expect, 1e-15);
}

TEST(DriftEval, Errors) {
  const auto zd = testing_models::zero_drift();
  const auto g = EmpiricalMeasure::dirac(state(0, 0));
  EXPECT_THROW(zd.drift_eval(1.5, state(0, 0), g), std::domain_error);
  EXPECT_THROW(zd.drift_eval(0.5, mvh::SplitState(vec({0, 0}), vec({0})), g), std::invalid_argument);
}

TEST(ModelConstruction, RejectsBadParameters) {
  auto make = [](double beta, double kb, double T, mvh::Matrix sigma) {
    return HamiltonianModel(mat({{1.0}}), mvh::SigmaSchedule(sigma), mvh::ZeroDrift{}, kb, beta, mvh::DiniModulus::power(0.5), T);
  };
  EXPECT_THROW(make(0.6, 1, 1, mat({{1}})), std::invalid_argument);
  EXPECT_THROW(make(1.1, 1, 1, mat({{1}})), std::invalid_argument);
  EXPECT_THROW(make(0.75, 0, 1, mat({{1}})), std::invalid_argument);
  EXPECT_THROW(make(0.75, 1, 0, mat({{1}})), std::invalid_argument);
  EXPECT_THROW(make(0.75, 1, 1, mat({{1, 0}, {0, 1}})), std::invalid_argument);
  EXPECT_THROW(HamiltonianModel(mat({{1.0}}), mvh::SigmaSchedule(mat({{1.0}})), mvh::LinearMeanField{mat({{1.0, 2.0}}), mat({{1.0}}), mat({{0, 0}})},
                                1, 0.75, mvh::DiniModulus::power(0.5), 1),
               std::invalid_argument);
  EXPECT_THROW(mvh::SigmaSchedule(mat({{1.0}}), 1.0), std::invalid_argument);
}

TEST(ValidateAssumptions, ZeroDriftPasses) {
  const auto rep = mvh::validate_assumptions(testing_models::zero_drift(), {});
  EXPECT_TRUE(rep.pass());
  EXPECT_EQ(rep.get("grad_x_norm").value, 0.0);
  EXPECT_EQ(rep.get("measure_lipschitz_ratio").value, 0.0);
}

TEST(ValidateAssumptions, LinearRatiosAreOperatorNorms) {
  const HamiltonianModel lm(mat({{1.0}}), mvh::SigmaSchedule(mat({{0.5}})), mvh::LinearMeanField{mat({{-0.6}}), mat({{-0.8}}), mat({{0.05, 0.05}})}, 2.0,
                            0.75, mvh::DiniModulus::power(0.5), 1.0);
  const auto rep = mvh::validate_assumptions(lm, {});
  EXPECT_TRUE(rep.pass());
  EXPECT_NEAR(rep.get("grad_x_norm").value, 1.0, 1e-6);
  EXPECT_LE(rep.get("grad_analytic_vs_fd").value, 1e-6);
}

TEST(ValidateAssumptions, SingularSigmaFails) {
  const HamiltonianModel bad(mat({{1.0}}), mvh::SigmaSchedule(mat({{0.0}})), mvh::ZeroDrift{}, 1.0, 0.75, mvh::DiniModulus::power(0.5), 1.0);
  const auto rep = mvh::validate_assumptions(bad, {});
  EXPECT_FALSE(rep.pass());
  EXPECT_FALSE(rep.get("sigma_min_singular").pass);
  EXPECT_EQ(rep.get("sigma_min_singular").value, 0.0);
}

TEST(ValidateAssumptions, LipschitzBudgetExceededFails) {
  const HamiltonianModel lm(mat({{1.0}}), mvh::SigmaSchedule(mat({{1.0}})), mvh::LinearMeanField{mat({{-3.0}}), mat({{0.0}}), mat({{0.0, 0.0}})}, 1.0,
                            0.75, mvh::DiniModulus::power(0.5), 1.0);
  EXPECT_FALSE(mvh::validate_assumptions(lm, {}).get("grad_x_norm").pass);
}

TEST(ValidateAssumptions, SingularMMtFails) {
  const HamiltonianModel wide(mat({{1.0}, {1.0}}), mvh::SigmaSchedule(mat({{1.0}})), mvh::ZeroDrift{}, 1.0, 0.75, mvh::DiniModulus::power(0.5), 1.0);
  EXPECT_FALSE(mvh::validate_assumptions(wide, {}).get("MMt_min_singular").pass);
}

TEST(ValidateAssumptions, ProbeSizesChecked) {
  mvh::AssumptionProbe p;
  p.n_x = 4;
  EXPECT_THROW(mvh::validate_assumptions(testing_models::zero_drift(), p), std::invalid_argument);
}

TEST(ModelProperty, LinearJacobianIsExact) {
  const auto lm = testing_models::linear_mean_field();
  const auto s = lm.summarize(EmpiricalMeasure::dirac(state(0.3, 0.1)));
  for (double a : {-2.0, 0.0, 5.0}) {
    const mvh::Matrix J = lm.jacobian_fd(vec({a, -a / 3}), s);
    EXPECT_NEAR(J(0, 0), -1.0, 1e-6);
    EXPECT_NEAR(J(0, 1), -0.5, 1e-6);
  }
}

TEST(ModelProperty, BoundedDriftRespectsBound) {
  const auto bm = testing_models::bounded_drift();
  const double bound = testing_models::bounded_params().bound();
  mvh::CounterEngine eng = mvh::RngPolicy(3).engine(mvh::Stream::probe, 0);
  for (int i = 0; i < 200; ++i) {
    mvh::Matrix atoms(5, 2);
    for (int j = 0; j < 5; ++j) atoms.row(j) << 10 * eng.normal(), 10 * eng.normal();
    const auto g = EmpiricalMeasure::uniform(1, 1, atoms);
    EXPECT_LE(bm.drift_eval(0.5, state(20 * eng.normal(), 20 * eng.normal()), g).norm(), bound + 1e-12);
  }
  EXPECT_TRUE(mvh::validate_assumptions(bm, {}).pass());
}

TEST(ModelProperty, AnalyticJacobianMatchesFiniteDifference) {
  const auto bm = testing_models::bounded_drift();
  const auto g = EmpiricalMeasure::uniform(1, 1, mat({{0.2, -0.1}, {1.0, 0.5}, {-0.7, 0.3}}));
  const auto s = bm.summarize(g);
  for (const auto& x : {vec({0.0, 0.0}), vec({1.3, -0.4}), vec({-2.0, 2.5})}) EXPECT_LE((bm.jacobian(x, s) - bm.jacobian_fd(x, s)).norm(), 1e-7);
}

TEST(SigmaSchedule, PiecewiseConstantLookup) {
  const mvh::SigmaSchedule s({0.0, 0.5}, {mat({{1.0}}), mat({{2.0}})});
  EXPECT_EQ(s.at(0.0)(0, 0), 1.0);
  EXPECT_EQ(s.at(0.49)(0, 0), 1.0);
  EXPECT_EQ(s.at(0.5)(0, 0), 2.0);
  EXPECT_EQ(s.inverse_at(0.9)(0, 0), 0.5);
}
