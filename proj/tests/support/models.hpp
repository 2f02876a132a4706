#pragma once

#include <mvh/mvh.hpp>

namespace testing_models {

using mvh::Matrix;
using mvh::Vector;

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) a(i, j++) = v;
    ++i;
  }
  return a;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x(i++) = e;
  return x;
}

inline mvh::SplitState state(double a, double b) { return mvh::SplitState(vec({a}), vec({b})); }

// m = d = 1, M = sigma = 1
inline mvh::HamiltonianModel zero_drift(double T = 1.0, double sigma = 1.0) {
  return mvh::HamiltonianModel(mat({{1.0}}), mvh::SigmaSchedule(mat({{sigma}})), mvh::ZeroDrift{}, 1.0, 0.75, mvh::DiniModulus::power(0.5), T);
}

inline mvh::LinearMeanField lmf_params() { return {mat({{-1.0}}), mat({{-0.5}}), mat({{0.8, 0.6}})}; }

inline mvh::HamiltonianModel linear_mean_field(double T = 1.0, mvh::LinearMeanField p = lmf_params()) {
  return mvh::HamiltonianModel(mat({{1.0}}), mvh::SigmaSchedule(mat({{0.5}})), std::move(p), 2.0, 0.75, mvh::DiniModulus::power(0.5), T);
}

inline mvh::BoundedInteraction bounded_params() {
  return {mat({{0.5, 1.0}}), vec({0.5}), mat({{-1.0, -0.5}}), vec({1.0})};
}

inline mvh::HamiltonianModel bounded_drift(double T = 1.0) {
  return mvh::HamiltonianModel(mat({{1.0}}), mvh::SigmaSchedule(mat({{1.0}})), bounded_params(), 2.0, 0.75, mvh::DiniModulus::power(0.5), T);
}

}  // namespace testing_models
