#pragma once

// Reference computations used only by tests.  Nothing here calls into the
// library's numerical routines.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat expm(const Mat& a) { return a.exp(); }

// Golub-Welsch nodes and weights on [a, b].
struct Rule {
  std::vector<double> x, w;
};

inline Rule gauss_legendre(int n, double a, double b) {
  Mat J = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double k = i;
    J(i, i - 1) = J(i - 1, i) = k / std::sqrt(4.0 * k * k - 1.0);
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  Rule r;
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    r.x.push_back(0.5 * (b - a) * es.eigenvalues()(i) + 0.5 * (b + a));
    r.w.push_back((b - a) * v0 * v0);
  }
  return r;
}

inline Vec integrate(const std::function<Vec(double)>& f, double a, double b, int n = 20) {
  const Rule r = gauss_legendre(n, a, b);
  Vec s = r.w[0] * f(r.x[0]);
  for (int i = 1; i < n; ++i) s += r.w[i] * f(r.x[i]);
  return s;
}

// gamma_s(h) written straight from its definition.
inline Vec control(const Mat& M, double t, double s, const Vec& h1, const Vec& h2) {
  const Mat P = M.transpose() * (M * M.transpose()).llt().solve(Mat::Identity(M.rows(), M.rows()));
  const Mat I = Mat::Identity(M.cols(), M.cols());
  return ((t - s) / t * I - 3.0 * s * (t - s) / (t * t) * P * M) * h2 - 6.0 * s * (t - s) / (t * t * t) * P * h1;
}

// d/ds by a five-point stencil
inline Vec control_derivative(const Mat& M, double t, double s, const Vec& h1, const Vec& h2, double e = 1e-3) {
  auto g = [&](double u) { return control(M, t, u, h1, h2); };
  return (-g(s + 2 * e) + 8.0 * g(s + e) - 8.0 * g(s - e) + g(s - 2 * e)) / (12.0 * e);
}

// Generator of the linear system x1' = M x2, x2' = A1 x1 + A2 x2 (+ A3 mean).
inline Mat generator(const Mat& M, const Mat& A1, const Mat& A2) {
  const auto m = M.rows(), d = M.cols();
  Mat A = Mat::Zero(m + d, m + d);
  A.topRightCorner(m, d) = M;
  A.bottomLeftCorner(d, m) = A1;
  A.bottomRightCorner(d, d) = A2;
  return A;
}

inline Mat mean_generator(const Mat& M, const Mat& A1, const Mat& A2, const Mat& A3) {
  Mat A = generator(M, A1, A2);
  A.bottomRows(M.cols()) += A3;
  return A;
}

// Classical RK4 for y' = A y.
inline std::vector<Vec> rk4(const Mat& A, const Vec& y0, double T, int steps) {
  std::vector<Vec> out{y0};
  const double h = T / steps;
  Vec y = y0;
  for (int k = 0; k < steps; ++k) {
    const Vec k1 = A * y, k2 = A * (y + 0.5 * h * k1), k3 = A * (y + 0.5 * h * k2), k4 = A * (y + h * k3);
    y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    out.push_back(y);
  }
  return out;
}

// Minimum over all permutations of sum_i c(i, p(i)) / n.
inline double assignment_min(const Mat& c) {
  const int n = static_cast<int>(c.rows());
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += c(i, p[i]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best / n;
}

inline double kl(const std::vector<double>& nu, const std::vector<double>& mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i) {
    if (nu[i] == 0) continue;
    if (mu[i] == 0) return std::numeric_limits<double>::infinity();
    s += nu[i] * std::log(nu[i] / mu[i]);
  }
  return s;
}

}  // namespace oracle
