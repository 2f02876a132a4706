#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvh {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised when a simulated state stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error("divergence at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// Mean about the first sample: equal samples give their common value exactly.
inline double shifted_mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  const double v0 = v[0];
  double s = 0.0;
  for (double x : v) s += x - v0;
  return v0 + s / static_cast<double>(v.size());
}

inline double weighted_mean(std::span<const double> v, std::span<const double> w) {
  if (v.empty() || v.size() != w.size()) throw std::invalid_argument("weighted mean size mismatch");
  const double v0 = v[0];
  double s = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += w[i] * (v[i] - v0);
    sw += w[i];
  }
  return v0 + s / sw;
}

inline Estimate mean_estimate(std::span<const double> v) {
  Estimate e;
  e.value = shifted_mean(v);
  const std::size_t n = v.size();
  if (n < 2) return e;
  double ss = 0.0;
  for (double x : v) ss += (x - e.value) * (x - e.value);
  e.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  return e;
}

// Sample covariance of (a, b) with a delta-method standard error.
inline Estimate covariance_estimate(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("covariance needs two equal samples of size >= 2");
  const double ma = shifted_mean(a), mb = shifted_mean(b);
  const std::size_t n = a.size();
  std::vector<double> prod(n);
  for (std::size_t i = 0; i < n; ++i) prod[i] = (a[i] - ma) * (b[i] - mb);
  Estimate e = mean_estimate(prod);
  e.value *= static_cast<double>(n) / static_cast<double>(n - 1);
  return e;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("line fit needs >= 2 points");
  const double mx = shifted_mean(x), my = shifted_mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

inline LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  return fit_line(lx, ly);
}

// y ~ c * s through the origin; r2 against the centered total sum of squares.
inline LineFit fit_through_origin(std::span<const double> s, std::span<const double> y) {
  if (s.size() != y.size() || s.empty()) throw std::invalid_argument("fit needs points");
  double ss = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ss += s[i] * s[i];
    sy += s[i] * y[i];
  }
  LineFit f;
  f.slope = ss > 0 ? sy / ss : 0.0;
  const double my = shifted_mean(y);
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    res += (y[i] - f.slope * s[i]) * (y[i] - f.slope * s[i]);
    tot += (y[i] - my) * (y[i] - my);
  }
  f.r2 = tot > 0 ? 1.0 - res / tot : (res == 0 ? 1.0 : 0.0);
  return f;
}

inline bool all_finite(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

inline double norm2(const double* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i] * p[i];
  return std::sqrt(s);
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

inline double min_singular_value(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

}  // namespace mvh
