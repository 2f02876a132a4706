#pragma once

#include "state.hpp"

#include <utility>

namespace mvh {

// Cached M, P = M^T (M M^T)^{-1} and P M for a terminal time t.
class ControlEval {
 public:
  ControlEval(const Matrix& M, double t) : M_(M), t_(t) {
    if (!(t > 0) || !std::isfinite(t)) throw std::domain_error("control needs t > 0");
    const Matrix MMt = M * M.transpose();
    const double smin = min_singular_value(MMt);
    if (!(smin > 1e-12 * std::max(1.0, spectral_norm(MMt)))) throw std::domain_error("M M^T is singular");
    P_ = M.transpose() * MMt.inverse();
    PM_ = P_ * M;
  }
  const Matrix& M() const { return M_; }
  const Matrix& pseudo() const { return P_; }
  const Matrix& PM() const { return PM_; }
  double t() const { return t_; }
  int m() const { return static_cast<int>(M_.rows()); }
  int d() const { return static_cast<int>(M_.cols()); }

 private:
  Matrix M_, P_, PM_;
  double t_;
};

// The control for a fixed direction h, with the h-dependent products cached.
//   gamma_s  = [(t-s)/t - 3s(t-s)/t^2 PM] h2 - 6s(t-s)/t^3 P h1
//   gamma'_s = [-1/t - 3(t-2s)/t^2 PM] h2 - 6(t-2s)/t^3 P h1
//   gamma''  = 6/t^2 PM h2 + 12/t^3 P h1
class ControlPath {
 public:
  ControlPath(const ControlEval& c, const SplitState& h) : t_(c.t()), m_(c.m()), d_(c.d()) {
    if (h.m() != m_ || h.d() != d_) throw std::invalid_argument("control direction dimension mismatch");
    h1_ = h.first();
    h2_ = h.second();
    Ph1_ = c.pseudo() * h1_;
    PMh2_ = c.PM() * h2_;
    Mh2_ = c.M() * h2_;
    MPh1_ = c.M() * Ph1_;
    MPMh2_ = c.M() * PMh2_;
    const double t2 = t_ * t_, t3 = t2 * t_;
    gpp_ = (6.0 / t2) * PMh2_ + (12.0 / t3) * Ph1_;
  }

  double t() const { return t_; }
  int m() const { return m_; }
  int d() const { return d_; }

  void gamma(double s, double* out) const {
    const double t = t_;
    const double a = (t - s) / t, b = 3.0 * s * (t - s) / (t * t), c = 6.0 * s * (t - s) / (t * t * t);
    for (int i = 0; i < d_; ++i) out[i] = a * h2_(i) - b * PMh2_(i) - c * Ph1_(i);
  }
  void gamma_prime(double s, double* out) const {
    const double t = t_;
    const double b = 3.0 * (t - 2.0 * s) / (t * t), c = 6.0 * (t - 2.0 * s) / (t * t * t);
    for (int i = 0; i < d_; ++i) out[i] = -h2_(i) / t - b * PMh2_(i) - c * Ph1_(i);
  }
  const Vector& gamma_second() const { return gpp_; }

  // (h1 + int_0^s M gamma_u du, gamma_s); both components are exactly zero for s >= t.
  void shift(double s, double* out) const {
    if (s >= t_) {
      for (int i = 0; i < m_ + d_; ++i) out[i] = 0.0;
      return;
    }
    const double tau = s / t_, r = 1.0 - tau;
    const double a = r * r * (1.0 + 2.0 * tau), b = t_ * tau * r * r;
    for (int i = 0; i < m_; ++i) out[i] = a * h1_(i) + b * Mh2_(i);
    gamma(s, out + m_);
  }

  // int_0^s M gamma_u du from the polynomial antiderivative, without using M P = I.
  Vector integral_M_gamma(double s) const {
    const double tau = s / t_;
    const double ca = s - s * s / (2.0 * t_);
    const double cb = t_ * (1.5 * tau * tau - tau * tau * tau);
    const double cc = 3.0 * tau * tau - 2.0 * tau * tau * tau;
    return ca * Mh2_ - cb * MPMh2_ - cc * MPh1_;
  }

  Vector gamma(double s) const {
    Vector v(d_);
    gamma(s, v.data());
    return v;
  }
  Vector gamma_prime(double s) const {
    Vector v(d_);
    gamma_prime(s, v.data());
    return v;
  }
  Vector shift(double s) const {
    Vector v(m_ + d_);
    shift(s, v.data());
    return v;
  }

 private:
  double t_;
  int m_, d_;
  Vector h1_, h2_, Ph1_, PMh2_, Mh2_, MPh1_, MPMh2_, gpp_;
};

inline std::pair<Vector, Vector> control_gamma(const Matrix& M, double t, double s, const SplitState& h) {
  if (!(s >= 0 && s <= t)) throw std::domain_error("control needs 0 <= s <= t");
  const ControlEval c(M, t);
  const ControlPath p(c, h);
  return {p.gamma(s), p.gamma_prime(s)};
}

}  // namespace mvh
