#pragma once

#include "metrics.hpp"
#include "rng.hpp"

#include <cmath>
#include <string>
#include <variant>
#include <vector>

namespace mvh {

struct ZeroDrift {};

// B(x, g) = A1 x1 + A2 x2 + A3 mean(g)
struct LinearMeanField {
  Matrix A1;  // d x m
  Matrix A2;  // d x d
  Matrix A3;  // d x (m+d)
};

// B_i(x, g) = kernel_amp_i * E_g sin(<w_i, x - y>) + frame_amp_i * tanh(<v_i, x>)
// with w_i, v_i the rows of kernel_freq, frame_freq.  |B_i| <= |kernel_amp_i| + |frame_amp_i|.
struct BoundedInteraction {
  Matrix kernel_freq;  // d x (m+d)
  Vector kernel_amp;   // d
  Matrix frame_freq;   // d x (m+d)
  Vector frame_amp;    // d
  double bound() const { return ((kernel_amp.cwiseAbs() + frame_amp.cwiseAbs()).norm()); }
};

using DriftSpec = std::variant<ZeroDrift, LinearMeanField, BoundedInteraction>;

inline std::string drift_name(const DriftSpec& s) {
  if (std::holds_alternative<ZeroDrift>(s)) return "zero";
  if (std::holds_alternative<LinearMeanField>(s)) return "linear_mean_field";
  return "bounded_interaction";
}

// Everything a drift evaluation needs from the measure argument.
struct MeasureSummary {
  Vector mean;
  Vector cos_feat;  // E cos(<w_i, y>)
  Vector sin_feat;  // E sin(<w_i, y>)
};

// Piecewise-constant d x d schedule; value at t is the entry with the largest start time <= t.
// Optional state modulation sigma_t(x) = (1 + a tanh|x|) sigma_t.
class SigmaSchedule {
 public:
  SigmaSchedule() = default;
  explicit SigmaSchedule(Matrix constant, double state_amplitude = 0.0)
      : SigmaSchedule(std::vector<double>{0.0}, std::vector<Matrix>{std::move(constant)}, state_amplitude) {}
  SigmaSchedule(std::vector<double> times, std::vector<Matrix> values, double state_amplitude = 0.0)
      : times_(std::move(times)), values_(std::move(values)), amp_(state_amplitude) {
    if (times_.empty() || times_.size() != values_.size()) throw std::invalid_argument("sigma schedule needs one matrix per start time");
    if (times_[0] != 0.0) throw std::invalid_argument("sigma schedule must start at t = 0");
    for (std::size_t i = 1; i < times_.size(); ++i)
      if (!(times_[i] > times_[i - 1])) throw std::invalid_argument("sigma schedule times must increase");
    const auto d = values_[0].rows();
    for (const auto& s : values_) {
      if (s.rows() != d || s.cols() != d) throw std::invalid_argument("sigma matrices must be d x d");
      if (!all_finite(s.data(), static_cast<std::size_t>(s.size()))) throw std::invalid_argument("sigma entries must be finite");
    }
    if (!(std::abs(amp_) < 1.0)) throw std::invalid_argument("sigma state amplitude must satisfy |a| < 1");
    invertible_ = true;
    for (const auto& s : values_) {
      const double smin = min_singular_value(s);
      if (!(smin > 1e-12 * std::max(1.0, spectral_norm(s)))) {
        invertible_ = false;
        inverses_.push_back(Matrix::Constant(d, d, std::numeric_limits<double>::quiet_NaN()));
      } else {
        inverses_.push_back(s.inverse());
      }
    }
  }

  int d() const { return static_cast<int>(values_.at(0).rows()); }
  std::size_t index(double t) const {
    std::size_t j = 0;
    while (j + 1 < times_.size() && times_[j + 1] <= t + 1e-12) ++j;
    return j;
  }
  const Matrix& at(double t) const { return values_[index(t)]; }
  const Matrix& inverse_at(double t) const {
    if (!invertible_) throw std::domain_error("sigma is singular");
    return inverses_[index(t)];
  }
  const Matrix& value(std::size_t j) const { return values_[j]; }
  const Matrix& inverse(std::size_t j) const { return inverses_[j]; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Matrix>& values() const { return values_; }
  bool invertible() const { return invertible_; }
  double state_amplitude() const { return amp_; }
  double state_factor(const double* x, int dim) const { return amp_ == 0.0 ? 1.0 : 1.0 + amp_ * std::tanh(norm2(x, static_cast<std::size_t>(dim))); }

 private:
  std::vector<double> times_;
  std::vector<Matrix> values_;
  std::vector<Matrix> inverses_;
  double amp_ = 0.0;
  bool invertible_ = false;
};

class HamiltonianModel {
 public:
  HamiltonianModel(Matrix M, SigmaSchedule sigma, DriftSpec drift, double K_B, double beta, DiniModulus modulus, double T)
      : M_(std::move(M)), sigma_(std::move(sigma)), drift_(std::move(drift)), K_B_(K_B), beta_(beta), alpha_(std::move(modulus)), T_(T) {
    m_ = static_cast<int>(M_.rows());
    d_ = static_cast<int>(M_.cols());
    if (m_ < 1 || d_ < 1) throw std::invalid_argument("model needs m, d >= 1");
    if (sigma_.d() != d_) throw std::invalid_argument("sigma must be d x d with d = cols(M)");
    if (!(beta_ > 2.0 / 3.0 && beta_ <= 1.0)) throw std::invalid_argument("beta must lie in (2/3, 1]");
    if (!(K_B_ > 0)) throw std::invalid_argument("K_B must be positive");
    if (!(T_ > 0)) throw std::invalid_argument("horizon T must be positive");
    if (!all_finite(M_.data(), static_cast<std::size_t>(M_.size()))) throw std::invalid_argument("M must be finite");
    const int n = m_ + d_;
    if (auto* l = std::get_if<LinearMeanField>(&drift_)) {
      if (l->A1.rows() != d_ || l->A1.cols() != m_ || l->A2.rows() != d_ || l->A2.cols() != d_ || l->A3.rows() != d_ || l->A3.cols() != n)
        throw std::invalid_argument("LinearMeanField matrices have the wrong shape");
      // A1 and A2 side by side for the hot loop
      Ax_.resize(d_, n);
      Ax_ << l->A1, l->A2;
    } else if (auto* b = std::get_if<BoundedInteraction>(&drift_)) {
      if (b->kernel_freq.rows() != d_ || b->kernel_freq.cols() != n || b->frame_freq.rows() != d_ || b->frame_freq.cols() != n ||
          b->kernel_amp.size() != d_ || b->frame_amp.size() != d_)
        throw std::invalid_argument("BoundedInteraction parameters have the wrong shape");
    }
  }

  int m() const { return m_; }
  int d() const { return d_; }
  int dim() const { return m_ + d_; }
  const Matrix& M() const { return M_; }
  const SigmaSchedule& sigma() const { return sigma_; }
  const DriftSpec& drift() const { return drift_; }
  double K_B() const { return K_B_; }
  double beta() const { return beta_; }
  const DiniModulus& modulus() const { return alpha_; }
  double T() const { return T_; }
  bool measure_independent() const {
    if (std::holds_alternative<ZeroDrift>(drift_)) return true;
    if (auto* l = std::get_if<LinearMeanField>(&drift_)) return l->A3.isZero(0.0);
    return std::get<BoundedInteraction>(drift_).kernel_amp.isZero(0.0);
  }
  // Use central differences for directional derivatives of B instead of the analytic Jacobian.
  bool fd_jacobian = false;

  MeasureSummary summarize(const EmpiricalMeasure& g) const { return summarize(g.atoms(), g.weights()); }

  MeasureSummary summarize(const Matrix& atoms, const Vector& w) const {
    MeasureSummary s;
    const int n = dim();
    s.mean = Vector::Zero(n);
    for (Eigen::Index i = 0; i < atoms.rows(); ++i)
      for (int j = 0; j < n; ++j) s.mean(j) += w(i) * atoms(i, j);
    if (auto* b = std::get_if<BoundedInteraction>(&drift_)) {
      s.cos_feat = Vector::Zero(d_);
      s.sin_feat = Vector::Zero(d_);
      for (Eigen::Index i = 0; i < atoms.rows(); ++i)
        for (int k = 0; k < d_; ++k) {
          double a = 0.0;
          for (int j = 0; j < n; ++j) a += b->kernel_freq(k, j) * atoms(i, j);
          s.cos_feat(k) += w(i) * std::cos(a);
          s.sin_feat(k) += w(i) * std::sin(a);
        }
    }
    return s;
  }

  // Uniform-weight cloud stored row-major (n rows of dim entries).
  MeasureSummary summarize_cloud(const std::vector<double>& cloud) const {
    const int n = dim();
    const std::size_t count = cloud.size() / static_cast<std::size_t>(n);
    const double w = 1.0 / static_cast<double>(count);
    MeasureSummary s;
    s.mean = Vector::Zero(n);
    for (std::size_t i = 0; i < count; ++i)
      for (int j = 0; j < n; ++j) s.mean(j) += w * cloud[i * n + j];
    if (auto* b = std::get_if<BoundedInteraction>(&drift_)) {
      s.cos_feat = Vector::Zero(d_);
      s.sin_feat = Vector::Zero(d_);
      for (std::size_t i = 0; i < count; ++i)
        for (int k = 0; k < d_; ++k) {
          double a = 0.0;
          for (int j = 0; j < n; ++j) a += b->kernel_freq(k, j) * cloud[i * n + j];
          s.cos_feat(k) += w * std::cos(a);
          s.sin_feat(k) += w * std::sin(a);
        }
    }
    return s;
  }

  void drift_into(const double* x, const MeasureSummary& s, double* out) const {
    const int n = dim();
    if (std::holds_alternative<ZeroDrift>(drift_)) {
      for (int i = 0; i < d_; ++i) out[i] = 0.0;
      return;
    }
    if (auto* l = std::get_if<LinearMeanField>(&drift_)) {
      for (int i = 0; i < d_; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += Ax_(i, j) * x[j];
        for (int j = 0; j < n; ++j) acc += l->A3(i, j) * s.mean(j);
        out[i] = acc;
      }
      return;
    }
    const auto& b = std::get<BoundedInteraction>(drift_);
    for (int i = 0; i < d_; ++i) {
      double wx = 0.0, vx = 0.0;
      for (int j = 0; j < n; ++j) {
        wx += b.kernel_freq(i, j) * x[j];
        vx += b.frame_freq(i, j) * x[j];
      }
      double val = b.frame_amp(i) * std::tanh(vx);
      if (b.kernel_amp(i) != 0.0) val += b.kernel_amp(i) * (std::sin(wx) * s.cos_feat(i) - std::cos(wx) * s.sin_feat(i));
      out[i] = val;
    }
  }

  // out = grad_x B(x, s) v  (d entries), v has dim() entries.
  void jvp_into(const double* x, const MeasureSummary& s, const double* v, double* out) const {
    if (fd_jacobian) {
      jvp_fd_into(x, s, v, out);
      return;
    }
    const int n = dim();
    if (std::holds_alternative<ZeroDrift>(drift_)) {
      for (int i = 0; i < d_; ++i) out[i] = 0.0;
      return;
    }
    if (std::holds_alternative<LinearMeanField>(drift_)) {
      for (int i = 0; i < d_; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += Ax_(i, j) * v[j];
        out[i] = acc;
      }
      return;
    }
    const auto& b = std::get<BoundedInteraction>(drift_);
    for (int i = 0; i < d_; ++i) {
      double wx = 0.0, vx = 0.0, wv = 0.0, fv = 0.0;
      for (int j = 0; j < n; ++j) {
        wx += b.kernel_freq(i, j) * x[j];
        vx += b.frame_freq(i, j) * x[j];
        wv += b.kernel_freq(i, j) * v[j];
        fv += b.frame_freq(i, j) * v[j];
      }
      const double th = std::tanh(vx);
      double val = b.frame_amp(i) * (1.0 - th * th) * fv;
      if (b.kernel_amp(i) != 0.0) val += b.kernel_amp(i) * (std::cos(wx) * s.cos_feat(i) + std::sin(wx) * s.sin_feat(i)) * wv;
      out[i] = val;
    }
  }

  // Central difference with step 1e-5 (1 + |x|) along v.
  void jvp_fd_into(const double* x, const MeasureSummary& s, const double* v, double* out) const {
    const int n = dim();
    double xp[64], xm[64], bp[64], bm[64];
    if (n > 64) throw std::length_error("finite-difference jvp supports dim <= 64");
    const double h = 1e-5 * (1.0 + norm2(x, static_cast<std::size_t>(n)));
    for (int j = 0; j < n; ++j) {
      xp[j] = x[j] + h * v[j];
      xm[j] = x[j] - h * v[j];
    }
    drift_into(xp, s, bp);
    drift_into(xm, s, bm);
    for (int i = 0; i < d_; ++i) out[i] = (bp[i] - bm[i]) / (2.0 * h);
  }

  Matrix jacobian(const Vector& x, const MeasureSummary& s) const {
    Matrix J(d_, dim());
    Vector e = Vector::Zero(dim()), col(d_);
    for (int j = 0; j < dim(); ++j) {
      e(j) = 1.0;
      jvp_into(x.data(), s, e.data(), col.data());
      J.col(j) = col;
      e(j) = 0.0;
    }
    return J;
  }

  Matrix jacobian_fd(const Vector& x, const MeasureSummary& s) const {
    Matrix J(d_, dim());
    Vector e = Vector::Zero(dim()), col(d_);
    for (int j = 0; j < dim(); ++j) {
      e(j) = 1.0;
      jvp_fd_into(x.data(), s, e.data(), col.data());
      J.col(j) = col;
      e(j) = 0.0;
    }
    return J;
  }

  Vector drift_eval(double t, const SplitState& x, const EmpiricalMeasure& g) const {
    if (t < 0 || t > T_ + 1e-12) throw std::domain_error("drift_eval: t outside [0, T]");
    if (x.m() != m_ || x.d() != d_ || g.m() != m_ || g.d() != d_) throw std::invalid_argument("drift_eval: dimension mismatch");
    Vector out(d_);
    drift_into(x.joined().data(), summarize(g), out.data());
    return out;
  }

 private:
  int m_ = 0, d_ = 0;
  Matrix M_;
  SigmaSchedule sigma_;
  DriftSpec drift_;
  double K_B_;
  double beta_;
  DiniModulus alpha_;
  double T_;
  Matrix Ax_;
};

struct AssumptionProbe {
  int n_t = 16;
  int n_x = 16;
  int n_meas = 8;
  double fd_eps = 1e-5;
  std::uint64_t seed = 1;
};

struct AssumptionCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
  std::string note;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const AssumptionCheck& get(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw std::out_of_range("no assumption check " + name);
  }
};

inline AssumptionReport validate_assumptions(const HamiltonianModel& model, const AssumptionProbe& probe) {
  if (probe.n_t < 8 || probe.n_x < 8 || probe.n_meas < 8) throw std::invalid_argument("probe sizes must be >= 8");
  AssumptionReport rep;
  const int m = model.m(), d = model.d(), n = model.dim();
  CounterEngine eng = RngPolicy(probe.seed).engine(Stream::probe, 0);

  // sigma over a uniform t-grid
  {
    double smin = std::numeric_limits<double>::infinity(), sup = 0.0;
    for (int k = 0; k < probe.n_t; ++k) {
      const double t = model.T() * k / (probe.n_t - 1);
      const Matrix& s = model.sigma().at(t);
      const double lo = min_singular_value(s);
      smin = std::min(smin, lo);
      sup = std::max(sup, spectral_norm(s) + (lo > 0 ? 1.0 / lo : std::numeric_limits<double>::infinity()));
    }
    rep.checks.push_back({"sigma_min_singular", smin, 0.0, smin > 1e-12, smin > 1e-12 ? "" : "zero singular value"});
    rep.checks.push_back({"sigma_norm_sup", sup, std::numeric_limits<double>::infinity(), std::isfinite(sup), ""});
    const double a = model.sigma().state_amplitude();
    rep.checks.push_back({"sigma_state_amplitude", std::abs(a), 1.0, std::abs(a) < 1.0, a == 0.0 ? "state independent" : ""});
    double smax = 0.0;
    for (const auto& s : model.sigma().values()) smax = std::max(smax, spectral_norm(s));
    rep.checks.push_back({"sigma_state_lipschitz", std::abs(a) * smax, std::numeric_limits<double>::infinity(), true, "|a| max|sigma|"});
  }

  auto random_measure = [&](int atoms) {
    Matrix x(atoms, n);
    for (int i = 0; i < atoms; ++i)
      for (int j = 0; j < n; ++j) x(i, j) = 1.5 * eng.normal();
    return EmpiricalMeasure::uniform(m, d, x);
  };

  const CostSpec w2 = w_cost(2.0), wba = rho_cost(model.beta(), model.modulus());
  double grad_max = 0.0, grad_mismatch = 0.0, ratio_max = 0.0, growth = 0.0, at_origin = 0.0;
  const Vector origin = Vector::Zero(n);
  const EmpiricalMeasure delta0 = EmpiricalMeasure::dirac(SplitState::zeros(m, d));
  for (int q = 0; q < probe.n_meas; ++q) {
    const EmpiricalMeasure g = random_measure(8);
    // translated and reweighted perturbation
    Matrix xp = g.atoms();
    const double scale = 0.05 * (1 + q % 4);
    for (Eigen::Index i = 0; i < xp.size(); ++i) xp.data()[i] += scale * eng.normal();
    Vector wp(8);
    for (int i = 0; i < 8; ++i) wp(i) = 1.0 + 0.3 * eng.uniform();
    wp /= wp.sum();
    const EmpiricalMeasure gb(m, d, xp, wp);
    const double dist = wasserstein(g, gb, w2).value + wasserstein(g, gb, wba).value;
    const MeasureSummary sg = model.summarize(g), sb = model.summarize(gb);
    const double gdist = std::sqrt(g.moment(2.0)) + wasserstein(g, delta0, wba).value;
    Vector b0(d);
    model.drift_into(origin.data(), model.summarize(delta0), b0.data());
    at_origin = b0.norm();
    for (int p = 0; p < probe.n_x; ++p) {
      Vector x(n);
      const double r = 0.5 * (1 + p % 8);
      for (int j = 0; j < n; ++j) x(j) = r * eng.normal();
      const Matrix Jfd = model.jacobian_fd(x, sg);
      const Matrix Ja = model.jacobian(x, sg);
      grad_max = std::max(grad_max, spectral_norm(Jfd));
      grad_mismatch = std::max(grad_mismatch, (Jfd - Ja).norm() / (1.0 + Ja.norm()));
      Vector ba(d), bb(d);
      model.drift_into(x.data(), sg, ba.data());
      model.drift_into(x.data(), sb, bb.data());
      if (dist > 0) ratio_max = std::max(ratio_max, (ba - bb).norm() / dist);
      growth = std::max(growth, ba.norm() / (1.0 + x.norm() + gdist));
    }
  }
  const double tol = 1e-4;
  rep.checks.push_back({"grad_x_norm", grad_max, model.K_B(), grad_max <= model.K_B() * (1 + tol), "finite-difference operator norm"});
  rep.checks.push_back({"grad_analytic_vs_fd", grad_mismatch, 1e-5, grad_mismatch <= 1e-5, "relative Frobenius mismatch"});
  rep.checks.push_back({"measure_lipschitz_ratio", ratio_max, model.K_B(), ratio_max <= model.K_B(), "sampled |B(x,g)-B(x,g')|/(W2+Wba)"});
  rep.checks.push_back({"drift_at_origin", at_origin, model.K_B(), at_origin <= model.K_B(), "|B(0, delta_0)|"});
  rep.checks.push_back({"drift_growth_constant", growth, std::numeric_limits<double>::infinity(), std::isfinite(growth), "fitted C1"});
  {
    const Matrix MMt = model.M() * model.M().transpose();
    const double smin = min_singular_value(MMt);
    rep.checks.push_back({"MMt_min_singular", smin, 0.0, smin > 1e-12 * std::max(1.0, spectral_norm(MMt)), smin > 0 ? "" : "MM^T singular"});
  }
  if (auto* b = std::get_if<BoundedInteraction>(&model.drift())) {
    double sup = 0.0;
    for (int q = 0; q < probe.n_meas; ++q) {
      const EmpiricalMeasure g = random_measure(8);
      const MeasureSummary s = model.summarize(g);
      for (int p = 0; p < probe.n_x; ++p) {
        Vector x(n), out(d);
        for (int j = 0; j < n; ++j) x(j) = 3.0 * eng.normal();
        model.drift_into(x.data(), s, out.data());
        sup = std::max(sup, out.norm());
      }
    }
    rep.checks.push_back({"bounded_drift_sup", sup, b->bound(), sup <= b->bound() * (1 + 1e-12), "declared bound"});
  }
  return rep;
}

}  // namespace mvh
