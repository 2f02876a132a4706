#pragma once

#include "control.hpp"
#include "simulate.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace mvh {

namespace detail {

inline void apply(const Matrix& A, const double* x, double* out, int n) {
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += A(i, j) * x[j];
    out[i] = acc;
  }
}

inline void require_constant_state_sigma(const HamiltonianModel& model) {
  if (model.sigma().state_amplitude() != 0.0) throw std::invalid_argument("state-dependent sigma is not supported by coupling operations");
  if (!model.sigma().invertible()) throw std::domain_error("sigma is singular");
}

// Accumulates N_t(h) = int <sigma^{-1}[grad B (shift) - gamma'], dW>.  Within a step
// the drift part is frozen at the left point and the control part, linear in s,
// is integrated exactly against (dW, I).
struct BismutVisitor {
  const HamiltonianModel& model;
  const ControlPath& ctl;
  const Propagator& prop;
  double weight = 0.0;
  double shift[64], jv[64], gp[64], e0[64], se0[64], sgpp[64];

  void step(std::size_t k, double s, const double* x, const double* dw, const double* di, const MeasureSummary& ms) {
    const int d = model.d();
    const Matrix& si = model.sigma().inverse(prop.sigma_index[k]);
    ctl.shift(s, shift);
    model.jvp_into(x, ms, shift, jv);
    ctl.gamma_prime(s, gp);
    for (int i = 0; i < d; ++i) e0[i] = jv[i] - gp[i];
    apply(si, e0, se0, d);
    apply(si, ctl.gamma_second().data(), sgpp, d);
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += se0[i] * dw[i] - sgpp[i] * di[i];
    weight += acc;
  }
  void finish(const double*) {}
};

// int <sigma^{-1} grad_{(v,0)} B, dW> at left points.
struct PartialBismutVisitor {
  const HamiltonianModel& model;
  const Propagator& prop;
  const double* dir;  // (v, 0)
  double weight = 0.0;
  double jv[64], sjv[64];

  void step(std::size_t k, double, const double* x, const double* dw, const double*, const MeasureSummary& ms) {
    const int d = model.d();
    model.jvp_into(x, ms, dir, jv);
    apply(model.sigma().inverse(prop.sigma_index[k]), jv, sjv, d);
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += sjv[i] * dw[i];
    weight += acc;
  }
  void finish(const double*) {}
};

}  // namespace detail

inline std::vector<double> bismut_weight(const PathBundle& bundle, const HamiltonianModel& model, const MeasureFlow& flow,
                                         const SplitState& h) {
  if (!bundle.has_paths || bundle.dW.empty()) throw std::invalid_argument("bismut_weight needs a bundle with stored increments");
  detail::require_constant_state_sigma(model);
  const ControlEval ce(model.M(), bundle.horizon());
  const ControlPath ctl(ce, h);
  const FrozenFlow ff = freeze_flow(model, flow, bundle.grid);
  const Propagator prop(model, bundle.grid, RngPolicy(0));
  std::vector<double> N(bundle.n_paths);
  parallel_for(bundle.n_paths, [&](std::size_t p) {
    detail::BismutVisitor v{model, ctl, prop};
    for (std::size_t k = 0; k < bundle.grid.steps; ++k)
      v.step(k, bundle.grid.time(k), bundle.state(p, k), bundle.increment(p, k), bundle.time_moment(p, k), ff.at_step(k));
    N[p] = v.weight;
  });
  return N;
}

// Several test functions evaluated on the same paths and weights.
inline std::vector<Estimate> bismut_gradient(const HamiltonianModel& model, const MeasureFlow& flow, const SplitState& x,
                                             const std::vector<StateFunction>& fs, const SplitState& h, std::size_t n_paths, double dt,
                                             const RngPolicy& rng, double horizon = 0.0) {
  detail::check_start(model, x);
  detail::require_constant_state_sigma(model);
  if (n_paths < 2) throw std::invalid_argument("n_paths must be >= 2");
  const TimeGrid grid = TimeGrid::make(horizon > 0 ? horizon : flow.horizon(), dt);
  const ControlEval ce(model.M(), grid.horizon());
  const ControlPath ctl(ce, h);
  const FrozenFlow ff = freeze_flow(model, flow, grid);
  const Propagator prop(model, grid, rng);
  std::vector<double> N(n_paths);
  std::vector<std::vector<double>> F(fs.size(), std::vector<double>(n_paths));
  parallel_for(n_paths, [&](std::size_t p) {
    Vector y = x.joined();
    detail::BismutVisitor v{model, ctl, prop};
    prop.run(p, y.data(), ff, v, grid.steps);
    N[p] = v.weight;
    const SplitState xt(model.m(), y);
    for (std::size_t j = 0; j < fs.size(); ++j) F[j][p] = fs[j](xt);
  });
  std::vector<Estimate> out;
  for (const auto& f : F) out.push_back(covariance_estimate(f, N));
  return out;
}

inline Estimate bismut_gradient(const HamiltonianModel& model, const MeasureFlow& flow, const SplitState& x, const StateFunction& f,
                                const SplitState& h, std::size_t n_paths, double dt, const RngPolicy& rng, double horizon = 0.0) {
  return bismut_gradient(model, flow, x, std::vector<StateFunction>{f}, h, n_paths, dt, rng, horizon)[0];
}

using SecondFunction = std::function<double(const Vector&)>;

struct PartialGradient {
  Estimate gradient;
  double f_rms = 0.0;  // (E|f(X2_t)|^2)^{1/2}
  double weight_rms = 0.0;
};

inline PartialGradient partial_bismut_gradient(const HamiltonianModel& model, const MeasureFlow& flow, const SplitState& x,
                                               const SecondFunction& f2, const Vector& v, std::size_t n_paths, double dt,
                                               const RngPolicy& rng, double horizon = 0.0) {
  detail::check_start(model, x);
  detail::require_constant_state_sigma(model);
  if (v.size() != model.m()) throw std::invalid_argument("partial direction must have m entries");
  if (n_paths < 2) throw std::invalid_argument("n_paths must be >= 2");
  const TimeGrid grid = TimeGrid::make(horizon > 0 ? horizon : flow.horizon(), dt);
  const FrozenFlow ff = freeze_flow(model, flow, grid);
  const Propagator prop(model, grid, rng);
  Vector dir = Vector::Zero(model.dim());
  dir.head(model.m()) = v;
  std::vector<double> N(n_paths), F(n_paths);
  parallel_for(n_paths, [&](std::size_t p) {
    Vector y = x.joined();
    detail::PartialBismutVisitor vis{model, prop, dir.data()};
    prop.run(p, y.data(), ff, vis, grid.steps);
    N[p] = vis.weight;
    F[p] = f2(y.tail(model.d()));
  });
  PartialGradient r;
  r.gradient = covariance_estimate(F, N);
  double s = 0.0, w = 0.0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    s += F[p] * F[p];
    w += N[p] * N[p];
  }
  r.f_rms = std::sqrt(s / static_cast<double>(n_paths));
  r.weight_rms = std::sqrt(w / static_cast<double>(n_paths));
  return r;
}

// Central difference of P_t f along h with common random numbers.
inline Estimate fd_gradient(const HamiltonianModel& model, const MeasureFlow& flow, const SplitState& x, const StateFunction& f,
                            const SplitState& h, double fd_eps, std::size_t n_paths, double dt, const RngPolicy& rng, double horizon = 0.0) {
  detail::check_start(model, x);
  if (!(fd_eps > 0)) throw std::invalid_argument("fd_eps must be positive");
  const SplitState xp(model.m(), x.joined() + fd_eps * h.joined());
  const SplitState xm(model.m(), x.joined() - fd_eps * h.joined());
  const PathBundle bp = simulate_decoupled(model, flow, xp, n_paths, dt, rng, {horizon, false});
  const PathBundle bm = simulate_decoupled(model, flow, xm, n_paths, dt, rng, {horizon, false});
  std::vector<double> diff(n_paths);
  parallel_for(n_paths, [&](std::size_t p) { diff[p] = (f(bp.terminal_split(p)) - f(bm.terminal_split(p))) / (2.0 * fd_eps); });
  return mean_estimate(diff);
}

struct CoupledBundle {
  PathBundle base;                      // X under P
  std::vector<double> shifted_terminal; // X~_t = X_t + shift(t), n_paths x dim
  std::vector<double> int_eta_sq;       // int_0^t |eta|^2 per path
  std::vector<double> eta;              // left-point eta, n_paths x steps x d, when paths are kept
  SplitState x, y;

  const std::vector<double>& log_weight() const { return base.log_weight; }
  std::size_t n_paths() const { return base.n_paths; }
};

struct CouplingOptions {
  double horizon = 0.0;  // 0 means the flow horizon
  bool keep_paths = false;
};

namespace detail {

// eta_u = sigma^{-1}[B(X~, g~) - B(X, g) - gamma'_u(y - x)]; the drift difference is frozen
// at the left point, gamma' is linear in u, so both int eta dW and int |eta|^2 are exact per step.
struct CouplingVisitor {
  const HamiltonianModel& model;
  const ControlPath& ctl;
  const Propagator& prop;
  const FrozenFlow& tilde;
  double* eta_out;  // may be null
  double stoch = 0.0, quad = 0.0;
  double shift[64], xt[64], b0[64], b1[64], gp[64], e0[64], a[64], c0[64], c1[64];

  void step(std::size_t k, double s, const double* x, const double* dw, const double* di, const MeasureSummary& ms) {
    const int d = model.d(), n = model.dim();
    const double dt = prop.grid.dt;
    const Matrix& si = model.sigma().inverse(prop.sigma_index[k]);
    ctl.shift(s, shift);
    for (int i = 0; i < n; ++i) xt[i] = x[i] + shift[i];
    model.drift_into(xt, tilde.at_step(k), b1);
    model.drift_into(x, ms, b0);
    for (int i = 0; i < d; ++i) b1[i] -= b0[i];
    apply(si, b1, a, d);
    ctl.gamma_prime(s, gp);
    apply(si, gp, c0, d);
    apply(si, ctl.gamma_second().data(), c1, d);
    double sdw = 0.0, q00 = 0.0, q01 = 0.0, q11 = 0.0;
    for (int i = 0; i < d; ++i) {
      e0[i] = a[i] - c0[i];
      sdw += e0[i] * dw[i] - c1[i] * di[i];
      q00 += e0[i] * e0[i];
      q01 -= e0[i] * c1[i];
      q11 += c1[i] * c1[i];
    }
    stoch += sdw;
    quad += q00 * dt + q01 * dt * dt + q11 * dt * dt * dt / 3.0;
    if (eta_out) std::copy(e0, e0 + d, eta_out + k * d);
  }
  void finish(const double*) {}
};

}  // namespace detail

inline CoupledBundle harnack_coupling(const HamiltonianModel& model, const MeasureFlow& flow_g, const MeasureFlow& flow_gt, const SplitState& x,
                                      const SplitState& y, std::size_t n_paths, double dt, const RngPolicy& rng, CouplingOptions opt = {}) {
  detail::check_start(model, x);
  detail::check_start(model, y);
  detail::require_constant_state_sigma(model);
  if (n_paths == 0) throw std::invalid_argument("n_paths must be positive");
  const TimeGrid grid = TimeGrid::make(opt.horizon > 0 ? opt.horizon : flow_g.horizon(), dt);
  const FrozenFlow fg = freeze_flow(model, flow_g, grid);
  const FrozenFlow fgt = freeze_flow(model, flow_gt, grid);
  const ControlEval ce(model.M(), grid.horizon());
  const ControlPath ctl(ce, SplitState(model.m(), y.joined() - x.joined()));
  const Propagator prop(model, grid, rng);
  const int n = model.dim(), d = model.d();

  CoupledBundle cb;
  cb.x = x;
  cb.y = y;
  PathBundle& b = cb.base;
  b.m = model.m();
  b.d = d;
  b.n_paths = n_paths;
  b.grid = grid;
  b.has_paths = opt.keep_paths;
  b.terminal.assign(n_paths * n, 0.0);
  b.log_weight.assign(n_paths, 0.0);
  if (opt.keep_paths) {
    b.states.assign(n_paths * (grid.steps + 1) * n, 0.0);
    b.dW.assign(n_paths * grid.steps * d, 0.0);
    b.dI.assign(n_paths * grid.steps * d, 0.0);
    cb.eta.assign(n_paths * grid.steps * d, 0.0);
  }
  cb.shifted_terminal.assign(n_paths * n, 0.0);
  cb.int_eta_sq.assign(n_paths, 0.0);

  struct Both {
    detail::CouplingVisitor c;
    detail::RecordVisitor* rec;
    void step(std::size_t k, double s, const double* x, const double* dw, const double* di, const MeasureSummary& ms) {
      c.step(k, s, x, dw, di, ms);
      if (rec) rec->step(k, s, x, dw, di, ms);
    }
    void finish(const double* x) {
      if (rec) rec->finish(x);
    }
  };

  parallel_for(n_paths, [&](std::size_t p) {
    Vector z = x.joined();
    detail::RecordVisitor rec{b, p};
    Both v{detail::CouplingVisitor{model, ctl, prop, fgt, opt.keep_paths ? &cb.eta[p * grid.steps * d] : nullptr},
           opt.keep_paths ? &rec : nullptr};
    prop.run(p, z.data(), fg, v, grid.steps);
    std::copy(z.data(), z.data() + n, &b.terminal[p * n]);
    double sh[64];
    ctl.shift(grid.horizon(), sh);
    for (int i = 0; i < n; ++i) cb.shifted_terminal[p * n + i] = z(i) + sh[i];
    b.log_weight[p] = v.c.stoch - 0.5 * v.c.quad;
    cb.int_eta_sq[p] = v.c.quad;
    if (!std::isfinite(b.log_weight[p])) throw DivergenceError(grid.steps, "non-finite Girsanov log-weight");
  });
  return cb;
}

struct EntropyCost {
  Estimate half_int_eta_sq_Q;       // (1/2) E_Q int |eta|^2 by self-normalized reweighting
  double sup_path_int_eta_sq = 0.0; // max over paths, the esssup proxy
  double ess = 0.0;                 // effective sample size of the weights
  bool degenerate = false;          // ess < 10
};

// Normalized weights R_i / sum R, computed relative to the largest log-weight.
inline std::vector<double> normalized_weights(const std::vector<double>& logw) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logw) mx = std::max(mx, l);
  std::vector<double> w(logw.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) s += (w[i] = std::exp(logw[i] - mx));
  for (double& v : w) v /= s;
  return w;
}

inline EntropyCost entropy_cost(const CoupledBundle& cb) {
  EntropyCost e;
  const auto& v = cb.int_eta_sq;
  if (v.empty()) throw std::invalid_argument("empty coupled bundle");
  const std::vector<double> w = normalized_weights(cb.log_weight());
  const double mean = weighted_mean(v, w);
  double var = 0.0, w2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    var += w[i] * w[i] * (v[i] - mean) * (v[i] - mean);
    w2 += w[i] * w[i];
    e.sup_path_int_eta_sq = std::max(e.sup_path_int_eta_sq, v[i]);
  }
  e.half_int_eta_sq_Q = {0.5 * mean, 0.5 * std::sqrt(var)};
  e.ess = 1.0 / w2;
  e.degenerate = e.ess < 10.0;
  return e;
}

// Sample mean of R = exp(log R) with its standard error.
inline Estimate weight_mean(const CoupledBundle& cb) {
  std::vector<double> r(cb.n_paths());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::exp(cb.log_weight()[i]);
  return mean_estimate(r);
}

}  // namespace mvh
