#pragma once

#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mvh {

struct TimeGrid {
  double dt = 0.0;
  std::size_t steps = 0;

  static TimeGrid make(double horizon, double dt) {
    if (!(dt > 0) || !(horizon > 0)) throw std::invalid_argument("time grid needs positive dt and horizon");
    const double r = horizon / dt;
    const double n = std::round(r);
    if (n < 1 || std::abs(n * dt - horizon) > 1e-9) throw std::invalid_argument("dt must divide the horizon");
    return TimeGrid{dt, static_cast<std::size_t>(n)};
  }
  double time(std::size_t k) const { return static_cast<double>(k) * dt; }
  double horizon() const { return time(steps); }
};

enum class FlowKind { picard_iterate, self_consistent, frozen };

inline std::string flow_kind_name(FlowKind k) {
  switch (k) {
    case FlowKind::picard_iterate: return "picard-iterate";
    case FlowKind::self_consistent: return "self-consistent";
    default: return "frozen";
  }
}

class MeasureFlow {
 public:
  MeasureFlow() = default;
  MeasureFlow(std::vector<double> times, std::vector<EmpiricalMeasure> measures, FlowKind kind)
      : times_(std::move(times)), measures_(std::move(measures)), kind_(kind) {
    if (times_.empty() || times_.size() != measures_.size()) throw std::invalid_argument("flow needs one measure per time");
    if (times_[0] != 0.0) throw std::invalid_argument("flow grid must start at 0");
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (!(times_[i] > times_[i - 1])) throw std::invalid_argument("flow grid must increase");
      if (measures_[i].size() != measures_[0].size()) throw std::invalid_argument("flow measures must share atom count");
    }
  }
  static MeasureFlow constant(const EmpiricalMeasure& g, std::vector<double> times, FlowKind kind = FlowKind::frozen) {
    std::vector<EmpiricalMeasure> ms(times.size(), g);
    return MeasureFlow(std::move(times), std::move(ms), kind);
  }

  // Nearest grid time <= t.
  std::size_t index_at(double t) const {
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    auto it = std::upper_bound(times_.begin(), times_.end(), t + tol);
    if (it == times_.begin()) throw std::domain_error("flow queried before time 0");
    return static_cast<std::size_t>(it - times_.begin()) - 1;
  }
  const EmpiricalMeasure& at(double t) const { return measures_[index_at(t)]; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<EmpiricalMeasure>& measures() const { return measures_; }
  const EmpiricalMeasure& measure(std::size_t i) const { return measures_[i]; }
  std::size_t size() const { return times_.size(); }
  double horizon() const { return times_.back(); }
  FlowKind kind() const { return kind_; }

 private:
  std::vector<double> times_;
  std::vector<EmpiricalMeasure> measures_;
  FlowKind kind_ = FlowKind::frozen;
};

// Drift summaries of a flow resolved on a simulation grid.
struct FrozenFlow {
  std::vector<MeasureSummary> summaries;
  std::vector<std::size_t> step_index;
  const MeasureSummary& at_step(std::size_t k) const { return summaries[step_index[k]]; }
};

inline FrozenFlow freeze_flow(const HamiltonianModel& model, const MeasureFlow& flow, const TimeGrid& grid) {
  if (flow.measure(0).m() != model.m() || flow.measure(0).d() != model.d()) throw std::invalid_argument("flow dimension mismatch");
  if (grid.horizon() > flow.horizon() + 1e-9 && flow.size() > 1) throw std::invalid_argument("flow does not cover the simulation horizon");
  FrozenFlow f;
  f.step_index.resize(grid.steps + 1);
  std::vector<std::size_t> used;
  std::vector<long> slot(flow.size(), -1);
  for (std::size_t k = 0; k <= grid.steps; ++k) {
    const std::size_t j = flow.index_at(grid.time(k));
    if (slot[j] < 0) {
      slot[j] = static_cast<long>(used.size());
      used.push_back(j);
    }
    f.step_index[k] = static_cast<std::size_t>(slot[j]);
  }
  f.summaries.resize(used.size());
  parallel_for(used.size(), [&](std::size_t i) { f.summaries[i] = model.summarize(flow.measure(used[i])); });
  return f;
}

// Shared Euler data for one grid.
struct Propagator {
  const HamiltonianModel& model;
  TimeGrid grid;
  RngPolicy rng;
  std::vector<std::size_t> sigma_index;  // per step

  Propagator(const HamiltonianModel& mdl, TimeGrid g, RngPolicy r) : model(mdl), grid(g), rng(r) {
    sigma_index.resize(grid.steps);
    for (std::size_t k = 0; k < grid.steps; ++k) sigma_index[k] = model.sigma().index(grid.time(k));
  }

  // Left-point Euler step in place; drift buffer b has d entries.
  void euler(std::size_t k, double* x, const MeasureSummary& s, const double* dw, double* b) const {
    const int m = model.m(), d = model.d();
    const double dt = grid.dt;
    const Matrix& M = model.M();
    const Matrix& sg = model.sigma().value(sigma_index[k]);
    const double factor = model.sigma().state_factor(x, m + d);
    model.drift_into(x, s, b);
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += M(i, j) * x[m + j];
      x[i] += dt * acc;
    }
    for (int i = 0; i < d; ++i) {
      double noise = 0.0;
      for (int j = 0; j < d; ++j) noise += sg(i, j) * dw[j];
      x[m + i] += dt * b[i] + factor * noise;
    }
  }

  // Runs one path from x (overwritten with the terminal state).  The visitor
  // sees (k, s_k, x_k, dW_k, I_k, summary_k) before each update.
  template <class Visitor>
  void run(std::uint64_t path, double* x, const FrozenFlow& flow, Visitor& vis, std::size_t steps) const {
    const int d = model.d();
    double z[128], dw[64], di[64], b[64];
    if (d > 64) throw std::length_error("d > 64 not supported");
    for (std::size_t k = 0; k < steps; ++k) {
      rng.step_normals(path, k, std::span<double>(z, 2 * static_cast<std::size_t>(d)));
      brownian_pair(std::span<const double>(z, 2 * static_cast<std::size_t>(d)), grid.dt, std::span<double>(dw, d), std::span<double>(di, d));
      const MeasureSummary& s = flow.at_step(k);
      vis.step(k, grid.time(k), static_cast<const double*>(x), static_cast<const double*>(dw), static_cast<const double*>(di), s);
      euler(k, x, s, dw, b);
      if (!all_finite(x, static_cast<std::size_t>(model.dim())))
        throw DivergenceError(k + 1, "path " + std::to_string(path) + " left the finite range");
    }
    vis.finish(static_cast<const double*>(x));
  }
};

struct NullVisitor {
  void step(std::size_t, double, const double*, const double*, const double*, const MeasureSummary&) {}
  void finish(const double*) {}
};

struct PathBundle {
  int m = 0, d = 0;
  std::size_t n_paths = 0;
  TimeGrid grid;
  bool has_paths = false;
  std::vector<double> states;    // n_paths x (steps+1) x dim, if has_paths
  std::vector<double> dW, dI;    // n_paths x steps x d, if has_paths
  std::vector<double> terminal;  // n_paths x dim
  std::vector<double> log_weight;

  int dim() const { return m + d; }
  double horizon() const { return grid.horizon(); }
  const double* state(std::size_t p, std::size_t k) const { return &states[(p * (grid.steps + 1) + k) * dim()]; }
  const double* increment(std::size_t p, std::size_t k) const { return &dW[(p * grid.steps + k) * d]; }
  const double* time_moment(std::size_t p, std::size_t k) const { return &dI[(p * grid.steps + k) * d]; }
  const double* terminal_state(std::size_t p) const { return &terminal[p * dim()]; }
  SplitState terminal_split(std::size_t p) const {
    return SplitState(m, Eigen::Map<const Vector>(terminal_state(p), dim()));
  }
};

namespace detail {

struct RecordVisitor {
  PathBundle& b;
  std::size_t p;
  void step(std::size_t k, double, const double* x, const double* dw, const double* di, const MeasureSummary&) {
    const int n = b.dim();
    std::copy(x, x + n, &b.states[(p * (b.grid.steps + 1) + k) * n]);
    std::copy(dw, dw + b.d, &b.dW[(p * b.grid.steps + k) * b.d]);
    std::copy(di, di + b.d, &b.dI[(p * b.grid.steps + k) * b.d]);
  }
  void finish(const double* x) {
    const int n = b.dim();
    std::copy(x, x + n, &b.states[(p * (b.grid.steps + 1) + b.grid.steps) * n]);
    std::copy(x, x + n, &b.terminal[p * n]);
  }
};

struct TerminalVisitor {
  PathBundle& b;
  std::size_t p;
  void step(std::size_t, double, const double*, const double*, const double*, const MeasureSummary&) {}
  void finish(const double* x) { std::copy(x, x + b.dim(), &b.terminal[p * b.dim()]); }
};

inline void check_start(const HamiltonianModel& model, const SplitState& x) {
  if (x.m() != model.m() || x.d() != model.d()) throw std::invalid_argument("start state dimension mismatch");
}

}  // namespace detail

struct DecoupledOptions {
  double horizon = 0.0;  // 0 means the flow horizon
  bool keep_paths = true;
};

inline PathBundle simulate_decoupled(const HamiltonianModel& model, const MeasureFlow& flow, const SplitState& x, std::size_t n_paths,
                                     double dt, const RngPolicy& rng, DecoupledOptions opt = {}) {
  detail::check_start(model, x);
  if (n_paths == 0) throw std::invalid_argument("n_paths must be positive");
  const TimeGrid grid = TimeGrid::make(opt.horizon > 0 ? opt.horizon : flow.horizon(), dt);
  const FrozenFlow ff = freeze_flow(model, flow, grid);
  const Propagator prop(model, grid, rng);
  PathBundle b;
  b.m = model.m();
  b.d = model.d();
  b.n_paths = n_paths;
  b.grid = grid;
  b.has_paths = opt.keep_paths;
  const int n = model.dim();
  b.terminal.assign(n_paths * n, 0.0);
  b.log_weight.assign(n_paths, 0.0);
  if (opt.keep_paths) {
    b.states.assign(n_paths * (grid.steps + 1) * n, 0.0);
    b.dW.assign(n_paths * grid.steps * b.d, 0.0);
    b.dI.assign(n_paths * grid.steps * b.d, 0.0);
  }
  parallel_for(n_paths, [&](std::size_t p) {
    Vector y = x.joined();
    if (opt.keep_paths) {
      detail::RecordVisitor v{b, p};
      prop.run(p, y.data(), ff, v, grid.steps);
    } else {
      detail::TerminalVisitor v{b, p};
      prop.run(p, y.data(), ff, v, grid.steps);
    }
  });
  return b;
}

using StateFunction = std::function<double(const SplitState&)>;

inline Estimate estimate_semigroup(const HamiltonianModel& model, const MeasureFlow& flow, const SplitState& x, const StateFunction& f,
                                   std::size_t n_paths, double dt, const RngPolicy& rng, double horizon = 0.0) {
  const PathBundle b = simulate_decoupled(model, flow, x, n_paths, dt, rng, {horizon, false});
  std::vector<double> v(n_paths);
  parallel_for(n_paths, [&](std::size_t p) { v[p] = f(b.terminal_split(p)); });
  for (double e : v)
    if (!std::isfinite(e)) throw std::domain_error("f is not finite on a reachable state");
  return mean_estimate(v);
}

struct McKeanVlasovOptions {
  std::size_t record_stride = 1;
  double horizon = 0.0;  // 0 means model T
};

// Row-major initial cloud drawn from init (used as-is when it already is a uniform cloud of the right size).
inline std::vector<double> initial_cloud(const EmpiricalMeasure& init, std::size_t n, const RngPolicy& rng) {
  const int dim = init.dim();
  std::vector<double> cloud(n * dim);
  bool as_is = init.size() == n;
  for (std::size_t i = 0; as_is && i < n; ++i) as_is = init.weight(i) == init.weight(0);
  if (as_is) {
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) cloud[i * dim + j] = init.atoms()(static_cast<Eigen::Index>(i), j);
    return cloud;
  }
  std::vector<double> cdf(init.size());
  double s = 0.0;
  for (std::size_t i = 0; i < init.size(); ++i) cdf[i] = (s += init.weight(i));
  CounterEngine eng = rng.engine(Stream::initial, 0);
  for (std::size_t p = 0; p < n; ++p) {
    const double u = eng.uniform() * s;
    std::size_t i = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (i >= init.size()) i = init.size() - 1;
    for (int j = 0; j < dim; ++j) cloud[p * dim + j] = init.atoms()(static_cast<Eigen::Index>(i), j);
  }
  return cloud;
}

inline EmpiricalMeasure cloud_measure(int m, int d, const std::vector<double>& cloud) {
  const int dim = m + d;
  const auto n = static_cast<Eigen::Index>(cloud.size() / dim);
  Matrix a(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = cloud[static_cast<std::size_t>(i * dim + j)];
  return EmpiricalMeasure::uniform(m, d, std::move(a));
}

// Interacting particle system started from an explicit row-major cloud.
inline MeasureFlow simulate_particles(const HamiltonianModel& model, std::vector<double> cloud, double dt, const RngPolicy& rng,
                                      McKeanVlasovOptions opt = {}) {
  const int n = model.dim();
  const std::size_t count = cloud.size() / static_cast<std::size_t>(n);
  if (count < 2) throw std::invalid_argument("need at least 2 particles");
  const double horizon = opt.horizon > 0 ? opt.horizon : model.T();
  const TimeGrid grid = TimeGrid::make(horizon, dt);
  if (grid.steps < 10) throw std::invalid_argument("dt must be at most T/10");
  if (opt.record_stride == 0) opt.record_stride = 1;
  const Propagator prop(model, grid, rng);
  std::vector<double> times{0.0};
  std::vector<EmpiricalMeasure> ms{cloud_measure(model.m(), model.d(), cloud)};
  const int d = model.d();
  for (std::size_t k = 0; k < grid.steps; ++k) {
    const MeasureSummary s = model.summarize_cloud(cloud);
    parallel_for(count, [&](std::size_t p) {
      double z[128], dw[64], di[64], b[64];
      rng.step_normals(p, k, std::span<double>(z, 2 * static_cast<std::size_t>(d)));
      brownian_pair(std::span<const double>(z, 2 * static_cast<std::size_t>(d)), grid.dt, std::span<double>(dw, d), std::span<double>(di, d));
      double* x = &cloud[p * n];
      prop.euler(k, x, s, dw, b);
      if (!all_finite(x, static_cast<std::size_t>(n))) throw DivergenceError(k + 1, "particle " + std::to_string(p) + " left the finite range");
    });
    if ((k + 1) % opt.record_stride == 0 || k + 1 == grid.steps) {
      times.push_back(grid.time(k + 1));
      ms.push_back(cloud_measure(model.m(), model.d(), cloud));
    }
  }
  return MeasureFlow(std::move(times), std::move(ms), FlowKind::self_consistent);
}

inline MeasureFlow simulate_mckean_vlasov(const HamiltonianModel& model, const EmpiricalMeasure& init, std::size_t n_particles, double dt,
                                          const RngPolicy& rng, McKeanVlasovOptions opt = {}) {
  if (init.m() != model.m() || init.d() != model.d()) throw std::invalid_argument("initial measure dimension mismatch");
  if (n_particles < 2) throw std::invalid_argument("need at least 2 particles");
  return simulate_particles(model, initial_cloud(init, n_particles, rng), dt, rng, opt);
}

struct FlowMoments {
  double k = 2.0;
  std::vector<double> times;
  std::vector<double> moment;  // ||mu_t||_k^k
  double sup = 0.0;
  double initial = 0.0;
  double growth_constant = 0.0;  // sup / (1 + initial)
};

inline FlowMoments moment_report(const MeasureFlow& flow, double k) {
  if (!(k >= 1)) throw std::invalid_argument("moment order must be >= 1");
  FlowMoments r;
  r.k = k;
  r.times = flow.times();
  r.moment.resize(flow.size());
  for (std::size_t i = 0; i < flow.size(); ++i) {
    r.moment[i] = flow.measure(i).moment(k);
    r.sup = std::max(r.sup, r.moment[i]);
  }
  r.initial = r.moment[0];
  r.growth_constant = r.sup / (1.0 + r.initial);
  return r;
}

struct PathMoments {
  double p = 2.0;
  std::vector<double> times;
  std::vector<double> first;   // E|X1_t - x1 - t M x2|^p
  std::vector<double> second;  // E sup_{s<=t} |X2_s - x2|^p
  std::vector<double> first_se, second_se;
  LineFit first_fit, second_fit;  // log-log
  double first_constant = 0.0;    // least squares c in first ~ c t^{3p/2}
  double second_constant = 0.0;   // c in second ~ c t^{p/2}
};

namespace detail {

// Per-path increments |X1_t - x1 - tMx2|^p and running sup |X2_s - x2|^p at checkpoints.
struct MomentVisitor {
  const HamiltonianModel& model;
  const double* x0;
  double dt;
  double p;
  const std::vector<std::size_t>& checkpoints;  // step indices, increasing
  double* first;
  double* second;
  std::size_t next = 0;
  double running = 0.0;
  std::vector<double> mx2;

  void observe(std::size_t k, const double* x) {
    const int m = model.m(), d = model.d();
    double s2 = 0.0;
    for (int j = 0; j < d; ++j) s2 += (x[m + j] - x0[m + j]) * (x[m + j] - x0[m + j]);
    running = std::max(running, std::pow(std::sqrt(s2), p));
    while (next < checkpoints.size() && checkpoints[next] == k) {
      const double t = static_cast<double>(k) * dt;
      double s1 = 0.0;
      for (int i = 0; i < m; ++i) {
        const double v = x[i] - x0[i] - t * mx2[i];
        s1 += v * v;
      }
      first[next] = std::pow(std::sqrt(s1), p);
      second[next] = running;
      ++next;
    }
  }
  void step(std::size_t k, double, const double* x, const double*, const double*, const MeasureSummary&) { observe(k, x); }
  void finish(const double* x) { observe(checkpoints.empty() ? 0 : checkpoints.back(), x); }
};

inline PathMoments finish_moments(double p, const std::vector<double>& times, const std::vector<double>& first,
                                  const std::vector<double>& second, std::size_t n_paths) {
  PathMoments r;
  r.p = p;
  r.times = times;
  const std::size_t nt = times.size();
  std::vector<double> col(n_paths);
  for (std::size_t j = 0; j < nt; ++j) {
    for (std::size_t i = 0; i < n_paths; ++i) col[i] = first[i * nt + j];
    Estimate e = mean_estimate(col);
    r.first.push_back(e.value);
    r.first_se.push_back(e.se);
    for (std::size_t i = 0; i < n_paths; ++i) col[i] = second[i * nt + j];
    e = mean_estimate(col);
    r.second.push_back(e.value);
    r.second_se.push_back(e.se);
  }
  r.first_fit = fit_loglog(r.times, r.first);
  r.second_fit = fit_loglog(r.times, r.second);
  std::vector<double> s1(nt), s2(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    s1[j] = std::pow(times[j], 1.5 * p);
    s2[j] = std::pow(times[j], 0.5 * p);
  }
  r.first_constant = fit_through_origin(s1, r.first).slope;
  r.second_constant = fit_through_origin(s2, r.second).slope;
  return r;
}

inline std::vector<std::size_t> checkpoint_steps(const std::vector<double>& t_grid, const TimeGrid& grid) {
  std::vector<std::size_t> cps;
  for (double t : t_grid) {
    const double r = std::round(t / grid.dt);
    if (r < 1 || std::abs(r * grid.dt - t) > 1e-9 || static_cast<std::size_t>(r) > grid.steps)
      throw std::invalid_argument("moment t-grid must be positive multiples of dt within the horizon");
    cps.push_back(static_cast<std::size_t>(r));
  }
  for (std::size_t i = 1; i < cps.size(); ++i)
    if (cps[i] <= cps[i - 1]) throw std::invalid_argument("moment t-grid must increase");
  return cps;
}

}  // namespace detail

// Streaming version: simulates n_paths from x without storing trajectories.
inline PathMoments moment_report(const HamiltonianModel& model, const MeasureFlow& flow, const SplitState& x, double p,
                                 const std::vector<double>& t_grid, std::size_t n_paths, double dt, const RngPolicy& rng) {
  detail::check_start(model, x);
  if (!(p >= 1)) throw std::invalid_argument("moment order must be >= 1");
  if (t_grid.empty()) throw std::invalid_argument("empty t-grid");
  const TimeGrid grid = TimeGrid::make(t_grid.back(), dt);
  const auto cps = detail::checkpoint_steps(t_grid, grid);
  const FrozenFlow ff = freeze_flow(model, flow, grid);
  const Propagator prop(model, grid, rng);
  const std::size_t nt = t_grid.size();
  std::vector<double> first(n_paths * nt), second(n_paths * nt);
  const Vector mx2 = model.M() * x.second();
  parallel_for(n_paths, [&](std::size_t i) {
    Vector y = x.joined();
    detail::MomentVisitor v{model, x.joined().data(), dt, p, cps, &first[i * nt], &second[i * nt]};
    v.mx2.assign(mx2.data(), mx2.data() + mx2.size());
    prop.run(i, y.data(), ff, v, grid.steps);
  });
  return detail::finish_moments(p, t_grid, first, second, n_paths);
}

// Same report from a stored bundle started at x.
inline PathMoments moment_report(const HamiltonianModel& model, const PathBundle& b, const SplitState& x, double p,
                                 const std::vector<double>& t_grid) {
  if (!b.has_paths) throw std::invalid_argument("bundle has no stored trajectories");
  const auto cps = detail::checkpoint_steps(t_grid, b.grid);
  const std::size_t nt = t_grid.size();
  std::vector<double> first(b.n_paths * nt), second(b.n_paths * nt);
  const Vector mx2 = model.M() * x.second();
  parallel_for(b.n_paths, [&](std::size_t i) {
    detail::MomentVisitor v{model, x.joined().data(), b.grid.dt, p, cps, &first[i * nt], &second[i * nt]};
    v.mx2.assign(mx2.data(), mx2.data() + mx2.size());
    for (std::size_t k = 0; k <= cps.back(); ++k) v.observe(k, b.state(i, k));
  });
  return detail::finish_moments(p, t_grid, first, second, b.n_paths);
}

}  // namespace mvh
