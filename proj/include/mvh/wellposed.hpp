#pragma once

#include "metrics.hpp"
#include "simulate.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace mvh {

// How the weighted-variation component is computed between two flows.
//   matched: sum_i w_i |a_i - b_i| (1 + |a_i|^{k-1} + |b_i|^{k-1}) over particle indices
//   exact:   the discrete weighted variation on the union of atoms
enum class VarMode { matched, exact };

enum class InitialGuess { constant, centered };

struct FlowDistanceComponents {
  std::vector<double> times;
  std::vector<double> wk;
  std::vector<double> var;
};

namespace detail {

inline double matched_var(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double k, const std::vector<std::size_t>* idx) {
  if (a.size() != b.size()) throw std::invalid_argument("matched variation needs equal atom counts");
  auto term = [&](std::size_t i) {
    const auto ra = a.atoms().row(static_cast<Eigen::Index>(i));
    const auto rb = b.atoms().row(static_cast<Eigen::Index>(i));
    const double diff = (ra - rb).norm();
    if (diff == 0.0) return 0.0;
    return diff * (1.0 + std::pow(ra.norm(), k - 1.0) + std::pow(rb.norm(), k - 1.0));
  };
  double s = 0.0;
  if (idx) {
    for (std::size_t i : *idx) s += term(i);
    return s / static_cast<double>(idx->size());
  }
  for (std::size_t i = 0; i < a.size(); ++i) s += 0.5 * (a.weight(i) + b.weight(i)) * term(i);
  return s;
}

inline EmpiricalMeasure restrict_atoms(const EmpiricalMeasure& g, const std::vector<std::size_t>& idx) {
  Matrix a(static_cast<Eigen::Index>(idx.size()), g.dim());
  for (std::size_t r = 0; r < idx.size(); ++r) a.row(static_cast<Eigen::Index>(r)) = g.atoms().row(static_cast<Eigen::Index>(idx[r]));
  return EmpiricalMeasure::uniform(g.m(), g.d(), std::move(a));
}

}  // namespace detail

// Per-time W_k and variation components on the grid points selected by stride (plus the last).
// When the clouds exceed the solver cap, W_k uses a fixed common subset of particle indices.
inline FlowDistanceComponents flow_distance_components(const MeasureFlow& A, const MeasureFlow& B, double k, VarMode mode = VarMode::matched,
                                                       std::size_t stride = 1, std::size_t cap = 1024, const RngPolicy* rng = nullptr) {
  if (A.times() != B.times()) throw std::invalid_argument("flow grids differ");
  if (!(k >= 1)) throw std::invalid_argument("k must be >= 1");
  if (stride == 0) stride = 1;
  std::vector<std::size_t> sel;
  for (std::size_t j = 0; j < A.size(); j += stride) sel.push_back(j);
  if (sel.back() != A.size() - 1) sel.push_back(A.size() - 1);

  const std::size_t na = A.measure(0).size();
  std::vector<std::size_t> subset;
  const bool sub = na + B.measure(0).size() > cap;
  if (sub) {
    if (na != B.measure(0).size()) throw std::length_error("flows exceed the solver cap and cannot be matched by index");
    std::vector<std::size_t> perm(na);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    CounterEngine eng = (rng ? *rng : RngPolicy(0)).engine(Stream::subsample, 0);
    for (std::size_t i = 0; i + 1 < na; ++i) std::swap(perm[i], perm[i + eng.below(na - i)]);
    perm.resize(cap / 2);
    std::sort(perm.begin(), perm.end());
    subset = std::move(perm);
  }

  FlowDistanceComponents c;
  c.times.resize(sel.size());
  c.wk.resize(sel.size());
  c.var.resize(sel.size());
  const CostSpec cost = w_cost(k);
  parallel_for(sel.size(), [&](std::size_t r) {
    const std::size_t j = sel[r];
    const EmpiricalMeasure &a = A.measure(j), &b = B.measure(j);
    c.times[r] = A.times()[j];
    if (sub) {
      c.wk[r] = wasserstein(detail::restrict_atoms(a, subset), detail::restrict_atoms(b, subset), cost, cap).value;
    } else {
      c.wk[r] = wasserstein(a, b, cost, cap).value;
    }
    c.var[r] = mode == VarMode::exact ? weighted_variation(a, b, k) : detail::matched_var(a, b, k, sub ? &subset : nullptr);
  });
  return c;
}

inline double weighted_distance(const FlowDistanceComponents& c, double lambda) {
  if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
  double s = 0.0;
  for (std::size_t j = 0; j < c.times.size(); ++j) s = std::max(s, std::exp(-lambda * c.times[j]) * (c.wk[j] + c.var[j]));
  return s;
}

inline double weighted_flow_distance(const MeasureFlow& A, const MeasureFlow& B, double k, double lambda, VarMode mode = VarMode::matched) {
  if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
  return weighted_distance(flow_distance_components(A, B, k, mode), lambda);
}

struct PicardOptions {
  double k = 2.0;
  double lambda = 0.0;  // 0 picks 4 C3 from the first two distances
  double tol = 1e-8;
  std::size_t max_iter = 30;
  std::size_t n_particles = 256;
  double dt = 0.01;
  std::size_t diag_stride = 10;  // grid stride for distance diagnostics
  VarMode var_mode = VarMode::matched;
  InitialGuess initial = InitialGuess::constant;
  std::size_t cap = 1024;
};

struct PicardIterate {
  std::size_t index = 0;  // distance between iterate index and index - 1
  FlowDistanceComponents components;
  double distance = 0.0;  // at the final lambda
};

enum class PicardStatus { converged, max_iter, non_contraction };

inline std::string picard_status_name(PicardStatus s) {
  switch (s) {
    case PicardStatus::converged: return "converged";
    case PicardStatus::max_iter: return "max_iter";
    default: return "non_contraction";
  }
}

struct PicardResult {
  MeasureFlow flow;
  std::vector<PicardIterate> iterates;
  double lambda = 0.0;
  double fitted_c3 = 0.0;
  std::vector<double> ratios;  // distance_{n+1} / distance_n at lambda
  PicardStatus status = PicardStatus::max_iter;
  std::string message;
  std::vector<double> initial_cloud;
};

// Ratios of successive weighted distances recomputed for any lambda.  Pairs whose
// previous distance sits at the rounding floor are skipped.
inline std::vector<double> contraction_ratios(const PicardResult& r, double lambda, double floor = 1e-12) {
  std::vector<double> out;
  for (std::size_t n = 1; n < r.iterates.size(); ++n) {
    const double prev = weighted_distance(r.iterates[n - 1].components, lambda);
    const double cur = weighted_distance(r.iterates[n].components, lambda);
    if (prev <= floor) break;
    out.push_back(cur / prev);
  }
  return out;
}

// Largest empirical ratio: the observed contraction constant of the iteration at lambda.
inline double contraction_ratio(const PicardResult& r, double lambda, double floor = 1e-12) {
  const auto v = contraction_ratios(r, lambda, floor);
  if (v.empty()) return 0.0;
  return *std::max_element(v.begin(), v.end());
}

namespace detail {

struct CloudRecorder {
  std::vector<std::vector<double>>& clouds;  // per step, row-major
  std::size_t p;
  int dim;
  void step(std::size_t k, double, const double* x, const double*, const double*, const MeasureSummary&) {
    std::copy(x, x + dim, &clouds[k][p * dim]);
  }
  void finish(const double* x) { std::copy(x, x + dim, &clouds.back()[p * dim]); }
};

// One application of the frozen-flow map with fixed initial atoms and Brownian paths.
inline MeasureFlow picard_map(const HamiltonianModel& model, const MeasureFlow& mu, const std::vector<double>& x0, const TimeGrid& grid,
                              const RngPolicy& rng) {
  const int dim = model.dim();
  const std::size_t n = x0.size() / static_cast<std::size_t>(dim);
  const FrozenFlow ff = freeze_flow(model, mu, grid);
  const Propagator prop(model, grid, rng);
  std::vector<std::vector<double>> clouds(grid.steps + 1, std::vector<double>(x0.size()));
  parallel_for(n, [&](std::size_t p) {
    double x[64];
    std::copy(&x0[p * dim], &x0[p * dim] + dim, x);
    CloudRecorder rec{clouds, p, dim};
    prop.run(p, x, ff, rec, grid.steps);
  });
  std::vector<double> times(grid.steps + 1);
  std::vector<EmpiricalMeasure> ms;
  ms.reserve(grid.steps + 1);
  for (std::size_t k = 0; k <= grid.steps; ++k) {
    times[k] = grid.time(k);
    ms.push_back(cloud_measure(model.m(), model.d(), clouds[k]));
  }
  return MeasureFlow(std::move(times), std::move(ms), FlowKind::picard_iterate);
}

}  // namespace detail

inline PicardResult picard_solve(const HamiltonianModel& model, const EmpiricalMeasure& gamma0, const RngPolicy& rng, PicardOptions opt = {}) {
  if (!(opt.k >= 1)) throw std::invalid_argument("k must be >= 1");
  if (opt.lambda < 0) throw std::invalid_argument("lambda must be positive");
  if (opt.n_particles < 2) throw std::invalid_argument("need at least 2 particles");
  if (gamma0.m() != model.m() || gamma0.d() != model.d()) throw std::invalid_argument("initial law dimension mismatch");
  const TimeGrid grid = TimeGrid::make(model.T(), opt.dt);

  PicardResult res;
  res.initial_cloud = initial_cloud(gamma0, opt.n_particles, rng);
  std::vector<double> times(grid.steps + 1);
  for (std::size_t k = 0; k <= grid.steps; ++k) times[k] = grid.time(k);
  EmpiricalMeasure start = cloud_measure(model.m(), model.d(), res.initial_cloud);
  if (opt.initial == InitialGuess::centered) {
    Matrix a = start.atoms();
    a.rowwise() -= start.mean().transpose();
    start = EmpiricalMeasure::uniform(model.m(), model.d(), std::move(a));
  }
  MeasureFlow prev = MeasureFlow::constant(start, times, FlowKind::picard_iterate);

  double lambda = opt.lambda;
  std::size_t bad = 0;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    MeasureFlow next = detail::picard_map(model, prev, res.initial_cloud, grid, rng);
    PicardIterate pi;
    pi.index = it;
    pi.components = flow_distance_components(next, prev, opt.k, opt.var_mode, opt.diag_stride, opt.cap, &rng);
    res.iterates.push_back(std::move(pi));
    prev = std::move(next);

    if (lambda == 0.0 && res.iterates.size() == 2) {
      // C3 ~ lambda * ratio, maximized over a probe range
      double c3 = 0.0;
      for (double lp : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        const double l = lp / model.T();
        const double d0 = weighted_distance(res.iterates[0].components, l);
        if (d0 > 1e-12) c3 = std::max(c3, l * weighted_distance(res.iterates[1].components, l) / d0);
      }
      res.fitted_c3 = c3;
      lambda = c3 > 0 ? 4.0 * c3 : 1.0 / model.T();
    }
    const double l_now = lambda > 0 ? lambda : 1.0 / model.T();
    const double dist = weighted_distance(res.iterates.back().components, l_now);
    if (res.iterates.size() >= 2) {
      const double before = weighted_distance(res.iterates[res.iterates.size() - 2].components, l_now);
      bad = (before > 1e-12 && dist >= before) ? bad + 1 : 0;
    }
    if (dist <= opt.tol) {
      res.status = PicardStatus::converged;
      break;
    }
    if (bad >= 3) {
      res.status = PicardStatus::non_contraction;
      res.message = "weighted distance did not contract for 3 consecutive iterations; increase lambda";
      break;
    }
  }
  if (lambda == 0.0) lambda = 1.0 / model.T();
  res.lambda = lambda;
  for (auto& pi : res.iterates) pi.distance = weighted_distance(pi.components, lambda);
  res.ratios = contraction_ratios(res, lambda);
  res.flow = std::move(prev);
  return res;
}

// Mean and standard error of each coordinate of the cloud at time t.
inline std::vector<Estimate> cloud_mean(const EmpiricalMeasure& g) {
  std::vector<Estimate> out;
  std::vector<double> col(g.size());
  for (int j = 0; j < g.dim(); ++j) {
    for (std::size_t i = 0; i < g.size(); ++i) col[i] = g.atoms()(static_cast<Eigen::Index>(i), j);
    out.push_back(mean_estimate(col));
  }
  return out;
}

struct ConditionalMoments {
  double n = 2.0;
  std::vector<double> radii;
  std::vector<double> moment;  // E sup_t |X_t|^n from |x| = radius
  std::vector<double> se;
  LineFit fit;                 // log moment against log radius
};

namespace detail {

struct SupNormVisitor {
  int dim;
  double sup = 0.0;
  void step(std::size_t, double, const double* x, const double*, const double*, const MeasureSummary&) {
    sup = std::max(sup, norm2(x, static_cast<std::size_t>(dim)));
  }
  void finish(const double* x) { sup = std::max(sup, norm2(x, static_cast<std::size_t>(dim))); }
};

}  // namespace detail

// E(sup_t |X_t|^n | X_0 = r u) over a grid of radii along the unit direction u.
inline ConditionalMoments conditional_moments(const HamiltonianModel& model, const MeasureFlow& flow, double n, const std::vector<double>& radii,
                                              const Vector& direction, std::size_t n_paths, double dt, const RngPolicy& rng) {
  if (direction.size() != model.dim() || !(direction.norm() > 0)) throw std::invalid_argument("direction must be a nonzero state vector");
  const TimeGrid grid = TimeGrid::make(flow.horizon(), dt);
  const FrozenFlow ff = freeze_flow(model, flow, grid);
  const Propagator prop(model, grid, rng);
  const Vector u = direction / direction.norm();
  ConditionalMoments r;
  r.n = n;
  r.radii = radii;
  std::vector<double> vals(n_paths);
  for (double rad : radii) {
    parallel_for(n_paths, [&](std::size_t p) {
      Vector x = rad * u;
      detail::SupNormVisitor v{model.dim()};
      prop.run(p, x.data(), ff, v, grid.steps);
      vals[p] = std::pow(v.sup, n);
    });
    const Estimate e = mean_estimate(vals);
    r.moment.push_back(e.value);
    r.se.push_back(e.se);
  }
  r.fit = fit_loglog(r.radii, r.moment);
  return r;
}

}  // namespace mvh
