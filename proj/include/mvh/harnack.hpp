#pragma once

#include "coupling.hpp"
#include "metrics.hpp"
#include "wellposed.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mvh {

struct HarnackParams {
  std::size_t n_paths = 10000;
  std::size_t n_particles = 256;
  double dt = 0.01;
  std::size_t max_pairs = 16;
  std::size_t cap = 1024;
};

struct CouplingPair {
  std::size_t i = 0, j = 0;  // atom indices in gamma, gamma_tilde
  double weight = 0.0;
};

// Pairs from the optimal W2 plan between the initial laws.  Plans with more than
// max_pairs support points are replaced by max_pairs i.i.d. draws from the plan.
inline std::vector<CouplingPair> coupling_pairs(const EmpiricalMeasure& g, const EmpiricalMeasure& gt, std::size_t max_pairs, const RngPolicy& rng,
                                                std::size_t cap = 1024, double* w2 = nullptr) {
  if (max_pairs == 0) throw std::invalid_argument("max_pairs must be positive");
  const WassersteinResult ot = wasserstein(g, gt, w_cost(2.0), cap);
  if (w2) *w2 = ot.value;
  std::vector<CouplingPair> all;
  const Matrix& P = ot.plan.mass;
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (P(i, j) > 1e-15) all.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), P(i, j)});
  double tot = 0.0;
  for (auto& c : all) tot += c.weight;
  for (auto& c : all) c.weight /= tot;
  if (all.size() <= max_pairs) return all;
  std::vector<double> cdf(all.size());
  double s = 0.0;
  for (std::size_t k = 0; k < all.size(); ++k) cdf[k] = (s += all[k].weight);
  CounterEngine eng = rng.engine(Stream::pairs, 0);
  std::vector<CouplingPair> out;
  for (std::size_t k = 0; k < max_pairs; ++k) {
    const double u = eng.uniform() * s;
    std::size_t idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (idx >= all.size()) idx = all.size() - 1;
    CouplingPair c = all[idx];
    c.weight = 1.0 / static_cast<double>(max_pairs);
    out.push_back(c);
  }
  return out;
}

// Normalized weights R^ = R N / sum R in log form, so that equal log-weights give exactly 1.
inline std::vector<double> normalized_log_weights(const std::vector<double>& lw) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : lw) mx = std::max(mx, l);
  std::vector<double> e(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) e[i] = std::exp(lw[i] - mx);
  const double lme = mx + std::log(shifted_mean(e));
  std::vector<double> out(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) out[i] = lw[i] - lme;
  return out;
}

struct IdentityCheck {
  double lhs = 0.0, rhs = 0.0;
  bool holds = false;
};

// (1/N) sum R^ log f <= log((1/N) sum f) + (1/N) sum R^ log R^
inline IdentityCheck young_identity(const std::vector<double>& log_weight, const std::vector<double>& f) {
  if (log_weight.size() != f.size() || f.empty()) throw std::invalid_argument("young identity needs matching samples");
  const auto lr = normalized_log_weights(log_weight);
  std::vector<double> a(f.size()), b(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double r = std::exp(lr[i]);
    a[i] = r * std::log(f[i]);
    b[i] = r * lr[i];
  }
  IdentityCheck c;
  c.lhs = shifted_mean(a);
  c.rhs = std::log(shifted_mean(f)) + shifted_mean(b);
  c.holds = c.lhs <= c.rhs;
  return c;
}

// ((1/N) sum R^ f)^p <= ((1/N) sum f^p) ((1/N) sum R^{p/(p-1)})^{p-1}
inline IdentityCheck holder_identity(const std::vector<double>& log_weight, const std::vector<double>& f, double p) {
  if (log_weight.size() != f.size() || f.empty()) throw std::invalid_argument("holder identity needs matching samples");
  if (!(p > 1)) throw std::invalid_argument("p must exceed 1");
  const auto lr = normalized_log_weights(log_weight);
  const double q = p / (p - 1.0);
  std::vector<double> a(f.size()), b(f.size()), c(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    a[i] = std::exp(lr[i]) * f[i];
    b[i] = std::pow(f[i], p);
    c[i] = std::exp(q * lr[i]);
  }
  IdentityCheck r;
  r.lhs = std::pow(shifted_mean(a), p);
  r.rhs = shifted_mean(b) * std::pow(shifted_mean(c), p - 1.0);
  r.holds = r.lhs <= r.rhs;
  return r;
}

struct PairRow {
  SplitState x, y;
  double weight = 0.0;
  Estimate lhs, rhs;
  Estimate semigroup;         // P_t f(x) (log) or P_t f^p(x) (power)
  Estimate cost;              // (1/2) E_Q int |eta|^2
  double sup_int_eta_sq = 0.0;
  double ess = 0.0;
  bool degenerate = false;
  IdentityCheck identity;
  bool pass = false;
};

struct HarnackReport {
  std::string kind;  // "log" or "power"
  double t = 0.0;
  double p = 0.0;
  std::string f_desc, gamma_desc, gamma_tilde_desc;
  Estimate lhs, rhs;  // integrated over the coupling
  double slack = 0.0;
  bool pass = false;
  bool identities_hold = false;
  bool degenerate = false;
  double w2_initial = 0.0;
  double shape_constant = 0.0;  // integrated cost t^3 / W2^2
  std::vector<PairRow> pairs;
};

// lhs <= rhs at 3 combined standard errors
inline bool pass_3sigma(const Estimate& lhs, const Estimate& rhs) {
  return lhs.value - rhs.value <= 3.0 * std::sqrt(lhs.se * lhs.se + rhs.se * rhs.se);
}

using TestFunction = std::function<double(const SplitState&)>;

struct HarnackFlows {
  MeasureFlow gamma, gamma_tilde;
};

// Particle flows of both initial laws with common randomness.
inline HarnackFlows harnack_flows(const HamiltonianModel& model, const EmpiricalMeasure& g, const EmpiricalMeasure& gt, double t,
                                  const HarnackParams& prm, const RngPolicy& rng) {
  McKeanVlasovOptions o;
  o.horizon = t;
  return {simulate_mckean_vlasov(model, g, prm.n_particles, prm.dt, rng, o), simulate_mckean_vlasov(model, gt, prm.n_particles, prm.dt, rng, o)};
}

namespace detail {

struct PairRun {
  CoupledBundle cb;
  EntropyCost cost;
};

inline PairRun run_pair(const HamiltonianModel& model, const HarnackFlows& fl, const SplitState& x, const SplitState& y, double t,
                        const HarnackParams& prm, const RngPolicy& rng) {
  CouplingOptions o;
  o.horizon = t;
  PairRun r{harnack_coupling(model, fl.gamma, fl.gamma_tilde, x, y, prm.n_paths, prm.dt, rng, o), {}};
  r.cost = entropy_cost(r.cb);
  return r;
}

inline SplitState atom_state(const EmpiricalMeasure& g, std::size_t i) {
  return SplitState(g.m(), g.atoms().row(static_cast<Eigen::Index>(i)).transpose());
}

inline Estimate weighted_sum(const std::vector<PairRow>& rows, const std::function<Estimate(const PairRow&)>& get) {
  double v = 0.0, s = 0.0;
  for (const auto& r : rows) {
    const Estimate e = get(r);
    v += r.weight * e.value;
    s += r.weight * r.weight * e.se * e.se;
  }
  return {v, std::sqrt(s)};
}

}  // namespace detail

inline HarnackReport log_harnack_check(const HamiltonianModel& model, const HarnackFlows& flows, const EmpiricalMeasure& g,
                                       const EmpiricalMeasure& gt, const TestFunction& f, double t, const HarnackParams& prm,
                                       const RngPolicy& rng) {
  HarnackReport rep;
  rep.kind = "log";
  rep.t = t;
  const auto pairs = coupling_pairs(g, gt, prm.max_pairs, rng, prm.cap, &rep.w2_initial);
  rep.pairs.resize(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    PairRow& row = rep.pairs[k];
    row.x = detail::atom_state(g, pairs[k].i);
    row.y = detail::atom_state(gt, pairs[k].j);
    row.weight = pairs[k].weight;
    const detail::PairRun run = detail::run_pair(model, flows, row.x, row.y, t, prm, rng.derive(k + 1));
    const std::size_t n = run.cb.n_paths();
    std::vector<double> fv(n), rlog(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = f(run.cb.base.terminal_split(i));
      if (!(v > 0) || !std::isfinite(v)) throw std::domain_error("log-Harnack needs f > 0 and finite on reachable states");
      fv[i] = v;
      rlog[i] = std::exp(run.cb.log_weight()[i]) * std::log(v);
    }
    const Estimate pf = mean_estimate(fv);
    row.semigroup = pf;
    row.lhs = mean_estimate(rlog);
    row.cost = run.cost.half_int_eta_sq_Q;
    row.sup_int_eta_sq = run.cost.sup_path_int_eta_sq;
    row.ess = run.cost.ess;
    row.degenerate = run.cost.degenerate;
    row.rhs = {std::log(pf.value) + row.cost.value, std::hypot(pf.se / pf.value, row.cost.se)};
    row.pass = pass_3sigma(row.lhs, row.rhs);
    row.identity = young_identity(run.cb.log_weight(), fv);
  }
  // sum pi a <= log sum pi P f + sum pi cost
  const Estimate a = detail::weighted_sum(rep.pairs, [](const PairRow& r) { return r.lhs; });
  const Estimate pf = detail::weighted_sum(rep.pairs, [](const PairRow& r) { return r.semigroup; });
  const Estimate c = detail::weighted_sum(rep.pairs, [](const PairRow& r) { return r.cost; });
  rep.lhs = a;
  rep.rhs = {std::log(pf.value) + c.value, std::hypot(pf.se / pf.value, c.se)};
  rep.slack = rep.rhs.value - rep.lhs.value;
  rep.identities_hold = true;
  bool all_pairs = true;
  for (const auto& r : rep.pairs) {
    rep.identities_hold = rep.identities_hold && r.identity.holds;
    all_pairs = all_pairs && r.pass;
    rep.degenerate = rep.degenerate || r.degenerate;
  }
  rep.pass = all_pairs && pass_3sigma(rep.lhs, rep.rhs);
  rep.shape_constant = rep.w2_initial > 0 ? c.value * t * t * t / (rep.w2_initial * rep.w2_initial) : 0.0;
  return rep;
}

inline HarnackReport log_harnack_check(const HamiltonianModel& model, const EmpiricalMeasure& g, const EmpiricalMeasure& gt, const TestFunction& f,
                                       double t, const HarnackParams& prm, const RngPolicy& rng) {
  return log_harnack_check(model, harnack_flows(model, g, gt, t, prm, rng), g, gt, f, t, prm, rng);
}

inline HarnackReport power_harnack_check(const HamiltonianModel& model, const HarnackFlows& flows, const EmpiricalMeasure& g,
                                         const EmpiricalMeasure& gt, const TestFunction& f, double p, double t, const HarnackParams& prm,
                                         const RngPolicy& rng) {
  if (!(p > 1)) throw std::invalid_argument("power-Harnack needs p > 1");
  HarnackReport rep;
  rep.kind = "power";
  rep.t = t;
  rep.p = p;
  const auto pairs = coupling_pairs(g, gt, prm.max_pairs, rng, prm.cap, &rep.w2_initial);
  rep.pairs.resize(pairs.size());
  const double expo = p / (2.0 * (p - 1.0));
  std::vector<double> a_val(pairs.size()), a_se(pairs.size()), b_val(pairs.size()), b_se(pairs.size()), F(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    PairRow& row = rep.pairs[k];
    row.x = detail::atom_state(g, pairs[k].i);
    row.y = detail::atom_state(gt, pairs[k].j);
    row.weight = pairs[k].weight;
    const detail::PairRun run = detail::run_pair(model, flows, row.x, row.y, t, prm, rng.derive(k + 1));
    const std::size_t n = run.cb.n_paths();
    std::vector<double> fv(n), rf(n), fp(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = f(run.cb.base.terminal_split(i));
      if (!(v >= 0) || !std::isfinite(v)) throw std::domain_error("power-Harnack needs f >= 0 and finite on reachable states");
      fv[i] = v;
      rf[i] = std::exp(run.cb.log_weight()[i]) * v;
      fp[i] = std::pow(v, p);
    }
    const Estimate a = mean_estimate(rf), b = mean_estimate(fp);
    row.semigroup = b;
    row.cost = run.cost.half_int_eta_sq_Q;
    row.sup_int_eta_sq = run.cost.sup_path_int_eta_sq;
    row.ess = run.cost.ess;
    row.degenerate = run.cost.degenerate;
    F[k] = std::exp(expo * row.sup_int_eta_sq);
    row.lhs = {std::pow(a.value, p), p * std::pow(a.value, p - 1.0) * a.se};
    row.rhs = {b.value * F[k], b.se * F[k]};
    row.pass = pass_3sigma(row.lhs, row.rhs);
    row.identity = holder_identity(run.cb.log_weight(), fv, p);
    a_val[k] = a.value;
    a_se[k] = a.se;
    b_val[k] = b.value;
    b_se[k] = b.se;
  }
  // (sum pi a)^p <= (sum pi b) (sum pi F^{1/(p-1)})^{p-1}
  double A = 0.0, Ase = 0.0, B = 0.0, Bse = 0.0, G = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const double w = rep.pairs[k].weight;
    A += w * a_val[k];
    Ase += w * w * a_se[k] * a_se[k];
    B += w * b_val[k];
    Bse += w * w * b_se[k] * b_se[k];
    G += w * std::pow(F[k], 1.0 / (p - 1.0));
  }
  const double Gp = std::pow(G, p - 1.0);
  rep.lhs = {std::pow(A, p), p * std::pow(A, p - 1.0) * std::sqrt(Ase)};
  rep.rhs = {B * Gp, std::sqrt(Bse) * Gp};
  rep.slack = rep.rhs.value - rep.lhs.value;
  rep.identities_hold = true;
  bool all_pairs = true;
  for (const auto& r : rep.pairs) {
    rep.identities_hold = rep.identities_hold && r.identity.holds;
    all_pairs = all_pairs && r.pass;
    rep.degenerate = rep.degenerate || r.degenerate;
  }
  rep.pass = all_pairs && pass_3sigma(rep.lhs, rep.rhs);
  double cost = 0.0;
  for (const auto& r : rep.pairs) cost += r.weight * r.cost.value;
  rep.shape_constant = rep.w2_initial > 0 ? cost * t * t * t / (rep.w2_initial * rep.w2_initial) : 0.0;
  return rep;
}

inline HarnackReport power_harnack_check(const HamiltonianModel& model, const EmpiricalMeasure& g, const EmpiricalMeasure& gt, const TestFunction& f,
                                         double p, double t, const HarnackParams& prm, const RngPolicy& rng) {
  return power_harnack_check(model, harnack_flows(model, g, gt, t, prm, rng), g, gt, f, p, t, prm, rng);
}

// Shared axis-aligned box split into bins^dim cells.
struct HistogramBox {
  Vector lo, hi;
  std::size_t bins = 8;
};

inline HistogramBox bounding_box(const EmpiricalMeasure& a, const EmpiricalMeasure& b, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("bins must be positive");
  HistogramBox box;
  box.lo = a.atoms().colwise().minCoeff().transpose().cwiseMin(b.atoms().colwise().minCoeff().transpose());
  box.hi = a.atoms().colwise().maxCoeff().transpose().cwiseMax(b.atoms().colwise().maxCoeff().transpose());
  for (Eigen::Index j = 0; j < box.lo.size(); ++j)
    if (!(box.hi(j) > box.lo(j))) box.hi(j) = box.lo(j) + 1.0;
  box.bins = bins;
  return box;
}

struct HistogramTV {
  double tv = 0.0;  // sum over cells |p - q|
  double se = 0.0;
  std::map<std::vector<std::size_t>, std::pair<double, double>> cells;
};

// Cell masses are accumulated as exact weights; for uniform clouds the L1 distance is exact in
// integer arithmetic, which keeps refinement monotonicity free of rounding.
inline HistogramTV histogram_tv(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const HistogramBox& box) {
  if (a.dim() != b.dim() || box.lo.size() != a.dim()) throw std::invalid_argument("histogram dimension mismatch");
  const int dim = a.dim();
  auto cell = [&](const Matrix& atoms, Eigen::Index i) {
    std::vector<std::size_t> c(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j) {
      const double u = (atoms(i, j) - box.lo(j)) / (box.hi(j) - box.lo(j));
      const double s = std::floor(u * static_cast<double>(box.bins));
      c[static_cast<std::size_t>(j)] = s < 0 ? 0 : std::min(box.bins - 1, static_cast<std::size_t>(s));
    }
    return c;
  };
  HistogramTV h;
  std::map<std::vector<std::size_t>, std::pair<std::int64_t, std::int64_t>> counts;
  bool uniform = true;
  for (std::size_t i = 0; i < a.size(); ++i) uniform = uniform && a.weight(i) == a.weight(0);
  for (std::size_t i = 0; i < b.size(); ++i) uniform = uniform && b.weight(i) == b.weight(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto c = cell(a.atoms(), static_cast<Eigen::Index>(i));
    h.cells[c].first += a.weight(i);
    counts[c].first += 1;
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto c = cell(b.atoms(), static_cast<Eigen::Index>(i));
    h.cells[c].second += b.weight(i);
    counts[c].second += 1;
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double var = 0.0;
  if (uniform) {
    std::int64_t num = 0;
    const auto NA = static_cast<std::int64_t>(a.size()), NB = static_cast<std::int64_t>(b.size());
    for (const auto& [c, k] : counts) num += std::llabs(k.first * NB - k.second * NA);
    h.tv = static_cast<double>(num) / (na * nb);
  } else {
    for (const auto& [c, m] : h.cells) h.tv += std::abs(m.first - m.second);
  }
  for (const auto& [c, m] : h.cells) var += m.first * (1.0 - m.first) / na + m.second * (1.0 - m.second) / nb;
  h.tv = std::min(h.tv, 2.0);
  h.se = std::sqrt(var);
  return h;
}

struct TVEntropyReport {
  double t = 0.0;
  double tv = 0.0, tv_se = 0.0;
  Estimate entropy_upper;  // sum pi (1/2) E_Q int |eta|^2
  double lhs = 0.0, rhs = 0.0, sigma = 0.0;
  bool pass = false;
  bool degenerate = false;
  double w2_initial = 0.0;
  double shape_constant = 0.0;
  std::size_t bins = 0;
};

inline TVEntropyReport tv_entropy_check(const HamiltonianModel& model, const HarnackFlows& flows, const EmpiricalMeasure& g,
                                        const EmpiricalMeasure& gt, double t, std::size_t bins, const HarnackParams& prm, const RngPolicy& rng) {
  TVEntropyReport r;
  r.t = t;
  r.bins = bins;
  const EmpiricalMeasure &ca = flows.gamma.at(t), &cb = flows.gamma_tilde.at(t);
  const HistogramTV h = histogram_tv(ca, cb, bounding_box(ca, cb, bins));
  r.tv = h.tv;
  r.tv_se = h.se;
  const auto pairs = coupling_pairs(g, gt, prm.max_pairs, rng, prm.cap, &r.w2_initial);
  double v = 0.0, s = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const detail::PairRun run =
        detail::run_pair(model, flows, detail::atom_state(g, pairs[k].i), detail::atom_state(gt, pairs[k].j), t, prm, rng.derive(k + 1));
    v += pairs[k].weight * run.cost.half_int_eta_sq_Q.value;
    s += pairs[k].weight * pairs[k].weight * run.cost.half_int_eta_sq_Q.se * run.cost.half_int_eta_sq_Q.se;
    r.degenerate = r.degenerate || run.cost.degenerate;
  }
  r.entropy_upper = {v, std::sqrt(s)};
  r.lhs = r.tv * r.tv;
  r.rhs = 2.0 * v;
  r.sigma = std::hypot(2.0 * r.tv * r.tv_se, 2.0 * r.entropy_upper.se);
  r.pass = r.lhs <= r.rhs + 3.0 * r.sigma;
  r.shape_constant = r.w2_initial > 0 ? v * t * t * t / (r.w2_initial * r.w2_initial) : 0.0;
  return r;
}

inline TVEntropyReport tv_entropy_check(const HamiltonianModel& model, const EmpiricalMeasure& g, const EmpiricalMeasure& gt, double t,
                                        std::size_t bins, const HarnackParams& prm, const RngPolicy& rng) {
  return tv_entropy_check(model, harnack_flows(model, g, gt, t, prm, rng), g, gt, t, bins, prm, rng);
}

struct CostSweep {
  std::vector<double> times;
  std::vector<double> sup_int_eta_sq;
  std::vector<Estimate> half_int_eta_sq_Q;
  LineFit sup_fit, mean_fit;  // log-log against t
};

// Entropy cost from fixed x != y over a grid of horizons; flows must cover the largest t.
inline CostSweep entropy_sweep(const HamiltonianModel& model, const MeasureFlow& fg, const MeasureFlow& fgt, const SplitState& x,
                               const SplitState& y, const std::vector<double>& t_grid, std::size_t n_paths, double dt, const RngPolicy& rng) {
  CostSweep s;
  s.times = t_grid;
  std::vector<double> means;
  for (double t : t_grid) {
    CouplingOptions o;
    o.horizon = t;
    const EntropyCost e = entropy_cost(harnack_coupling(model, fg, fgt, x, y, n_paths, dt, rng, o));
    s.sup_int_eta_sq.push_back(e.sup_path_int_eta_sq);
    s.half_int_eta_sq_Q.push_back(e.half_int_eta_sq_Q);
    means.push_back(e.half_int_eta_sq_Q.value);
  }
  s.sup_fit = fit_loglog(s.times, s.sup_int_eta_sq);
  s.mean_fit = fit_loglog(s.times, means);
  return s;
}

struct StabilityRow {
  double t = 0.0;
  double w2 = 0.0, wba = 0.0;
  double ratio_w2 = 0.0, ratio_wba = 0.0;
  double shape = 0.0;  // alpha(sqrt t)/sqrt t + t^{3(beta-1)/2}
};

struct StabilityTable {
  double w2_initial = 0.0;
  std::vector<StabilityRow> rows;
  double sup_ratio_w2 = 0.0;
  LineFit wba_fit;  // ratio_wba = c * shape
};

inline double stability_shape(double t, double beta, const DiniModulus& alpha) {
  const double r = std::sqrt(t);
  return alpha.eval(r) / r + std::pow(t, 1.5 * (beta - 1.0));
}

inline StabilityTable stability_study(const HamiltonianModel& model, const HarnackFlows& flows, const EmpiricalMeasure& g,
                                      const EmpiricalMeasure& gt, const std::vector<double>& t_grid, const HarnackParams& prm,
                                      const RngPolicy& rng) {
  StabilityTable tab;
  tab.w2_initial = wasserstein(g, gt, w_cost(2.0), prm.cap).value;
  const CostSpec c2 = w_cost(2.0), cba = rho_cost(model.beta(), model.modulus());
  const std::size_t n = flows.gamma.measure(0).size();
  std::vector<std::size_t> subset;
  if (2 * n > prm.cap) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    CounterEngine eng = rng.engine(Stream::subsample, 1);
    for (std::size_t i = 0; i + 1 < n; ++i) std::swap(perm[i], perm[i + eng.below(n - i)]);
    perm.resize(prm.cap / 2);
    std::sort(perm.begin(), perm.end());
    subset = std::move(perm);
  }
  tab.rows.resize(t_grid.size());
  parallel_for(t_grid.size(), [&](std::size_t k) {
    const double t = t_grid[k];
    EmpiricalMeasure a = flows.gamma.at(t), b = flows.gamma_tilde.at(t);
    if (!subset.empty()) {
      a = detail::restrict_atoms(a, subset);
      b = detail::restrict_atoms(b, subset);
    }
    StabilityRow& row = tab.rows[k];
    row.t = t;
    row.w2 = wasserstein(a, b, c2, prm.cap).value;
    row.wba = wasserstein(a, b, cba, prm.cap).value;
    row.ratio_w2 = tab.w2_initial > 0 ? row.w2 / tab.w2_initial : 0.0;
    row.ratio_wba = tab.w2_initial > 0 ? row.wba / tab.w2_initial : 0.0;
    row.shape = stability_shape(t, model.beta(), model.modulus());
  });
  std::vector<double> sh, ra;
  for (const auto& r : tab.rows) {
    tab.sup_ratio_w2 = std::max(tab.sup_ratio_w2, r.ratio_w2);
    sh.push_back(r.shape);
    ra.push_back(r.ratio_wba);
  }
  if (!sh.empty()) tab.wba_fit = fit_through_origin(sh, ra);
  return tab;
}

inline StabilityTable stability_study(const HamiltonianModel& model, const EmpiricalMeasure& g, const EmpiricalMeasure& gt,
                                      const std::vector<double>& t_grid, const HarnackParams& prm, const RngPolicy& rng) {
  if (t_grid.empty()) throw std::invalid_argument("empty t-grid");
  const double tmax = *std::max_element(t_grid.begin(), t_grid.end());
  return stability_study(model, harnack_flows(model, g, gt, tmax, prm, rng), g, gt, t_grid, prm, rng);
}

struct ConcaveHolder {
  double lhs = 0.0, rhs = 0.0;
  bool holds = false;
};

// E[alpha(xi) eta] <= ||eta||_p alpha(||xi||_{p/(p-1)}) on the empirical measure of the samples.
inline ConcaveHolder concave_holder_check(const DiniModulus& alpha, const std::vector<double>& xi, const std::vector<double>& eta, double p) {
  if (xi.size() != eta.size() || xi.empty()) throw std::invalid_argument("samples must match");
  if (!(p >= 1)) throw std::invalid_argument("p must be >= 1");
  const double n = static_cast<double>(xi.size());
  double lhs = 0.0, np = 0.0, nq = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (xi[i] < 0 || eta[i] < 0) throw std::invalid_argument("samples must be non-negative");
    lhs += alpha.eval(xi[i]) * eta[i];
  }
  lhs /= n;
  if (p == 1.0) {
    for (double e : eta) np += e;
    np /= n;
    nq = *std::max_element(xi.begin(), xi.end());
  } else {
    const double q = p / (p - 1.0);
    for (std::size_t i = 0; i < xi.size(); ++i) {
      np += std::pow(eta[i], p);
      nq += std::pow(xi[i], q);
    }
    np = std::pow(np / n, 1.0 / p);
    nq = std::pow(nq / n, 1.0 / q);
  }
  ConcaveHolder r;
  r.lhs = lhs;
  r.rhs = np * alpha.eval(nq);
  r.holds = r.lhs <= r.rhs * (1.0 + 1e-12);
  return r;
}

}  // namespace mvh
