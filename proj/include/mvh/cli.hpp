#pragma once

#include "config.hpp"
#include "coupling.hpp"
#include "harnack.hpp"
#include "metrics.hpp"
#include "moduli.hpp"
#include "parallel.hpp"
#include "simulate.hpp"
#include "wellposed.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace mvh::cli {

enum ExitCode { kPass = 0, kFail = 1, kWarn = 2, kUsage = 3 };

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"validate", "simulate", "picard", "bismut", "harnack", "metrics", "study"};
  return s;
}

struct RunOptions {
  std::string output_dir;  // overrides the config when non-empty
  bool plot_data = false;
  int threads = -1;  // -1 keeps the config value
  std::ostream* log = &std::cout;
};

struct Outcome {
  bool any_fail = false;
  bool any_warn = false;
  bool identities_checked = false;
  bool identities_hold = true;
  std::vector<std::string> lines;
  std::vector<std::filesystem::path> files;
  std::ostream* log = nullptr;

  int exit_code() const { return any_fail ? kFail : any_warn ? kWarn : kPass; }

  void line(const std::string& tag, const std::string& name, const std::string& detail) {
    std::string s = "[" + tag + "] " + name + (detail.empty() ? "" : ": " + detail);
    if (log) *log << s << "\n";
    lines.push_back(std::move(s));
  }
  void check(const std::string& name, bool pass, const std::string& detail) {
    if (!pass) any_fail = true;
    line(pass ? "PASS" : "FAIL", name, detail);
  }
  void warn(const std::string& name, const std::string& detail) {
    any_warn = true;
    line("WARN", name, detail);
  }
  void info(const std::string& name, const std::string& detail) { line("INFO", name, detail); }
};

inline std::string num(double v) { return format_double(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }
inline std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}
inline std::string flag(bool b) { return b ? "true" : "false"; }

inline std::string joined_vector(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v(i));
  return s;
}

class Csv {
 public:
  Csv(const std::filesystem::path& p, const std::vector<std::string>& header, Outcome& out) : os_(p) {
    if (!os_) throw std::runtime_error("cannot write " + p.string());
    out.files.push_back(p);
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << "\n";
  }

 private:
  std::ofstream os_;
};

// Two-column series for external plotting.
inline void plot_series(const std::filesystem::path& dir, const std::string& name, const std::string& xn, const std::string& yn,
                        const std::vector<double>& x, const std::vector<double>& y, Outcome& out) {
  Csv c(dir / ("plot_" + name + ".csv"), {xn, yn}, out);
  for (std::size_t i = 0; i < x.size(); ++i) c.row({num(x[i]), num(y[i])});
}

struct NamedFunction {
  std::string desc;
  std::string kind;  // x1, x2, const, gauss2, bump
  int index = 0;
  double value = 1.0;
  StateFunction f;
};

inline NamedFunction parse_function(const Node& n, int m, int d) {
  NamedFunction nf;
  const bool bare = n.raw().is_string();
  nf.kind = bare ? n.string() : n.at("name").string();
  nf.index = bare ? 0 : static_cast<int>(n.unsigned_int("index", 0));
  if (nf.kind == "x1" || nf.kind == "x2") {
    const int lim = nf.kind == "x1" ? m : d;
    if (nf.index >= lim) throw ConfigError(n.path(), "component index out of range");
    const int off = nf.kind == "x1" ? nf.index : m + nf.index;
    nf.f = [off](const SplitState& s) { return s.joined()(off); };
    nf.desc = nf.kind + "[" + std::to_string(nf.index) + "]";
  } else if (nf.kind == "const") {
    nf.value = bare ? 1.0 : n.number("value", 1.0);
    const double c = nf.value;
    nf.f = [c](const SplitState&) { return c; };
    nf.desc = "const(" + short_num(c) + ")";
  } else if (nf.kind == "gauss2") {
    nf.value = bare ? 0.1 : n.number("offset", 0.1);
    const double c = nf.value;
    nf.f = [c](const SplitState& s) { return c + std::exp(-s.second().squaredNorm()); };
    nf.desc = "gauss2(" + short_num(c) + ")";
  } else if (nf.kind == "bump") {
    nf.f = [](const SplitState& s) { return std::exp(-s.joined().squaredNorm()); };
    nf.desc = "bump";
  } else {
    throw ConfigError(n.path(), "unknown function '" + nf.kind + "' (x1, x2, const, gauss2, bump)");
  }
  return nf;
}

inline std::vector<NamedFunction> parse_functions(const Node& sec, const std::string& key, int m, int d, const std::vector<std::string>& fallback) {
  std::vector<NamedFunction> out;
  if (sec.has(key)) {
    const Node l = sec.at(key);
    for (std::size_t i = 0; i < l.size(); ++i) out.push_back(parse_function(l.at(i), m, d));
  } else {
    for (const auto& s : fallback) {
      const Json j = s;
      out.push_back(parse_function(Node(j, sec.path() + "." + key), m, d));
    }
  }
  return out;
}

inline SplitState parse_state(const Node& sec, const std::string& key, const SplitState& fallback) {
  if (!sec.has(key)) return fallback;
  const Vector v = sec.at(key).vector();
  if (v.size() != fallback.dim()) throw ConfigError(sec.path() + "." + key, "expected " + std::to_string(fallback.dim()) + " coordinates");
  return SplitState(fallback.m(), v);
}

// Grid k T / n for k = 1..n, snapped to multiples of dt.
inline std::vector<double> default_t_grid(double T, double dt, std::size_t n) {
  std::vector<double> g;
  for (std::size_t k = 1; k <= n; ++k) {
    const double t = std::round(static_cast<double>(k) * T / static_cast<double>(n) / dt) * dt;
    if (t > 0 && (g.empty() || t > g.back())) g.push_back(t);
  }
  return g;
}

inline std::vector<double> parse_t_grid(const Node& sec, const std::string& key, double T, double dt, std::size_t n) {
  if (!sec.has(key)) return default_t_grid(T, dt, n);
  const auto g = sec.at(key).numbers();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0) || g[i] > T + 1e-12) throw ConfigError(sec.path() + "." + key, "times must lie in (0, T]");
    if (std::abs(std::round(g[i] / dt) * dt - g[i]) > 1e-9) throw ConfigError(sec.path() + "." + key, "times must be multiples of dt");
    if (i && !(g[i] > g[i - 1])) throw ConfigError(sec.path() + "." + key, "times must increase");
  }
  return g;
}

inline SplitState first_atom(const EmpiricalMeasure& g) { return SplitState(g.m(), g.atoms().row(0).transpose()); }

// Flow used as the frozen measure argument: constant for measure-independent drifts, particles otherwise.
inline MeasureFlow reference_flow(const RunConfig& c, const EmpiricalMeasure& init, double horizon, const RngPolicy& rng) {
  const HamiltonianModel& model = *c.model;
  const TimeGrid grid = TimeGrid::make(horizon, c.sim.dt);
  if (model.measure_independent()) return MeasureFlow::constant(init, {0.0, grid.horizon()});
  McKeanVlasovOptions o;
  o.horizon = horizon;
  return simulate_mckean_vlasov(model, init, c.sim.n_particles, c.sim.dt, rng, o);
}

inline void run_validate(const RunConfig& c, const std::filesystem::path& dir, Outcome& out) {
  const Node sec = c.checks("validate");
  AssumptionProbe probe;
  probe.n_t = static_cast<int>(sec.unsigned_int("n_t", 16));
  probe.n_x = static_cast<int>(sec.unsigned_int("n_x", 16));
  probe.n_meas = static_cast<int>(sec.unsigned_int("n_meas", 8));
  probe.fd_eps = sec.number("fd_eps", 1e-5);
  probe.seed = c.sim.seed;
  const AssumptionReport rep = validate_assumptions(*c.model, probe);
  {
    Csv csv(dir / "assumptions.csv", {"check", "value", "threshold", "pass", "note"}, out);
    for (const auto& a : rep.checks) csv.row({a.name, num(a.value), num(a.threshold), flag(a.pass), a.note});
  }
  const ModulusValidation mv = validate(c.model->modulus(), static_cast<int>(sec.unsigned_int("modulus_grid", 64)));
  {
    Csv csv(dir / "modulus.csv", {"check", "pass", "worst"}, out);
    for (const auto& m : mv.checks) csv.row({m.name, flag(m.pass), num(m.worst)});
  }
  for (const auto& a : rep.checks) out.check("validate." + a.name, a.pass, num(a.value) + " vs " + num(a.threshold));
  out.check("validate.modulus", mv.usable(), c.model->modulus().describe());
}

inline void run_simulate(const RunConfig& c, const std::filesystem::path& dir, const RunOptions& ro, Outcome& out) {
  const HamiltonianModel& model = *c.model;
  const Node sec = c.checks("simulate");
  const RngPolicy rng(c.sim.seed);
  const double k = sec.number("moment_order", 2.0);
  McKeanVlasovOptions o;
  o.record_stride = sec.unsigned_int("record_stride", 1);
  const MeasureFlow flow = simulate_mckean_vlasov(model, c.initial, c.sim.n_particles, c.sim.dt, rng, o);
  const FlowMoments fm = moment_report(flow, k);
  {
    Csv csv(dir / "flow_moments.csv", {"t", "moment"}, out);
    for (std::size_t i = 0; i < fm.times.size(); ++i) csv.row({num(fm.times[i]), num(fm.moment[i])});
  }
  write_measure_csv((dir / "terminal_cloud.csv").string(), flow.measure(flow.size() - 1));
  out.files.push_back(dir / "terminal_cloud.csv");
  out.check("simulate.flow_finite", std::isfinite(fm.sup), "sup moment " + num(fm.sup) + ", growth constant " + num(fm.growth_constant));

  const SplitState x = parse_state(sec, "start", first_atom(c.initial));
  const auto tg = parse_t_grid(sec, "t_grid", model.T(), c.sim.dt, 8);
  const double p = sec.number("path_moment_order", 2.0);
  const PathMoments pm = moment_report(model, flow, x, p, tg, c.sim.n_paths, c.sim.dt, rng);
  {
    Csv csv(dir / "path_moments.csv", {"t", "first", "first_se", "second", "second_se"}, out);
    for (std::size_t i = 0; i < pm.times.size(); ++i)
      csv.row({num(pm.times[i]), num(pm.first[i]), num(pm.first_se[i]), num(pm.second[i]), num(pm.second_se[i])});
  }
  out.info("simulate.first_slope", num(pm.first_fit.slope) + " (scale exponent " + num(1.5 * p) + ")");
  out.info("simulate.second_slope", num(pm.second_fit.slope) + " (scale exponent " + num(0.5 * p) + ")");
  if (ro.plot_data) {
    plot_series(dir, "flow_moments", "t", "moment", fm.times, fm.moment, out);
    plot_series(dir, "path_moment_first", "t", "first", pm.times, pm.first, out);
    plot_series(dir, "path_moment_second", "t", "second", pm.times, pm.second, out);
  }
}

inline void run_picard(const RunConfig& c, const std::filesystem::path& dir, const RunOptions& ro, Outcome& out) {
  const HamiltonianModel& model = *c.model;
  const Node sec = c.checks("picard");
  PicardOptions o;
  o.k = sec.number("k", 2.0);
  o.lambda = sec.number("lambda", 0.0);
  o.tol = sec.number("tol", 1e-8);
  o.max_iter = sec.unsigned_int("max_iter", 30);
  o.n_particles = c.sim.n_particles;
  o.dt = c.sim.dt;
  o.diag_stride = sec.unsigned_int("diag_stride", 10);
  const std::string vm = sec.string("var_mode", "matched");
  if (vm != "matched" && vm != "exact") throw ConfigError(sec.path() + ".var_mode", "expected matched or exact");
  o.var_mode = vm == "exact" ? VarMode::exact : VarMode::matched;
  const std::string ig = sec.string("initial_guess", "constant");
  if (ig != "constant" && ig != "centered") throw ConfigError(sec.path() + ".initial_guess", "expected constant or centered");
  o.initial = ig == "centered" ? InitialGuess::centered : InitialGuess::constant;
  const PicardResult r = picard_solve(model, c.initial, RngPolicy(c.sim.seed), o);
  {
    Csv csv(dir / "picard_iterations.csv", {"iterate", "t", "wk", "var_proxy", "weighted"}, out);
    for (const auto& it : r.iterates)
      for (std::size_t j = 0; j < it.components.times.size(); ++j) {
        const double t = it.components.times[j];
        csv.row({num(it.index), num(t), num(it.components.wk[j]), num(it.components.var[j]),
                 num(std::exp(-r.lambda * t) * (it.components.wk[j] + it.components.var[j]))});
      }
  }
  std::vector<double> lambdas{r.lambda, 2 * r.lambda, 4 * r.lambda};
  if (sec.has("lambda_sweep")) lambdas = sec.at("lambda_sweep").numbers();
  {
    Csv csv(dir / "picard_lambda.csv", {"lambda", "max_ratio", "n_ratios"}, out);
    for (double l : lambdas) csv.row({num(l), num(contraction_ratio(r, l)), num(contraction_ratios(r, l).size())});
  }
  const EmpiricalMeasure& term = r.flow.measure(r.flow.size() - 1);
  const auto mean = cloud_mean(term);
  {
    Csv csv(dir / "picard_mean.csv", {"coordinate", "mean", "se"}, out);
    for (std::size_t j = 0; j < mean.size(); ++j) csv.row({num(j), num(mean[j].value), num(mean[j].se)});
  }
  const FlowMoments fm = moment_report(r.flow, o.k);
  const double last = r.iterates.empty() ? 0.0 : r.iterates.back().distance;
  const std::string detail = "status " + picard_status_name(r.status) + ", iterations " + num(r.iterates.size()) + ", lambda " + num(r.lambda) +
                             ", final distance " + num(last);
  if (r.status == PicardStatus::non_contraction) {
    out.check("picard.contraction", false, detail + "; " + r.message);
  } else if (r.status == PicardStatus::max_iter) {
    out.warn("picard.contraction", detail + "; tolerance not reached");
  } else {
    out.check("picard.contraction", true, detail);
  }
  out.info("picard.fitted_c3", num(r.fitted_c3));
  out.info("picard.moment_growth_constant", num(fm.growth_constant));
  if (ro.plot_data) {
    std::vector<double> xs, ys;
    for (const auto& it : r.iterates) {
      xs.push_back(static_cast<double>(it.index));
      ys.push_back(it.distance);
    }
    plot_series(dir, "picard_distance", "iterate", "distance", xs, ys, out);
  }
}

// Closed-form gradient for zero drift and linear or constant f.
inline std::optional<double> zero_drift_gradient(const HamiltonianModel& model, const NamedFunction& f, const SplitState& h, double t) {
  if (!std::holds_alternative<ZeroDrift>(model.drift())) return std::nullopt;
  if (f.kind == "const") return 0.0;
  if (f.kind == "x2") return h.second()(f.index);
  if (f.kind == "x1") return h.first()(f.index) + t * (model.M() * h.second())(f.index);
  return std::nullopt;
}

inline void run_bismut(const RunConfig& c, const std::filesystem::path& dir, const RunOptions& ro, Outcome& out) {
  const HamiltonianModel& model = *c.model;
  const Node sec = c.checks("bismut");
  const int m = model.m(), d = model.d(), n = model.dim();
  const RngPolicy rng(c.sim.seed);
  const double t = sec.number("t", model.T());
  const double fd_eps = sec.number("fd_eps", 1e-3);
  const SplitState x = parse_state(sec, "start", first_atom(c.initial));
  const auto fs = parse_functions(sec, "functions", m, d, {"x1", "x2"});
  std::vector<SplitState> hs;
  if (sec.has("directions")) {
    const Node l = sec.at("directions");
    for (std::size_t i = 0; i < l.size(); ++i) {
      const Vector v = l.at(i).vector();
      if (v.size() != n) throw ConfigError(l.at(i).path(), "expected " + std::to_string(n) + " coordinates");
      hs.emplace_back(m, v);
    }
  } else {
    for (int i = 0; i < n; ++i) hs.emplace_back(m, Vector::Unit(n, i));
  }
  const MeasureFlow flow = reference_flow(c, c.initial, t, rng);
  std::vector<StateFunction> fv;
  for (const auto& f : fs) fv.push_back(f.f);
  Csv csv(dir / "bismut.csv", {"t", "function", "h", "estimate", "stderr", "oracle", "oracle_se", "oracle_kind", "pass"}, out);
  std::vector<double> plot_est, plot_or;
  for (std::size_t hi = 0; hi < hs.size(); ++hi) {
    const auto est = bismut_gradient(model, flow, x, fv, hs[hi], c.sim.n_paths, c.sim.dt, rng, t);
    for (std::size_t fi = 0; fi < fs.size(); ++fi) {
      Estimate oracle;
      std::string kind = "closed_form";
      if (auto z = zero_drift_gradient(model, fs[fi], hs[hi], t)) {
        oracle = {*z, 0.0};
      } else {
        oracle = fd_gradient(model, flow, x, fs[fi].f, hs[hi], fd_eps, c.sim.n_paths, c.sim.dt, rng, t);
        kind = "fd_crn";
      }
      const double tol = 3.0 * std::hypot(est[fi].se, oracle.se) + 5.0 * c.sim.dt;
      const bool pass = std::abs(est[fi].value - oracle.value) <= tol;
      csv.row({num(t), fs[fi].desc, joined_vector(hs[hi].joined()), num(est[fi].value), num(est[fi].se), num(oracle.value), num(oracle.se), kind,
               flag(pass)});
      out.check("bismut." + fs[fi].desc + ".h" + std::to_string(hi), pass,
                num(est[fi].value) + " +- " + num(est[fi].se) + " vs " + kind + " " + num(oracle.value));
      plot_est.push_back(est[fi].value);
      plot_or.push_back(oracle.value);
    }
  }
  if (ro.plot_data) plot_series(dir, "bismut_vs_oracle", "oracle", "estimate", plot_or, plot_est, out);
}

inline const EmpiricalMeasure& require_tilde(const RunConfig& c, const std::string& sub) {
  if (!c.initial_tilde) throw ConfigError("initial_tilde", "required by the " + sub + " subcommand");
  return *c.initial_tilde;
}

inline void write_pairs(Csv& csv, const HarnackReport& r, const std::string& fdesc) {
  for (std::size_t k = 0; k < r.pairs.size(); ++k) {
    const PairRow& p = r.pairs[k];
    csv.row({fdesc, num(r.p), num(k), joined_vector(p.x.joined()), joined_vector(p.y.joined()), num(p.weight), num(p.lhs.value), num(p.lhs.se),
             num(p.rhs.value), num(p.rhs.se), num(p.cost.value), num(p.cost.se), num(p.sup_int_eta_sq), num(p.ess), num(p.identity.lhs),
             num(p.identity.rhs), flag(p.identity.holds), flag(p.degenerate), flag(p.pass)});
  }
}

inline void run_harnack(const RunConfig& c, const std::filesystem::path& dir, const RunOptions& ro, Outcome& out) {
  const HamiltonianModel& model = *c.model;
  const Node sec = c.checks("harnack");
  const EmpiricalMeasure& gt = require_tilde(c, "harnack");
  const RngPolicy rng(c.sim.seed);
  HarnackParams prm;
  prm.n_paths = c.sim.n_paths;
  prm.n_particles = c.sim.n_particles;
  prm.dt = c.sim.dt;
  prm.max_pairs = sec.unsigned_int("max_pairs", 16);
  const double t = sec.number("t", model.T());
  const auto fs = parse_functions(sec, "functions", model.m(), model.d(), {"gauss2"});
  const std::vector<double> ps = sec.has("p") ? sec.at("p").numbers() : std::vector<double>{1.5, 2.0, 4.0};
  const std::size_t bins = sec.unsigned_int("bins", 8);
  const HarnackFlows flows = harnack_flows(model, c.initial, gt, t, prm, rng);

  const std::vector<std::string> pair_header{"function", "p", "pair", "x", "y", "weight", "lhs", "lhs_se", "rhs", "rhs_se", "cost", "cost_se",
                                             "sup_int_eta_sq", "ess", "identity_lhs", "identity_rhs", "identity_holds", "degenerate", "pass"};
  Csv summary(dir / "harnack_summary.csv",
              {"kind", "function", "p", "t", "lhs", "lhs_se", "rhs", "rhs_se", "slack", "pass", "identities_hold", "degenerate", "w2_initial",
               "shape_constant"},
              out);
  Csv logcsv(dir / "harnack_log.csv", pair_header, out);
  Csv powcsv(dir / "harnack_power.csv", pair_header, out);
  out.identities_checked = true;
  auto record = [&](const HarnackReport& r, const std::string& fdesc) {
    summary.row({r.kind, fdesc, num(r.p), num(r.t), num(r.lhs.value), num(r.lhs.se), num(r.rhs.value), num(r.rhs.se), num(r.slack), flag(r.pass),
                 flag(r.identities_hold), flag(r.degenerate), num(r.w2_initial), num(r.shape_constant)});
    out.identities_hold = out.identities_hold && r.identities_hold;
    const std::string name = "harnack." + r.kind + "." + fdesc + (r.kind == "power" ? ".p" + short_num(r.p) : "");
    out.check(name, r.pass, "lhs " + num(r.lhs.value) + " rhs " + num(r.rhs.value));
    out.check(name + ".identity", r.identities_hold, r.kind == "log" ? "normalized Young" : "normalized Holder");
    if (r.degenerate) out.warn(name + ".weights", "effective sample size below 10");
  };
  std::vector<double> p_plot, f_plot;
  for (const auto& f : fs) {
    const HarnackReport lr = log_harnack_check(model, flows, c.initial, gt, f.f, t, prm, rng);
    write_pairs(logcsv, lr, f.desc);
    record(lr, f.desc);
    for (double p : ps) {
      const HarnackReport pr = power_harnack_check(model, flows, c.initial, gt, f.f, p, t, prm, rng);
      write_pairs(powcsv, pr, f.desc);
      record(pr, f.desc);
      double fac = 0.0;
      for (const auto& row : pr.pairs) fac += row.weight * std::exp(p / (2.0 * (p - 1.0)) * row.sup_int_eta_sq);
      p_plot.push_back(p);
      f_plot.push_back(fac);
    }
  }
  const TVEntropyReport tv = tv_entropy_check(model, flows, c.initial, gt, t, bins, prm, rng);
  {
    Csv csv(dir / "tv_entropy.csv", {"t", "bins", "tv", "tv_se", "entropy_upper", "entropy_se", "lhs", "rhs", "sigma", "pass", "degenerate", "shape_constant"},
            out);
    csv.row({num(tv.t), num(tv.bins), num(tv.tv), num(tv.tv_se), num(tv.entropy_upper.value), num(tv.entropy_upper.se), num(tv.lhs), num(tv.rhs),
             num(tv.sigma), flag(tv.pass), flag(tv.degenerate), num(tv.shape_constant)});
  }
  out.check("harnack.tv_entropy", tv.pass, "tv^2 " + num(tv.lhs) + " vs 2 ent " + num(tv.rhs));
  if (tv.degenerate) out.warn("harnack.tv_entropy.weights", "effective sample size below 10");
  if (ro.plot_data && !p_plot.empty()) plot_series(dir, "power_factor", "p", "factor", p_plot, f_plot, out);
}

inline void run_metrics(const RunConfig& c, const std::filesystem::path& dir, Outcome& out) {
  const HamiltonianModel& model = *c.model;
  const Node sec = c.checks("metrics");
  const int m = model.m(), d = model.d();
  const EmpiricalMeasure mu = sec.has("mu") ? parse_measure(sec.at("mu"), m, d, c.base_dir) : c.initial;
  const EmpiricalMeasure nu = sec.has("nu") ? parse_measure(sec.at("nu"), m, d, c.base_dir) : require_tilde(c, "metrics");
  const double k = sec.number("k", 1.0);
  Csv csv(dir / "metrics.csv", {"quantity", "value", "duality_gap", "marginal_error"}, out);
  const std::vector<std::pair<std::string, CostSpec>> costs{{"W1", w_cost(1.0)}, {"W2", w_cost(2.0)}, {"W_beta_alpha", rho_cost(model.beta(), model.modulus())}};
  for (const auto& [name, cost] : costs) {
    const WassersteinResult w = wasserstein(mu, nu, cost);
    const double me = w.plan.marginal_error(mu.weights(), nu.weights());
    csv.row({name, num(w.value), num(w.duality_gap), num(me)});
    out.check("metrics." + name, std::abs(w.duality_gap) <= 1e-8 && me <= 1e-9, num(w.value) + ", gap " + num(w.duality_gap));
  }
  const PinskerReport pk = pinsker_check(mu, nu);
  const double wv = weighted_variation(mu, nu, k);
  csv.row({"weighted_variation_k" + num(k), num(wv), "", ""});
  csv.row({"total_variation", num(pk.tv), "", ""});
  csv.row({"relative_entropy", num(pk.ent), "", ""});
  out.check("metrics.pinsker", pk.holds, "tv " + num(pk.tv) + ", ent " + num(pk.ent));
}

inline void run_study(const RunConfig& c, const std::filesystem::path& dir, const RunOptions& ro, Outcome& out) {
  const HamiltonianModel& model = *c.model;
  const Node sec = c.checks("study");
  const RngPolicy rng(c.sim.seed);
  const auto tg = parse_t_grid(sec, "t_grid", model.T(), c.sim.dt, 8);
  const double tmax = tg.back();
  HarnackParams prm;
  prm.n_paths = c.sim.n_paths;
  prm.n_particles = c.sim.n_particles;
  prm.dt = c.sim.dt;

  if (c.initial_tilde) {
    const HarnackFlows flows = harnack_flows(model, c.initial, *c.initial_tilde, tmax, prm, rng);
    const StabilityTable st = stability_study(model, flows, c.initial, *c.initial_tilde, tg, prm, rng);
    {
      Csv csv(dir / "stability.csv", {"t", "w2", "w_beta_alpha", "ratio_w2", "ratio_w_beta_alpha", "shape"}, out);
      for (const auto& r : st.rows) csv.row({num(r.t), num(r.w2), num(r.wba), num(r.ratio_w2), num(r.ratio_wba), num(r.shape)});
    }
    out.check("study.w2_ratio_finite", std::isfinite(st.sup_ratio_w2), "sup " + num(st.sup_ratio_w2));
    out.info("study.w_beta_alpha_fit", "c " + num(st.wba_fit.slope) + ", r2 " + num(st.wba_fit.r2));

    const SplitState x = parse_state(sec, "x", first_atom(c.initial));
    const SplitState y = parse_state(sec, "y", first_atom(*c.initial_tilde));
    if (x.joined() != y.joined()) {
      const CostSweep cs = entropy_sweep(model, flows.gamma, flows.gamma_tilde, x, y, tg, prm.n_paths, prm.dt, rng);
      {
        Csv csv(dir / "entropy_sweep.csv", {"t", "sup_int_eta_sq", "half_int_eta_sq_Q", "se"}, out);
        for (std::size_t i = 0; i < cs.times.size(); ++i)
          csv.row({num(cs.times[i]), num(cs.sup_int_eta_sq[i]), num(cs.half_int_eta_sq_Q[i].value), num(cs.half_int_eta_sq_Q[i].se)});
      }
      out.info("study.entropy_exponent", num(cs.sup_fit.slope) + " (small-time exponent -3)");
      if (ro.plot_data) plot_series(dir, "entropy_sweep", "t", "sup_int_eta_sq", cs.times, cs.sup_int_eta_sq, out);
    }
    if (ro.plot_data) {
      std::vector<double> t, r2, sh, rb;
      for (const auto& r : st.rows) {
        t.push_back(r.t);
        r2.push_back(r.ratio_w2);
        sh.push_back(r.shape);
        rb.push_back(r.ratio_wba);
      }
      plot_series(dir, "stability_w2", "t", "ratio_w2", t, r2, out);
      plot_series(dir, "stability_w_beta_alpha", "shape", "ratio_w_beta_alpha", sh, rb, out);
    }
  }

  // partial gradient envelope: |grad| / ((E f^2)^{1/2} sqrt t)
  {
    const SplitState x = parse_state(sec, "x", first_atom(c.initial));
    const MeasureFlow flow = reference_flow(c, c.initial, tmax, rng);
    const NamedFunction f = sec.has("partial_function") ? parse_function(sec.at("partial_function"), model.m(), model.d())
                                                        : parse_function(Node(Json("x2"), sec.path() + ".partial_function"), model.m(), model.d());
    if (f.kind == "x1") throw ConfigError(sec.path() + ".partial_function", "must depend on the second component only");
    const Vector v = sec.has("partial_direction") ? sec.at("partial_direction").vector() : Vector::Unit(model.m(), 0);
    if (v.size() != model.m()) throw ConfigError(sec.path() + ".partial_direction", "expected m coordinates");
    const int m = model.m();
    const StateFunction full = f.f;
    const SecondFunction f2 = [full, m](const Vector& x2) {
      Vector z = Vector::Zero(m + x2.size());
      z.tail(x2.size()) = x2;
      return full(SplitState(m, z));
    };
    Csv csv(dir / "partial_bismut.csv", {"t", "estimate", "stderr", "f_rms", "envelope_ratio"}, out);
    double sup = 0.0;
    std::vector<double> ts, rs;
    for (double t : tg) {
      const PartialGradient pg = partial_bismut_gradient(model, flow, x, f2, v, prm.n_paths, prm.dt, rng, t);
      const double ratio = pg.f_rms > 0 ? std::abs(pg.gradient.value) / (pg.f_rms * std::sqrt(t)) : 0.0;
      sup = std::max(sup, ratio);
      csv.row({num(t), num(pg.gradient.value), num(pg.gradient.se), num(pg.f_rms), num(ratio)});
      ts.push_back(t);
      rs.push_back(ratio);
    }
    out.check("study.partial_envelope_finite", std::isfinite(sup), "sup ratio " + num(sup));
    if (ro.plot_data) plot_series(dir, "partial_envelope", "t", "ratio", ts, rs, out);
  }

  // conditional moments along the first coordinate axis
  {
    const double n = sec.number("conditional_order", 2.0);
    const std::vector<double> radii = sec.has("radii") ? sec.at("radii").numbers() : std::vector<double>{4.0, 8.0, 16.0, 32.0};
    const MeasureFlow flow = reference_flow(c, c.initial, model.T(), rng);
    const ConditionalMoments cm = conditional_moments(model, flow, n, radii, Vector::Unit(model.dim(), 0), std::min<std::size_t>(prm.n_paths, 2000),
                                                      prm.dt, rng);
    Csv csv(dir / "conditional_moments.csv", {"radius", "moment", "se"}, out);
    for (std::size_t i = 0; i < radii.size(); ++i) csv.row({num(radii[i]), num(cm.moment[i]), num(cm.se[i])});
    out.info("study.conditional_exponent", num(cm.fit.slope) + " (order " + num(n) + ")");
  }
}

// Runs one subcommand.  Every subcommand other than validate runs the validation first and
// refuses to continue when it fails.
inline int run(const std::string& sub, const RunConfig& c, const RunOptions& ro, Outcome& out) {
  out.log = ro.log;
  if (std::find(subcommands().begin(), subcommands().end(), sub) == subcommands().end()) {
    out.line("ERROR", "usage", "unknown subcommand '" + sub + "'");
    return kUsage;
  }
  set_worker_threads(ro.threads >= 0 ? ro.threads : c.sim.threads);
  const std::filesystem::path dir = ro.output_dir.empty() ? c.resolve(c.output_dir) : std::filesystem::path(ro.output_dir);
  std::filesystem::create_directories(dir);
  try {
    run_validate(c, dir, out);
    if (sub != "validate" && out.any_fail) {
      out.line("ERROR", sub, "model failed validation; refusing to run");
      return kFail;
    }
    if (sub == "simulate") run_simulate(c, dir, ro, out);
    if (sub == "picard") run_picard(c, dir, ro, out);
    if (sub == "bismut") run_bismut(c, dir, ro, out);
    if (sub == "harnack") run_harnack(c, dir, ro, out);
    if (sub == "metrics") run_metrics(c, dir, out);
    if (sub == "study") run_study(c, dir, ro, out);
  } catch (const ConfigError& e) {
    out.line("ERROR", "config", e.what());
    return kUsage;
  } catch (const DivergenceError& e) {
    out.check(sub + ".divergence", false, e.what());
  } catch (const std::invalid_argument& e) {
    out.line("ERROR", sub, e.what());
    return kUsage;
  } catch (const std::domain_error& e) {
    out.line("ERROR", sub, e.what());
    return kUsage;
  }
  return out.exit_code();
}

inline int run_file(const std::string& sub, const std::filesystem::path& config, const RunOptions& ro, Outcome& out) {
  out.log = ro.log;
  RunConfig c;
  try {
    c = load_config(config);
  } catch (const ConfigError& e) {
    out.line("ERROR", "config", e.what());
    return kUsage;
  }
  return run(sub, c, ro, out);
}

}  // namespace mvh::cli
