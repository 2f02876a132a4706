#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <locale>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mvh {

struct PowerFamily {
  double kappa = 0.5;
};
struct LogPowerFamily {
  double p = 1.0;
};
// Piecewise-linear through the knots, extended past the last knot with the last slope.
struct CustomFamily {
  std::vector<double> r;
  std::vector<double> value;
};

using ModulusFamily = std::variant<PowerFamily, LogPowerFamily, CustomFamily>;

class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double partial, double eps0)
      : std::runtime_error(what), partial_sum(partial), eps0(eps0) {}
  double partial_sum;
  double eps0;
};

class DiniModulus {
 public:
  DiniModulus() : DiniModulus(PowerFamily{0.5}) {}
  explicit DiniModulus(ModulusFamily family, double scale = 1.0) : family_(std::move(family)), scale_(scale) {
    if (!(scale_ > 0) || !std::isfinite(scale_)) throw std::invalid_argument("modulus scale must be positive");
    if (auto* p = std::get_if<PowerFamily>(&family_)) {
      if (!(p->kappa > 0 && p->kappa <= 1)) throw std::invalid_argument("Power modulus needs kappa in (0,1]");
    } else if (auto* l = std::get_if<LogPowerFamily>(&family_)) {
      if (!(l->p > 0.5)) throw std::invalid_argument("LogPower modulus needs p > 1/2");
    } else {
      const auto& c = std::get<CustomFamily>(family_);
      if (c.r.size() < 2 || c.r.size() != c.value.size()) throw std::invalid_argument("custom modulus needs >= 2 knots");
      if (c.r[0] != 0.0) throw std::invalid_argument("custom modulus table must start at r = 0");
      for (std::size_t i = 1; i < c.r.size(); ++i)
        if (!(c.r[i] > c.r[i - 1])) throw std::invalid_argument("custom modulus r must be strictly increasing");
      for (double v : c.value)
        if (!std::isfinite(v)) throw std::invalid_argument("custom modulus values must be finite");
    }
  }

  static DiniModulus power(double kappa, double scale = 1.0) { return DiniModulus(PowerFamily{kappa}, scale); }
  static DiniModulus log_power(double p, double scale = 1.0) { return DiniModulus(LogPowerFamily{p}, scale); }
  static DiniModulus custom(std::vector<double> r, std::vector<double> v, double scale = 1.0) {
    return DiniModulus(CustomFamily{std::move(r), std::move(v)}, scale);
  }

  const ModulusFamily& family() const { return family_; }
  double scale() const { return scale_; }

  double operator()(double r) const { return eval(r); }

  double eval(double r) const {
    if (r < 0 || std::isnan(r)) throw std::domain_error("modulus evaluated at negative r");
    if (r == 0.0) return 0.0;
    return scale_ * unscaled(r);
  }

  std::string describe() const {
    std::ostringstream os;
    if (auto* p = std::get_if<PowerFamily>(&family_))
      os << "power(kappa=" << p->kappa << ")";
    else if (auto* l = std::get_if<LogPowerFamily>(&family_))
      os << "log_power(p=" << l->p << ")";
    else
      os << "custom(" << std::get<CustomFamily>(family_).r.size() << " knots)";
    if (scale_ != 1.0) os << "*" << scale_;
    return os.str();
  }

 private:
  double unscaled(double r) const {
    if (auto* p = std::get_if<PowerFamily>(&family_)) return p->kappa == 1.0 ? r : std::pow(r, p->kappa);
    if (auto* l = std::get_if<LogPowerFamily>(&family_)) return std::pow(std::log(std::numbers::e + 1.0 / r), -l->p);
    const auto& c = std::get<CustomFamily>(family_);
    const std::size_t n = c.r.size();
    if (r >= c.r[n - 1]) {
      const double slope = (c.value[n - 1] - c.value[n - 2]) / (c.r[n - 1] - c.r[n - 2]);
      return c.value[n - 1] + slope * (r - c.r[n - 1]);
    }
    const auto it = std::upper_bound(c.r.begin(), c.r.end(), r);
    const std::size_t j = static_cast<std::size_t>(it - c.r.begin());
    const double w = (r - c.r[j - 1]) / (c.r[j] - c.r[j - 1]);
    return c.value[j - 1] + w * (c.value[j] - c.value[j - 1]);
  }

  ModulusFamily family_;
  double scale_;
};

// Two columns (r, value), whitespace or comma separated; '#' starts a comment.
inline DiniModulus load_modulus_table(const std::string& path, double scale = 1.0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open modulus table " + path);
  std::vector<double> r, v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    double a, b;
    if (!(ls >> a)) continue;
    if (!(ls >> b)) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected two columns");
    r.push_back(a);
    v.push_back(b);
  }
  return DiniModulus::custom(std::move(r), std::move(v), scale);
}

namespace detail {

template <class F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol, int depth,
                        bool& ok) {
  const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) {
    ok = false;
    return left + right + delta / 15.0;
  }
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok);
}

}  // namespace detail

// int_{eps0}^1 alpha(r)^2 / r dr, computed in u = -log r on [0, log(1/eps0)].
inline double dini_square_integral(const DiniModulus& a, double eps0, double tol = 1e-11) {
  if (!(eps0 > 0 && eps0 < 1)) throw std::domain_error("eps0 must lie in (0,1)");
  const double U = -std::log(eps0);
  auto g = [&](double u) {
    const double v = a.eval(std::exp(-u));
    return v * v;
  };
  // Panels of unit length keep the recursion local.
  const int panels = std::max(1, static_cast<int>(std::ceil(U)));
  double total = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double lo = U * i / panels, hi = U * (i + 1) / panels;
    const double fa = g(lo), fb = g(hi), fm = g(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    bool ok = true;
    total += detail::adaptive_simpson(g, lo, hi, fa, fm, fb, whole, tol / panels, 50, ok);
    if (!ok) throw QuadratureError("dini quadrature did not converge", total, eps0);
  }
  return total;
}

struct ModulusCheck {
  std::string name;
  bool pass = true;
  double worst = 0.0;  // largest violation magnitude, 0 if none
};

struct ModulusValidation {
  std::vector<ModulusCheck> checks;
  bool usable() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const ModulusCheck& get(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw std::out_of_range("no modulus check " + name);
  }
};

inline ModulusValidation validate(const DiniModulus& a, int grid_size) {
  if (grid_size < 16) throw std::invalid_argument("grid_size must be >= 16");
  const double a1 = a.eval(1.0);
  const double tol = 1e-12 * std::max(1.0, a1);
  // Geometric part near zero plus a uniform part on [0, 4]; custom knots added.
  std::vector<double> grid{0.0};
  const int half = grid_size / 2;
  for (int i = 0; i < half; ++i) grid.push_back(std::pow(10.0, -12.0 + 12.0 * i / (half - 1)));
  for (int i = 1; i <= grid_size - half; ++i) grid.push_back(4.0 * i / (grid_size - half));
  if (auto* c = std::get_if<CustomFamily>(&a.family())) {
    grid.insert(grid.end(), c->r.begin(), c->r.end());
    for (std::size_t i = 0; i + 1 < c->r.size(); ++i) grid.push_back(0.5 * (c->r[i] + c->r[i + 1]));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<double> val(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) val[i] = a.eval(grid[i]);

  ModulusValidation rep;
  {
    ModulusCheck c{"zero_at_origin"};
    c.worst = std::abs(a.eval(0.0));
    if (auto* cf = std::get_if<CustomFamily>(&a.family())) c.worst = std::abs(a.scale() * cf->value[0]);
    c.pass = c.worst == 0.0;
    rep.checks.push_back(c);
  }
  {
    ModulusCheck c{"non_decreasing"};
    for (std::size_t i = 1; i < grid.size(); ++i) c.worst = std::max(c.worst, val[i - 1] - val[i]);
    c.pass = c.worst <= tol;
    rep.checks.push_back(c);
  }
  {
    ModulusCheck c{"midpoint_concave"};
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = i + 1; j < grid.size(); ++j) {
        const double mid = a.eval(0.5 * (grid[i] + grid[j]));
        c.worst = std::max(c.worst, 0.5 * (val[i] + val[j]) - mid);
      }
    if (auto* cf = std::get_if<CustomFamily>(&a.family())) {
      // exact criterion for a piecewise-linear interpolant: slopes non-increasing
      for (std::size_t i = 1; i + 1 < cf->r.size(); ++i) {
        const double s0 = (cf->value[i] - cf->value[i - 1]) / (cf->r[i] - cf->r[i - 1]);
        const double s1 = (cf->value[i + 1] - cf->value[i]) / (cf->r[i + 1] - cf->r[i]);
        c.worst = std::max(c.worst, a.scale() * (s1 - s0) * std::min(cf->r[i] - cf->r[i - 1], cf->r[i + 1] - cf->r[i]) / 2);
      }
    }
    c.pass = c.worst <= tol;
    rep.checks.push_back(c);
  }
  {
    // alpha(e^{-u})^2 must decay faster than 1/u for the integral to converge.
    ModulusCheck c{"dini_square_finite"};
    try {
      const double v = dini_square_integral(a, 1e-12);
      const double g1 = std::pow(a.eval(std::exp(-320.0)), 2), g2 = std::pow(a.eval(std::exp(-640.0)), 2);
      double slope = -std::numeric_limits<double>::infinity();
      if (g1 > 0 && g2 > 0) slope = std::log(g2 / g1) / std::log(2.0);
      c.worst = std::max(0.0, slope + 1.05);
      c.pass = std::isfinite(v) && v > 0 && slope < -1.05;
    } catch (const QuadratureError&) {
      c.pass = false;
      c.worst = std::numeric_limits<double>::infinity();
    }
    rep.checks.push_back(c);
  }
  {
    ModulusCheck c{"sub_homogeneous"};  // alpha(r t) <= r alpha(t), r >= 1
    for (double r : {1.0, 1.5, 2.0, 4.0, 10.0, 100.0})
      for (std::size_t i = 1; i < grid.size(); ++i) c.worst = std::max(c.worst, a.eval(r * grid[i]) - r * val[i]);
    c.pass = c.worst <= tol * 100;
    rep.checks.push_back(c);
  }
  {
    ModulusCheck c{"linear_growth"};  // alpha(r) <= alpha(1)(1 + r)
    for (std::size_t i = 0; i < grid.size(); ++i) c.worst = std::max(c.worst, val[i] - a1 * (1.0 + grid[i]));
    for (double r : {10.0, 100.0, 1e4}) c.worst = std::max(c.worst, a.eval(r) - a1 * (1.0 + r));
    c.pass = c.worst <= tol;
    rep.checks.push_back(c);
  }
  return rep;
}

}  // namespace mvh
