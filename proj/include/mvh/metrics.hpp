#pragma once

#include "moduli.hpp"
#include "state.hpp"
#include "transport.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <variant>
#include <vector>

namespace mvh {

inline double rho_beta_alpha(const SplitState& x, const SplitState& y, double beta, const DiniModulus& alpha) {
  if (x.m() != y.m() || x.d() != y.d()) throw std::invalid_argument("rho: dimension mismatch");
  if (!(beta > 0 && beta <= 1)) throw std::invalid_argument("rho: beta must lie in (0,1]");
  const double r1 = (x.first() - y.first()).norm();
  const double r2 = (x.second() - y.second()).norm();
  return std::pow(r1, beta) + alpha.eval(r2);
}

struct WkCost {
  double k = 2.0;
};
struct RhoCost {
  double beta = 1.0;
  DiniModulus alpha;
};
using CostSpec = std::variant<WkCost, RhoCost>;

inline CostSpec w_cost(double k) { return WkCost{k}; }
inline CostSpec rho_cost(double beta, DiniModulus alpha) { return RhoCost{beta, std::move(alpha)}; }

// Ground cost between joined coordinate rows.
inline double ground_cost(const CostSpec& cost, int m, const double* x, const double* y, int dim) {
  if (auto* w = std::get_if<WkCost>(&cost)) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    if (w->k == 2.0) return s;
    const double r = std::sqrt(s);
    return w->k == 1.0 ? r : std::pow(r, w->k);
  }
  const auto& rc = std::get<RhoCost>(cost);
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < m; ++i) s1 += (x[i] - y[i]) * (x[i] - y[i]);
  for (int i = m; i < dim; ++i) s2 += (x[i] - y[i]) * (x[i] - y[i]);
  return std::pow(std::sqrt(s1), rc.beta) + rc.alpha.eval(std::sqrt(s2));
}

inline double cost_to_value(const CostSpec& cost, double c) {
  if (auto* w = std::get_if<WkCost>(&cost)) return std::pow(std::max(c, 0.0), 1.0 / w->k);
  return c;
}

inline void check_cost(const CostSpec& cost) {
  if (auto* w = std::get_if<WkCost>(&cost)) {
    if (!(w->k >= 1)) throw std::invalid_argument("W_k needs k >= 1");
  } else {
    const auto& r = std::get<RhoCost>(cost);
    if (!(r.beta > 0 && r.beta <= 1)) throw std::invalid_argument("rho cost needs beta in (0,1]");
  }
}

struct TransportPlan {
  Matrix mass;  // rows index mu atoms, columns index nu atoms

  // Largest deviation of the marginals from the given weights.
  double marginal_error(const Vector& a, const Vector& b) const {
    const double er = (mass.rowwise().sum() - a).cwiseAbs().maxCoeff();
    const double ec = (mass.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
    return std::max(er, ec);
  }
};

struct WassersteinResult {
  double value = 0.0;        // root taken for W_k
  double optimal_cost = 0.0; // before the root
  TransportPlan plan;
  Vector u, v;               // Kantorovich potentials for the ground cost
  double duality_gap = 0.0;
};

inline Matrix cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostSpec& cost) {
  if (mu.m() != nu.m() || mu.d() != nu.d()) throw std::invalid_argument("wasserstein: dimension mismatch");
  const int dim = mu.dim();
  // row-major copies for contiguous atom access
  std::vector<double> xa(mu.size() * static_cast<std::size_t>(dim)), xb(nu.size() * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (int j = 0; j < dim; ++j) xa[i * dim + j] = mu.atoms()(static_cast<Eigen::Index>(i), j);
  for (std::size_t i = 0; i < nu.size(); ++i)
    for (int j = 0; j < dim; ++j) xb[i * dim + j] = nu.atoms()(static_cast<Eigen::Index>(i), j);
  Matrix c(static_cast<Eigen::Index>(mu.size()), static_cast<Eigen::Index>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ground_cost(cost, mu.m(), &xa[i * dim], &xb[j * dim], dim);
  return c;
}

inline WassersteinResult wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostSpec& cost,
                                     std::size_t cap = 1024) {
  check_cost(cost);
  if (mu.size() + nu.size() > cap)
    throw std::length_error("wasserstein: " + std::to_string(mu.size() + nu.size()) + " atoms exceed the solver cap " +
                            std::to_string(cap));
  const Matrix c = cost_matrix(mu, nu, cost);
  WassersteinResult r;
  if (mu.size() == 1 || nu.size() == 1) {
    // unique coupling
    r.plan.mass = mu.weights() * nu.weights().transpose();
    r.optimal_cost = (r.plan.mass.array() * c.array()).sum();
    r.u = Vector::Zero(static_cast<Eigen::Index>(mu.size()));
    r.v = Vector::Zero(static_cast<Eigen::Index>(nu.size()));
    if (mu.size() == 1) {
      r.v = c.row(0).transpose();
    } else {
      r.u = c.col(0);
    }
    r.duality_gap = r.optimal_cost - (mu.weights().dot(r.u) + nu.weights().dot(r.v));
  } else {
    const TransportResult t = solve_transport(mu.weights(), nu.weights(), c);
    r.plan.mass = t.plan;
    r.optimal_cost = t.cost;
    r.u = t.u;
    r.v = t.v;
    r.duality_gap = t.gap;
  }
  r.value = cost_to_value(cost, r.optimal_cost);
  return r;
}

inline double wasserstein_bruteforce(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostSpec& cost) {
  check_cost(cost);
  const std::size_t n = mu.size();
  if (n != nu.size() || n > 8) throw std::invalid_argument("bruteforce needs equal atom counts n <= 8");
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(mu.weight(i) - w) > 1e-12 || std::abs(nu.weight(i) - w) > 1e-12)
      throw std::invalid_argument("bruteforce needs uniform weights");
  const Matrix c = cost_matrix(mu, nu, cost);
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c(static_cast<Eigen::Index>(i), p[i]);
    best = std::min(best, s * w);
  } while (std::next_permutation(p.begin(), p.end()));
  return cost_to_value(cost, best);
}

namespace detail {

struct AtomKey {
  std::vector<std::uint64_t> bits;
  bool operator<(const AtomKey& o) const { return bits < o.bits; }
};

inline AtomKey atom_key(const Matrix& atoms, Eigen::Index i) {
  AtomKey k;
  k.bits.resize(static_cast<std::size_t>(atoms.cols()));
  for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
    double v = atoms(i, j);
    if (v == 0.0) v = 0.0;  // fold -0
    k.bits[static_cast<std::size_t>(j)] = std::bit_cast<std::uint64_t>(v);
  }
  return k;
}

struct UnionEntry {
  double p = 0.0, q = 0.0, norm = 0.0;
};

// Union support keyed by exact bit pattern of the coordinates.
inline std::vector<UnionEntry> union_support(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.m() != nu.m() || mu.d() != nu.d()) throw std::invalid_argument("dimension mismatch");
  std::map<AtomKey, UnionEntry> table;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    auto& e = table[atom_key(mu.atoms(), static_cast<Eigen::Index>(i))];
    e.p += mu.weight(i);
    e.norm = mu.atoms().row(static_cast<Eigen::Index>(i)).norm();
  }
  for (std::size_t i = 0; i < nu.size(); ++i) {
    auto& e = table[atom_key(nu.atoms(), static_cast<Eigen::Index>(i))];
    e.q += nu.weight(i);
    e.norm = nu.atoms().row(static_cast<Eigen::Index>(i)).norm();
  }
  std::vector<UnionEntry> out;
  out.reserve(table.size());
  for (auto& [k, e] : table) out.push_back(e);
  return out;
}

}  // namespace detail

inline double weighted_variation(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k) {
  if (!(k >= 1)) throw std::invalid_argument("weighted variation needs k >= 1");
  double s = 0.0;
  for (const auto& e : detail::union_support(mu, nu)) s += std::abs(e.p - e.q) * (1.0 + std::pow(e.norm, k));
  return s;
}

inline double total_variation(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  double s = 0.0;
  for (const auto& e : detail::union_support(mu, nu)) s += std::abs(e.p - e.q);
  return std::min(s, 2.0);
}

// Ent(nu | mu) = sum nu log(nu / mu); +inf when nu is not absolutely continuous.
// Summed as mu * (u log u - u + 1) with u = nu/mu, a sum of non-negative terms.
inline double relative_entropy(const EmpiricalMeasure& nu, const EmpiricalMeasure& mu) {
  double s = 0.0;
  for (const auto& e : detail::union_support(nu, mu)) {
    const double q = e.p, p = e.q;  // q from nu, p from mu
    if (q == 0.0) {
      s += p;
      continue;
    }
    if (p == 0.0) return std::numeric_limits<double>::infinity();
    const double u = q / p;
    s += p * (u * std::log(u) - u + 1.0);
  }
  return std::max(0.0, s);
}

struct PinskerReport {
  double tv = 0.0;
  double ent = 0.0;
  bool holds = false;
};

inline PinskerReport pinsker_check(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  PinskerReport r;
  r.tv = total_variation(mu, nu);
  r.ent = relative_entropy(nu, mu);
  r.holds = r.tv * r.tv <= 2.0 * r.ent + 1e-12;
  return r;
}

}  // namespace mvh
