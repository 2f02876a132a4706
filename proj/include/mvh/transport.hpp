#pragma once

#include "core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mvh {

struct TransportResult {
  double cost = 0.0;  // sum c_ij x_ij over the plan
  Matrix plan;        // n x m masses
  Vector u, v;        // u_i + v_j <= c_ij for all i, j
  double dual = 0.0;  // a.u + b.v
  double gap = 0.0;   // cost - dual
  std::size_t pivots = 0;
};

// Primal network simplex on the complete bipartite graph with an artificial
// root, strongly feasible spanning trees and block-search pricing.
class NetworkSimplex {
 public:
  NetworkSimplex(const Vector& a, const Vector& b, const Matrix& c) : a_(a), b_(b), c_(c) {
    n_ = static_cast<int>(a.size());
    m_ = static_cast<int>(b.size());
    if (n_ == 0 || m_ == 0 || c.rows() != n_ || c.cols() != m_) throw std::invalid_argument("transport problem dimension mismatch");
    for (Eigen::Index i = 0; i < c.size(); ++i)
      if (!std::isfinite(c.data()[i])) throw std::invalid_argument("transport costs must be finite");
  }

  TransportResult solve() {
    init();
    std::size_t pivots = 0;
    const std::size_t cap = 200 * static_cast<std::size_t>(arc_count_) + 1000;
    while (find_entering()) {
      find_join();
      find_leaving();
      change_flow();
      update_tree();
      update_potentials();
      if (++pivots > cap) throw std::runtime_error("network simplex exceeded its pivot budget");
    }
    return extract(pivots);
  }

 private:
  static constexpr int up = 1, down = -1;

  void init() {
    nodes_ = n_ + m_;
    root_ = nodes_;
    real_arcs_ = n_ * m_;
    arc_count_ = real_arcs_ + nodes_;
    src_.resize(arc_count_);
    tgt_.resize(arc_count_);
    cost_.resize(arc_count_);
    flow_.assign(arc_count_, 0.0);
    in_tree_.assign(arc_count_, 0);
    double maxc = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) {
        const int e = i * m_ + j;
        src_[e] = i;
        tgt_[e] = n_ + j;
        cost_[e] = c_(i, j);
        maxc = std::max(maxc, std::abs(c_(i, j)));
      }
    eps_ = 1e-13 * std::max(1.0, maxc);
    const double art = (maxc + 1.0) * static_cast<double>(nodes_ + 1);
    parent_.assign(nodes_ + 1, -1);
    pred_.assign(nodes_ + 1, -1);
    dir_.assign(nodes_ + 1, 0);
    pi_.assign(nodes_ + 1, 0.0);
    stamp_.assign(nodes_ + 1, 0);
    epoch_ = 0;
    for (int u = 0; u < nodes_; ++u) {
      const int e = real_arcs_ + u;
      parent_[u] = root_;
      pred_[u] = e;
      in_tree_[e] = 1;
      if (u < n_) {
        src_[e] = u;
        tgt_[e] = root_;
        cost_[e] = 0.0;
        flow_[e] = a_(u);
        dir_[u] = up;
        pi_[u] = 0.0;
      } else {
        src_[e] = root_;
        tgt_[e] = u;
        cost_[e] = art;
        flow_[e] = b_(u - n_);
        dir_[u] = down;
        pi_[u] = art;
      }
    }
    block_ = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(real_arcs_))));
    next_arc_ = 0;
  }

  double reduced(int e) const { return cost_[e] + pi_[src_[e]] - pi_[tgt_[e]]; }

  bool find_entering() {
    double best = 0.0;
    int best_arc = -1, cnt = block_;
    for (int k = 0; k < real_arcs_; ++k) {
      const int e = (next_arc_ + k) % real_arcs_;
      if (!in_tree_[e]) {
        const double rc = reduced(e);
        if (rc < best) {
          best = rc;
          best_arc = e;
        }
      }
      if (--cnt == 0) {
        if (best < -eps_) {
          in_arc_ = best_arc;
          next_arc_ = (e + 1) % real_arcs_;
          return true;
        }
        cnt = block_;
      }
    }
    if (best < -eps_) {
      in_arc_ = best_arc;
      next_arc_ = (in_arc_ + 1) % real_arcs_;
      return true;
    }
    return false;
  }

  void find_join() {
    ++epoch_;
    for (int u = src_[in_arc_]; u != -1; u = parent_[u]) stamp_[u] = epoch_;
    int v = tgt_[in_arc_];
    while (stamp_[v] != epoch_) v = parent_[v];
    join_ = v;
  }

  void find_leaving() {
    first_ = src_[in_arc_];
    second_ = tgt_[in_arc_];
    delta_ = std::numeric_limits<double>::infinity();
    int result = 0;
    for (int u = first_; u != join_; u = parent_[u]) {
      const double d = dir_[u] == up ? flow_[pred_[u]] : std::numeric_limits<double>::infinity();
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (int u = second_; u != join_; u = parent_[u]) {
      const double d = dir_[u] == down ? flow_[pred_[u]] : std::numeric_limits<double>::infinity();
      if (d <= delta_) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 0) throw std::runtime_error("transport problem is unbounded");
    if (result == 1) {
      u_in_ = first_;
      v_in_ = second_;
    } else {
      u_in_ = second_;
      v_in_ = first_;
    }
  }

  void change_flow() {
    if (delta_ > 0) {
      flow_[in_arc_] += delta_;
      for (int u = first_; u != join_; u = parent_[u]) flow_[pred_[u]] -= dir_[u] * delta_;
      for (int u = second_; u != join_; u = parent_[u]) flow_[pred_[u]] += dir_[u] * delta_;
    }
    flow_[pred_[u_out_]] = 0.0;
  }

  void update_tree() {
    const int leaving = pred_[u_out_];
    in_tree_[leaving] = 0;
    in_tree_[in_arc_] = 1;
    int u = u_in_;
    int new_parent = v_in_, new_pred = in_arc_;
    int new_dir = src_[in_arc_] == u_in_ ? up : down;
    while (true) {
      const int op = parent_[u], oe = pred_[u], od = dir_[u];
      parent_[u] = new_parent;
      pred_[u] = new_pred;
      dir_[u] = new_dir;
      if (u == u_out_) break;
      new_parent = u;
      new_pred = oe;
      new_dir = -od;
      u = op;
    }
  }

  void update_potentials() {
    ++epoch_;
    stamp_[root_] = epoch_;
    pi_[root_] = 0.0;
    for (int s = 0; s < nodes_; ++s) {
      if (stamp_[s] == epoch_) continue;
      path_.clear();
      int u = s;
      while (stamp_[u] != epoch_) {
        path_.push_back(u);
        u = parent_[u];
      }
      for (auto it = path_.rbegin(); it != path_.rend(); ++it) {
        const int w = *it;
        pi_[w] = pi_[parent_[w]] - dir_[w] * cost_[pred_[w]];
        stamp_[w] = epoch_;
      }
    }
  }

  TransportResult extract(std::size_t pivots) const {
    TransportResult r;
    r.pivots = pivots;
    r.plan = Matrix::Zero(n_, m_);
    double cost = 0.0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) {
        const double f = flow_[i * m_ + j];
        r.plan(i, j) = f;
        cost += f * c_(i, j);
      }
    r.cost = cost;
    // Tree potentials, then a double c-transform for exact dual feasibility.
    r.u.resize(n_);
    r.v.resize(m_);
    for (int i = 0; i < n_; ++i) r.u(i) = -pi_[i];
    for (int j = 0; j < m_; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n_; ++i) best = std::min(best, c_(i, j) - r.u(i));
      r.v(j) = best;
    }
    for (int i = 0; i < n_; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < m_; ++j) best = std::min(best, c_(i, j) - r.v(j));
      r.u(i) = best;
    }
    const double shift = r.u(0);
    r.u.array() -= shift;
    r.v.array() += shift;
    r.dual = a_.dot(r.u) + b_.dot(r.v);
    r.gap = r.cost - r.dual;
    return r;
  }

  const Vector& a_;
  const Vector& b_;
  const Matrix& c_;
  int n_ = 0, m_ = 0, nodes_ = 0, root_ = 0, real_arcs_ = 0, arc_count_ = 0;
  std::vector<int> src_, tgt_;
  std::vector<double> cost_, flow_;
  std::vector<char> in_tree_;
  std::vector<int> parent_, pred_, dir_;
  std::vector<double> pi_;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t epoch_ = 0;
  std::vector<int> path_;
  double eps_ = 0.0;
  int block_ = 10, next_arc_ = 0;
  int in_arc_ = -1, join_ = -1, first_ = -1, second_ = -1, u_in_ = -1, v_in_ = -1, u_out_ = -1;
  double delta_ = 0.0;
};

inline TransportResult solve_transport(const Vector& a, const Vector& b, const Matrix& c) {
  NetworkSimplex ns(a, b, c);
  return ns.solve();
}

}  // namespace mvh
