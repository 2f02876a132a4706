#pragma once

#include "core.hpp"

#include <cstdio>
#include <fstream>
#include <locale>
#include <sstream>
#include <string>
#include <vector>

namespace mvh {

// x = (x1 in R^m, x2 in R^d), stored joined.
class SplitState {
 public:
  SplitState() = default;
  SplitState(const Vector& first, const Vector& second) : m_(static_cast<int>(first.size())), v_(first.size() + second.size()) {
    v_ << first, second;
    check();
  }
  SplitState(int m, Vector joined) : m_(m), v_(std::move(joined)) {
    if (m_ < 0 || m_ > v_.size()) throw std::invalid_argument("bad split index");
    check();
  }
  static SplitState zeros(int m, int d) { return SplitState(m, Vector::Zero(m + d)); }

  int m() const { return m_; }
  int d() const { return static_cast<int>(v_.size()) - m_; }
  int dim() const { return static_cast<int>(v_.size()); }
  auto first() const { return v_.head(m_); }
  auto second() const { return v_.tail(v_.size() - m_); }
  const Vector& joined() const { return v_; }

  friend bool operator==(const SplitState& a, const SplitState& b) { return a.m_ == b.m_ && a.v_ == b.v_; }

 private:
  void check() const {
    if (!all_finite(v_.data(), static_cast<std::size_t>(v_.size()))) throw std::invalid_argument("SplitState entries must be finite");
  }
  int m_ = 0;
  Vector v_;
};

// Weighted atoms; row i of atoms() is atom i in joined coordinates.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  EmpiricalMeasure(int m, int d, Matrix atoms, Vector weights) : m_(m), d_(d), atoms_(std::move(atoms)), w_(std::move(weights)) {
    if (m_ < 0 || d_ < 0 || atoms_.cols() != m_ + d_) throw std::invalid_argument("measure atom dimension mismatch");
    if (atoms_.rows() == 0 || atoms_.rows() != w_.size()) throw std::invalid_argument("measure needs one weight per atom");
    double s = 0.0;
    for (Eigen::Index i = 0; i < w_.size(); ++i) {
      if (!(w_(i) >= 0) || !std::isfinite(w_(i))) throw std::invalid_argument("measure weights must be non-negative");
      s += w_(i);
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("measure weights must sum to 1");
    if (!all_finite(atoms_.data(), static_cast<std::size_t>(atoms_.size()))) throw std::invalid_argument("measure atoms must be finite");
  }
  static EmpiricalMeasure uniform(int m, int d, Matrix atoms) {
    const auto n = atoms.rows();
    return EmpiricalMeasure(m, d, std::move(atoms), Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }
  static EmpiricalMeasure dirac(const SplitState& x) {
    return EmpiricalMeasure(x.m(), x.d(), x.joined().transpose(), Vector::Ones(1));
  }

  int m() const { return m_; }
  int d() const { return d_; }
  int dim() const { return m_ + d_; }
  std::size_t size() const { return static_cast<std::size_t>(atoms_.rows()); }
  const Matrix& atoms() const { return atoms_; }
  const Vector& weights() const { return w_; }
  double weight(std::size_t i) const { return w_(static_cast<Eigen::Index>(i)); }
  SplitState atom(std::size_t i) const { return SplitState(m_, atoms_.row(static_cast<Eigen::Index>(i)).transpose()); }

  Vector mean() const {
    Vector mu = Vector::Zero(dim());
    for (Eigen::Index i = 0; i < atoms_.rows(); ++i) mu += w_(i) * atoms_.row(i).transpose();
    return mu;
  }
  // sum_i w_i |x_i|^k
  double moment(double k) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < atoms_.rows(); ++i) s += w_(i) * std::pow(atoms_.row(i).norm(), k);
    return s;
  }

 private:
  int m_ = 0, d_ = 0;
  Matrix atoms_;
  Vector w_;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string measure_csv_header(int m, int d) {
  std::string h = "weight";
  for (int i = 1; i <= m; ++i) h += ",x1_" + std::to_string(i);
  for (int i = 1; i <= d; ++i) h += ",x2_" + std::to_string(i);
  return h;
}

inline void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu) {
  os << measure_csv_header(mu.m(), mu.d()) << "\n";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    os << format_double(mu.weight(i));
    for (int j = 0; j < mu.dim(); ++j) os << "," << format_double(mu.atoms()(static_cast<Eigen::Index>(i), j));
    os << "\n";
  }
}

inline void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_measure_csv(os, mu);
}

// Columns weight, x1_1..x1_m, x2_1..x2_d; m and d are read off the header.
inline EmpiricalMeasure read_measure_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open measure file " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty measure file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) {
      while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
      while (!c.empty() && c.front() == ' ') c.erase(c.begin());
      cols.push_back(c);
    }
  }
  if (cols.empty() || cols[0] != "weight") throw std::runtime_error(path + ":1: first column must be 'weight'");
  int m = 0, d = 0;
  for (std::size_t i = 1; i < cols.size(); ++i) {
    if (cols[i].rfind("x1_", 0) == 0) {
      if (d > 0) throw std::runtime_error(path + ":1: x1 columns must precede x2 columns");
      ++m;
    } else if (cols[i].rfind("x2_", 0) == 0) {
      ++d;
    } else {
      throw std::runtime_error(path + ":1: unexpected column '" + cols[i] + "'");
    }
  }
  std::vector<double> w;
  std::vector<double> xs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    ss.imbue(std::locale::classic());
    std::string c;
    std::vector<double> row;
    while (std::getline(ss, c, ',')) {
      std::istringstream cs(c);
      cs.imbue(std::locale::classic());
      double v;
      if (!(cs >> v)) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a number '" + c + "'");
      row.push_back(v);
    }
    if (row.size() != cols.size()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong column count");
    w.push_back(row[0]);
    xs.insert(xs.end(), row.begin() + 1, row.end());
  }
  const auto n = static_cast<Eigen::Index>(w.size());
  Matrix atoms(n, m + d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < m + d; ++j) atoms(i, j) = xs[static_cast<std::size_t>(i * (m + d) + j)];
  return EmpiricalMeasure(m, d, std::move(atoms), Eigen::Map<Vector>(w.data(), n));
}

}  // namespace mvh
