#pragma once

#include "model.hpp"
#include "simulate.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace mvh {

using Json = nlohmann::json;

constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what) : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Typed access into a JSON tree that reports the dotted field path on failure.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const Json& raw() const { return *j_; }
  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node at(const std::string& key) const {
    if (!j_->is_object()) throw ConfigError(path_, "expected an object");
    if (!j_->contains(key)) throw ConfigError(child(key), "missing required field");
    return Node((*j_)[key], child(key));
  }
  Node at(std::size_t i) const {
    if (!j_->is_array() || i >= j_->size()) throw ConfigError(path_, "index " + std::to_string(i) + " out of range");
    return Node((*j_)[i], path_ + "[" + std::to_string(i) + "]");
  }
  std::size_t size() const {
    if (!j_->is_array()) throw ConfigError(path_, "expected an array");
    return j_->size();
  }

  double number() const {
    if (!j_->is_number()) throw ConfigError(path_, "expected a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) throw ConfigError(path_, "must be finite");
    return v;
  }
  std::uint64_t unsigned_int() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<long long>() >= 0))
      throw ConfigError(path_, "expected a non-negative integer");
    return j_->get<std::uint64_t>();
  }
  bool boolean() const {
    if (!j_->is_boolean()) throw ConfigError(path_, "expected true or false");
    return j_->get<bool>();
  }
  std::string string() const {
    if (!j_->is_string()) throw ConfigError(path_, "expected a string");
    return j_->get<std::string>();
  }

  double number(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }
  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) const { return has(key) ? at(key).unsigned_int() : fallback; }
  bool boolean(const std::string& key, bool fallback) const { return has(key) ? at(key).boolean() : fallback; }
  std::string string(const std::string& key, const std::string& fallback) const { return has(key) ? at(key).string() : fallback; }

  std::vector<double> numbers() const {
    std::vector<double> v(size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = at(i).number();
    return v;
  }
  Vector vector() const {
    const auto v = numbers();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  // Array of rows; a flat array is read as a single row.
  Matrix matrix() const {
    const std::size_t r = size();
    if (r == 0) throw ConfigError(path_, "empty matrix");
    if (!(*j_)[0].is_array()) {
      const Vector v = vector();
      return v.transpose();
    }
    const std::size_t c = at(0).size();
    Matrix a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r; ++i) {
      const Node row = at(i);
      if (row.size() != c) throw ConfigError(row.path(), "ragged matrix row");
      for (std::size_t k = 0; k < c; ++k) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row.at(k).number();
    }
    return a;
  }

 private:
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const Json* j_;
  std::string path_;
};

struct SimulationConfig {
  std::uint64_t seed = 0;
  double dt = 0.01;
  std::size_t n_paths = 10000;
  std::size_t n_particles = 256;
  int threads = 0;
};

struct RunConfig {
  std::filesystem::path file;
  std::filesystem::path base_dir;
  Json tree;
  std::optional<HamiltonianModel> model;
  EmpiricalMeasure initial;
  std::optional<EmpiricalMeasure> initial_tilde;
  SimulationConfig sim;
  std::string output_dir = "out";

  Node checks(const std::string& name) const {
    static const Json empty = Json::object();
    if (tree.contains("checks") && tree["checks"].contains(name)) return Node(tree["checks"][name], "checks." + name);
    return Node(empty, "checks." + name);
  }
  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : base_dir / q;
  }
};

inline DiniModulus parse_modulus(const Node& n, const std::filesystem::path& base) {
  const std::string fam = n.at("family").string();
  const double scale = n.number("scale", 1.0);
  try {
    if (fam == "power") return DiniModulus::power(n.at("kappa").number(), scale);
    if (fam == "log_power") return DiniModulus::log_power(n.at("p").number(), scale);
    if (fam == "custom") {
      if (n.has("file")) {
        const std::filesystem::path f(n.at("file").string());
        return load_modulus_table((f.is_absolute() ? f : base / f).string(), scale);
      }
      return DiniModulus::custom(n.at("r").numbers(), n.at("value").numbers(), scale);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(n.path(), e.what());
  }
  throw ConfigError(n.path() + ".family", "unknown modulus family '" + fam + "' (power, log_power, custom)");
}

inline SigmaSchedule parse_sigma(const Node& n) {
  try {
    if (n.raw().is_array()) return SigmaSchedule(n.matrix());
    const double amp = n.number("state_amplitude", 0.0);
    const Node vals = n.at("values");
    std::vector<Matrix> mats;
    for (std::size_t i = 0; i < vals.size(); ++i) mats.push_back(vals.at(i).matrix());
    const std::vector<double> times = n.has("times") ? n.at("times").numbers() : std::vector<double>{0.0};
    return SigmaSchedule(times, std::move(mats), amp);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(n.path(), e.what());
  }
}

inline DriftSpec parse_drift(const Node& n) {
  const std::string type = n.at("type").string();
  if (type == "zero") return ZeroDrift{};
  if (type == "linear_mean_field") return LinearMeanField{n.at("A1").matrix(), n.at("A2").matrix(), n.at("A3").matrix()};
  if (type == "bounded_interaction")
    return BoundedInteraction{n.at("kernel_freq").matrix(), n.at("kernel_amp").vector(), n.at("frame_freq").matrix(), n.at("frame_amp").vector()};
  throw ConfigError(n.path() + ".type", "unknown drift type '" + type + "' (zero, linear_mean_field, bounded_interaction)");
}

inline HamiltonianModel parse_model(const Node& n, const std::filesystem::path& base) {
  const Matrix M = n.at("M").matrix();
  if (n.has("m") && n.at("m").unsigned_int() != static_cast<std::uint64_t>(M.rows())) throw ConfigError(n.path() + ".m", "does not match the rows of M");
  if (n.has("d") && n.at("d").unsigned_int() != static_cast<std::uint64_t>(M.cols())) throw ConfigError(n.path() + ".d", "does not match the columns of M");
  SigmaSchedule sigma = parse_sigma(n.at("sigma"));
  DriftSpec drift = parse_drift(n.at("drift"));
  const double kb = n.at("K_B").number(), beta = n.at("beta").number(), T = n.at("T").number();
  DiniModulus alpha = parse_modulus(n.at("modulus"), base);
  try {
    HamiltonianModel model(M, std::move(sigma), std::move(drift), kb, beta, std::move(alpha), T);
    model.fd_jacobian = n.boolean("fd_jacobian", false);
    return model;
  } catch (const std::exception& e) {
    throw ConfigError(n.path(), e.what());
  }
}

inline EmpiricalMeasure parse_measure(const Node& n, int m, int d, const std::filesystem::path& base) {
  try {
    if (n.has("dirac")) {
      const Vector v = n.at("dirac").vector();
      if (v.size() != m + d) throw ConfigError(n.path() + ".dirac", "expected " + std::to_string(m + d) + " coordinates");
      return EmpiricalMeasure::dirac(SplitState(m, v));
    }
    if (n.has("file")) {
      const std::filesystem::path f(n.at("file").string());
      EmpiricalMeasure g = read_measure_csv((f.is_absolute() ? f : base / f).string());
      if (g.m() != m || g.d() != d) throw ConfigError(n.path() + ".file", "measure dimensions do not match the model");
      return g;
    }
    const Matrix a = n.at("atoms").matrix();
    if (a.cols() != m + d) throw ConfigError(n.path() + ".atoms", "expected " + std::to_string(m + d) + " columns");
    if (!n.has("weights")) return EmpiricalMeasure::uniform(m, d, a);
    return EmpiricalMeasure(m, d, a, n.at("weights").vector());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(n.path(), e.what());
  }
}

// Byte offset to "line L, column C" for parse diagnostics.
inline std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline RunConfig parse_config_text(const std::string& text, const std::filesystem::path& file) {
  RunConfig c;
  c.file = file;
  c.base_dir = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
  try {
    c.tree = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(file.string(), std::string("parse error at ") + line_column(text, e.byte == 0 ? 0 : e.byte - 1));
  }
  const Node root(c.tree, "");
  if (!c.tree.is_object()) throw ConfigError("<root>", "expected an object");
  const auto ver = root.at("schema_version").unsigned_int();
  if (ver != static_cast<std::uint64_t>(kSchemaVersion)) throw ConfigError("schema_version", "unsupported version " + std::to_string(ver));
  c.model = parse_model(root.at("model"), c.base_dir);
  const int m = c.model->m(), d = c.model->d();
  c.initial = root.has("initial") ? parse_measure(root.at("initial"), m, d, c.base_dir) : EmpiricalMeasure::dirac(SplitState::zeros(m, d));
  if (root.has("initial_tilde")) c.initial_tilde = parse_measure(root.at("initial_tilde"), m, d, c.base_dir);

  const Node sim = root.at("simulation");
  c.sim.seed = sim.at("seed").unsigned_int();
  c.sim.dt = sim.at("dt").number();
  c.sim.n_paths = sim.unsigned_int("n_paths", c.sim.n_paths);
  c.sim.n_particles = sim.unsigned_int("n_particles", c.sim.n_particles);
  c.sim.threads = static_cast<int>(sim.unsigned_int("threads", 0));
  if (!(c.sim.dt > 0)) throw ConfigError("simulation.dt", "must be positive");
  const double T = c.model->T();
  if (std::abs(std::round(T / c.sim.dt) * c.sim.dt - T) > 1e-9) throw ConfigError("simulation.dt", "must divide model.T within 1e-9");
  if (c.sim.n_paths < 2) throw ConfigError("simulation.n_paths", "must be at least 2");
  if (c.sim.n_particles < 2) throw ConfigError("simulation.n_particles", "must be at least 2");
  if (root.has("checks")) c.output_dir = root.at("checks").string("output_dir", c.output_dir);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), file);
}

}  // namespace mvh
