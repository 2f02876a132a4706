#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace mvh {

enum class Stream : std::uint64_t {
  brownian = 1,
  initial = 2,
  subsample = 3,
  probe = 4,
  pairs = 5,
  coupled_start = 6,
};

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Philox4x32-10 block function.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * c[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += w0;
    k[1] += w1;
  }
  return c;
}

inline double u64_to_unit(std::uint64_t u) { return static_cast<double>(u >> 11) * 0x1.0p-53; }

// Counter-based engine: output is a pure function of (key, index, position).
class CounterEngine {
 public:
  using result_type = std::uint64_t;
  CounterEngine(std::uint64_t key, std::uint64_t index) : key_(key), index_(index) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    if (avail_ == 0) refill();
    return buf_[2 - avail_--];
  }
  double uniform() { return u64_to_unit((*this)()); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }
  std::size_t below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("below(0)");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  void refill() {
    const auto out = philox4x32({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                 static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32)},
                                {static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)});
    buf_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    buf_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    avail_ = 2;
    ++block_;
  }
  std::uint64_t key_, index_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buf_{};
  int avail_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Master seed plus stream derivation.  Brownian normals for (path, step) are
// generated directly from the counter, so any path or step can be regenerated.
class RngPolicy {
 public:
  explicit RngPolicy(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }

  std::uint64_t key(Stream s) const { return splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(s) * 0xA24BAED4963EE407ull)); }
  CounterEngine engine(Stream s, std::uint64_t index) const { return CounterEngine(key(s), index); }
  RngPolicy derive(std::uint64_t tag) const { return RngPolicy(splitmix64(seed_ + 0x632BE59BD9B4E019ull * (tag + 1))); }

  // Fills out with 2*d standard normals for the given path and step.
  void step_normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const {
    const std::uint64_t k = key(Stream::brownian);
    const std::size_t pairs = (out.size() + 1) / 2;
    for (std::size_t b = 0; b < pairs; ++b) {
      const auto r = philox4x32({static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(step),
                                 static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)},
                                {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)});
      const double u1 = 1.0 - u64_to_unit((static_cast<std::uint64_t>(r[0]) << 32) | r[1]);
      const double u2 = u64_to_unit((static_cast<std::uint64_t>(r[2]) << 32) | r[3]);
      const double rad = std::sqrt(-2.0 * std::log(u1));
      const double th = 2.0 * std::numbers::pi * u2;
      out[2 * b] = rad * std::cos(th);
      if (2 * b + 1 < out.size()) out[2 * b + 1] = rad * std::sin(th);
    }
  }

 private:
  std::uint64_t seed_;
};

// Brownian increment over a step and its first time moment I = int (s - s_k) dW_s.
// Given xi1, xi2 iid N(0,1): dW = sqrt(dt) xi1, I = dt^{3/2}(xi1/2 + xi2/(2 sqrt 3)).
inline void brownian_pair(std::span<const double> z, double dt, std::span<double> dw, std::span<double> di) {
  const std::size_t d = dw.size();
  const double sdt = std::sqrt(dt), c = dt * sdt;
  const double k2 = 0.5 / std::sqrt(3.0);
  for (std::size_t i = 0; i < d; ++i) {
    dw[i] = sdt * z[i];
    di[i] = c * (0.5 * z[i] + k2 * z[d + i]);
  }
}

}  // namespace mvh
