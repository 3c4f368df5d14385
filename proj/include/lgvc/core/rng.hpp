#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace lgvc::core {

/// Deterministic random stream. All distributions are hand-rolled on top of
/// mt19937_64 raw draws so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  /// Derives an independent child stream from a stable label. Every module
  /// draws from its own labeled stream so adding draws in one module does not
  /// perturb another.
  Rng child(const std::string& label) const {
    return from_seed(seed_, label);
  }

  static Rng from_seed(std::uint64_t seed, const std::string& label) {
    Rng r;
    r.seed_ = seed ^ fnv1a(label);
    r.engine_.seed(r.seed_);
    return r;
  }

  std::uint64_t raw() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(raw() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t r;
    do {
      r = raw();
    } while (r >= limit);
    return static_cast<std::int64_t>(r % un);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)],
                v[static_cast<size_t>(uniform_int(i + 1))]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << engine_ << ' ' << (have_cached_ ? 1 : 0) << ' ' << cached_ << ' '
       << seed_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int flag = 0;
    is >> engine_ >> flag >> cached_ >> seed_;
    have_cached_ = flag != 0;
  }

  static std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
  std::uint64_t seed_ = 0;
};

}  // namespace lgvc::core
