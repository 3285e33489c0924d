#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Seed-splittable RNG utilities. All stochastic output in the library flows
// through these so that fixed-seed runs are byte-reproducible regardless of
// thread count: every replication / chain / subject gets its own stream
// derived from (master seed, salt...) and streams are consumed sequentially
// inside their owner.

namespace drord {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt1, std::uint64_t salt2 = 0) {
  std::uint64_t s = master ^ (0xA0761D6478BD642FULL * (salt1 + 1)) ^ (0xE7037ED1A0B428DBULL * (salt2 + 1));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}
  RngStream(std::uint64_t master, std::uint64_t salt1, std::uint64_t salt2 = 0)
      : gen_(derive_seed(master, salt1, salt2)) {}

  double uniform() {  // (0,1), never returns exactly 0 or 1
    std::uint64_t bits = gen_() >> 11;              // 53 bits
    double u = (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
    return u;
  }

  double normal() { return norm_quantile(uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  // index into probs (need not be exactly normalized; last bucket absorbs slack)
  template <typename V>
  int categorical(const V& probs) {
    double u = uniform(), c = 0.0;
    int last = static_cast<int>(probs.size()) - 1;
    for (int k = 0; k < last; ++k) {
      c += probs[k];
      if (u < c) return k;
    }
    return last;
  }

  std::uint64_t raw() { return gen_(); }

  // Wichura's AS241 double-precision normal quantile.
  static double norm_quantile(double p) {
    double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
      double r = 0.180625 - q * q;
      return q *
             (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r + 6.7265770927008700853e4) * r +
                  4.5921953931549871457e4) * r + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
             (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r + 3.9307895800092710610e4) * r +
                  2.1213794301586595867e4) * r + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                4.2313330701600911252e1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
      r -= 1.6;
      val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
                 1.27045825245236838258e0) * r + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
               4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
                 1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
               2.05319162663775882187e0) * r + 1.0);
    } else {
      r -= 5.0;
      val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
                 2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
               5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
                 7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
               5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
  }

 private:
  std::mt19937_64 gen_;
};

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730951); }

}  // namespace drord
