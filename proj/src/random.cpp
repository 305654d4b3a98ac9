#include "tcb/random.hpp"

#include <cmath>

namespace tcb {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
  const std::uint64_t c = splitmix64(b ^ splitmix64(index + 0x85157AF5ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = stddev * normal(rng);
  return v;
}

std::vector<double> random_unit_vector(std::mt19937_64& rng, std::size_t n) {
  for (;;) {
    auto v = gaussian_vector(rng, n);
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (auto& x : v) x *= inv;
      return v;
    }
  }
}

}  // namespace tcb
