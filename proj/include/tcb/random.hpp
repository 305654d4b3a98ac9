#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tcb {

std::uint64_t splitmix64(std::uint64_t x);

// Independent stream for (seed, stream, index); any index is reachable
// without generating its predecessors.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n, double stddev = 1.0);
std::vector<double> random_unit_vector(std::mt19937_64& rng, std::size_t n);

// Stream identifiers so different experiments never share draws.
namespace streams {
inline constexpr std::uint64_t weights = 1;
inline constexpr std::uint64_t hidden = 2;
inline constexpr std::uint64_t directions = 3;
inline constexpr std::uint64_t geometry = 4;
inline constexpr std::uint64_t correlation = 5;
inline constexpr std::uint64_t verify = 6;
inline constexpr std::uint64_t probs = 7;
}  // namespace streams

}  // namespace tcb
