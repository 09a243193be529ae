#pragma once

// Seeded random streams. Distributions are implemented here rather than
// taken from <random> so that sampled values are identical across standard
// library implementations.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace slate_ope {

using Rng = std::mt19937_64;

// Deterministic stream derived from a base seed and a path of stream ids,
// e.g. make_rng(seed, {kDatasetStream, n}).
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Uniform on [0, 1) with 53 random bits.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double standard_normal(Rng& rng);
// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);
bool bernoulli(Rng& rng, double p);

}  // namespace slate_ope
