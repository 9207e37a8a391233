#pragma once

#include <cstdint>
#include <random>

#include "lmcpf/types.hpp"

namespace lmcpf {

// Purpose tag for a random stream. Every draw in the system comes from a
// generator seeded by (experiment seed, cycle, point, purpose), so any
// stream can be reproduced in isolation and no generator is shared across
// threads.
enum class Draw : std::uint64_t {
  EnsembleInit = 1,
  ObsNoise = 2,
  Resample = 3,
  SharedNoise = 4,
  PointNoise = 5,
  Rescue = 6,
  NormSim = 7,
};

// Mixes the four coordinates through a splitmix64 sponge. Changing any one
// coordinate decorrelates the whole stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t cycle,
                          std::uint64_t point, Draw purpose);

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t cycle,
                            std::uint64_t point, Draw purpose);

// Standard normal draws in column-major order (fill order is part of the
// reproducibility contract).
Matrix normal_matrix(int rows, int cols, std::mt19937_64& rng);
Vector normal_vector(int n, std::mt19937_64& rng);

// Uniform draws on [0,1).
Vector uniform_vector(int n, std::mt19937_64& rng);

}  // namespace lmcpf
