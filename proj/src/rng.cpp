#include "lmcpf/rng.hpp"

namespace lmcpf {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t cycle,
                          std::uint64_t point, Draw purpose) {
  std::uint64_t s = seed;
  s = splitmix64(s) ^ cycle;
  s = splitmix64(s) ^ point;
  s = splitmix64(s) ^ static_cast<std::uint64_t>(purpose);
  return splitmix64(s);
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t cycle,
                            std::uint64_t point, Draw purpose) {
  return std::mt19937_64(derive_seed(seed, cycle, point, purpose));
}

Matrix normal_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix out(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) out(i, j) = dist(rng);
  return out;
}

Vector normal_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector out(n);
  for (int i = 0; i < n; ++i) out(i) = dist(rng);
  return out;
}

Vector uniform_vector(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Vector out(n);
  for (int i = 0; i < n; ++i) out(i) = dist(rng);
  return out;
}

}  // namespace lmcpf
