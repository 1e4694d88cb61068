#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mts {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic per-repetition stream keyed by indices, never by execution
// order: the worker count cannot change the draws.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = root ^ 0x6a09e667f3bcc908ULL;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t step : path) {
    state ^= step + 0x9e3779b97f4a7c15ULL + (out << 6) + (out >> 2);
    out = splitmix64(state);
  }
  return out;
}

inline std::mt19937_64 seeded_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return std::mt19937_64(derive_seed(root, path));
}

// Standard normal fills, column by column (observation by observation).
inline Eigen::MatrixXd sample_gaussian(Eigen::Index rows, Eigen::Index cols,
                                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline Eigen::VectorXd sample_gaussian_vector(Eigen::Index size, std::mt19937_64& rng) {
  return sample_gaussian(size, 1, rng).col(0);
}

// Uniformly random +-1 signs.
inline Eigen::VectorXd sample_signs(Eigen::Index size, std::mt19937_64& rng) {
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = (rng() & 1u) ? 1.0 : -1.0;
  return v;
}

// Fisher-Yates permutation of 0..n-1.
inline std::vector<int> sample_permutation(int n, std::mt19937_64& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
  }
  return perm;
}

}  // namespace mts
