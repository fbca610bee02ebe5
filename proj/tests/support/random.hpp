#pragma once

#include <random>

#include "dissipic/common.hpp"

namespace testing_support {

using dissipic::Mat;
using dissipic::Vec;

inline Mat randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

inline Vec randn_vec(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) { return randn(rng, n, 1, scale); }

inline Mat rand_sym(std::mt19937_64& rng, Eigen::Index n) {
  Mat a = randn(rng, n, n);
  return 0.5 * (a + a.transpose());
}

inline Mat rand_psd(std::mt19937_64& rng, Eigen::Index n, Eigen::Index rank) {
  Mat a = randn(rng, rank, n);
  return a.transpose() * a;
}

// Random Hurwitz matrix: shifted so the spectral abscissa equals -margin.
inline Mat rand_hurwitz(std::mt19937_64& rng, Eigen::Index n, double margin = 0.5) {
  Mat a = randn(rng, n, n);
  const double abscissa = a.eigenvalues().real().maxCoeff();
  return a - (abscissa + margin) * Mat::Identity(n, n);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace testing_support
