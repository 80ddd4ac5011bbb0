#pragma once

#include <doctest.h>

#include <random>

#include "kfac2l/rng.hpp"
#include "kfac2l/twolevel.hpp"

namespace testing {

using kfac2l::Index;
using kfac2l::Matrix;
using kfac2l::Vector;

inline std::mt19937_64 engine(std::uint64_t counter) {
  return kfac2l::make_engine(20240917, kfac2l::Stream::Test, counter);
}

inline Matrix random_matrix(std::mt19937_64& e, Index rows, Index cols) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(e);
  return m;
}

inline Vector random_vector(std::mt19937_64& e, Index n) { return random_matrix(e, n, 1).col(0); }

inline Matrix random_spd(std::mt19937_64& e, Index n) {
  Matrix m = random_matrix(e, n, n);
  return m.transpose() * m + Matrix::Identity(n, n);
}

inline Index uniform(std::mt19937_64& e, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(e);
}

inline double rel(const Matrix& a, const Matrix& b) { return kfac2l::linalg::relative_error(a, b); }

}  // namespace testing
