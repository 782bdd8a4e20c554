#pragma once

#include <cmath>
#include <cstdint>

#include "tvspec/matrix_sequence.hpp"

namespace tvspec::testing {

/// Diagonally dominant seeded sequence: uniformly invertible for any d.
inline MatrixSequence lyapunov_random(Horizon h, int d, std::uint64_t seed) {
  return random_bounded_sequence(h, d, d, seed, 0.5 / d, 1.0);
}

/// M_{m-1} ... M_n by plain multiplication.
inline Matrix naive_product(const MatrixSequence& m, Index hi, Index lo) {
  Matrix acc = Matrix::Identity(m.rows(), m.rows());
  for (Index k = lo; k < hi; ++k) acc = m.at(k) * acc;
  return acc;
}

inline double relative_error(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

}  // namespace tvspec::testing
