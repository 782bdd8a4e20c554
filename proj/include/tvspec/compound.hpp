#pragma once

#include <vector>

#include "tvspec/matrix_sequence.hpp"

namespace tvspec {

/// All k-element subsets of {0, ..., d-1} in lexicographic order.
inline std::vector<std::vector<int>> index_subsets(int d, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > d) return out;
  std::vector<int> cur(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i;
  while (true) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == d - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

/// k-th compound (exterior power) matrix: entry (I, J) is the k x k minor of m
/// on rows I and columns J. Compounds are multiplicative (Cauchy-Binet), and
/// the largest singular value of the k-th compound is sigma_1 * ... * sigma_k.
inline Matrix compound(const Matrix& m, int k, const std::vector<std::vector<int>>& subsets) {
  const auto size = static_cast<Eigen::Index>(subsets.size());
  Matrix out(size, size);
  Matrix minor(k, k);
  for (Eigen::Index r = 0; r < size; ++r) {
    const auto& rows = subsets[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < size; ++c) {
      const auto& cols = subsets[static_cast<std::size_t>(c)];
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          minor(i, j) = m(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
      out(r, c) = minor.determinant();
    }
  }
  return out;
}

inline Matrix compound(const Matrix& m, int k) {
  if (k == 1) return m;
  return compound(m, k, index_subsets(static_cast<int>(m.rows()), k));
}

}  // namespace tvspec
