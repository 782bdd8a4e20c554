#pragma once

#include <cstdint>
#include <vector>

#include "tvspec/matrix_sequence.hpp"
#include "tvspec/parallel.hpp"
#include "tvspec/random.hpp"

namespace tvspec {

/// Q diag(s) with Q orthogonal (QR of a seeded uniform matrix) and s_i drawn
/// from [1, max_condition], so cond(T) <= max_condition.
inline Matrix seeded_transform_at(int dim, std::uint64_t seed, Index n, double max_condition) {
  auto engine = indexed_engine(seed, n, 0x6b696eULL);
  Matrix g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = uniform(engine, -1.0, 1.0);
  Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(dim, dim);
  Vector s(dim);
  for (int i = 0; i < dim; ++i) s(i) = uniform(engine, 1.0, max_condition);
  return q * s.asDiagonal();
}

inline MatrixSequence seeded_transform(Horizon horizon, int dim, std::uint64_t seed,
                                       double max_condition = 10.0) {
  return MatrixSequence(
      dim, dim, horizon, "seeded_transform",
      [=](Index n) { return seeded_transform_at(dim, seed, n, max_condition); }, seed);
}

/// Random interval in [lo, hi] with width at least min_width; with
/// probability point_rate a single point instead.
inline Interval random_interval(SplitMixEngine& engine, double lo, double hi, double min_width,
                                double point_rate = 0.0) {
  if (unit_uniform(engine) < point_rate) {
    const double x = uniform(engine, lo, hi);
    return {x, x};
  }
  const double a = uniform(engine, lo, hi - min_width);
  return {a, uniform(engine, a + min_width, hi)};
}

/// Upper block-triangular D_n = [[A_n, C_n], [0, B_n]] with A (k x k) and
/// B ((d-k) x (d-k)) kinematically equivalent to upper-triangular systems
/// whose diagonals are dyadic sequences, and C uniform in [-2, 2].
struct BlockTriangularExample {
  MatrixSequence A;
  MatrixSequence B;
  MatrixSequence C;
  MatrixSequence D;
  std::vector<Interval> intervals;  // diagonal rates, first k belong to A
};

inline BlockTriangularExample block_triangular_example(Horizon horizon, int d, int k,
                                                       std::uint64_t seed) {
  if (k < 1 || k >= d) throw InputError("block split k must satisfy 1 <= k < d");
  auto engine = indexed_engine(seed, 0, 0x626c6bULL);
  std::vector<Interval> intervals;
  for (int i = 0; i < d; ++i) intervals.push_back(random_interval(engine, -2.0, 2.0, 0.1, 0.25));

  auto block = [&](int offset, int size, std::uint64_t salt) {
    const std::uint64_t block_seed = splitmix64(seed ^ salt);
    std::vector<Matrix> s(static_cast<std::size_t>(horizon.size() + 1));
    parallel_for(0, horizon.size() + 1, [&](Index i) {
      s[static_cast<std::size_t>(i)] = seeded_transform_at(size, block_seed, horizon.n_min + i, 4.0);
    });
    std::vector<Matrix> out(static_cast<std::size_t>(horizon.size()));
    parallel_for(0, horizon.size(), [&](Index i) {
      const Index n = horizon.n_min + i;
      auto e = indexed_engine(block_seed, n, 0x757070ULL);
      Matrix u = Matrix::Zero(size, size);
      for (int r = 0; r < size; ++r) {
        const auto& iv = intervals[static_cast<std::size_t>(offset + r)];
        u(r, r) = dyadic_value(iv.lo, iv.hi, n);
        for (int c = r + 1; c < size; ++c) u(r, c) = uniform(e, -1.0, 1.0);
      }
      const auto& s0 = s[static_cast<std::size_t>(i)];
      const auto& s1 = s[static_cast<std::size_t>(i + 1)];
      out[static_cast<std::size_t>(i)] = s1.partialPivLu().solve(u * s0);
    });
    return explicit_sequence(horizon, std::move(out));
  };

  BlockTriangularExample out;
  out.intervals = intervals;
  out.A = block(0, k, 0xa);
  out.B = block(k, d - k, 0xb);
  const std::uint64_t c_seed = splitmix64(seed ^ 0xc);
  out.C = random_bounded_sequence(horizon, k, d - k, c_seed, 2.0).materialize();
  const MatrixSequence a = out.A, b = out.B, c = out.C;
  out.D = MatrixSequence(d, d, horizon, "block_triangular", [=](Index n) {
            Matrix m = Matrix::Zero(d, d);
            m.topLeftCorner(k, k) = a.at(n);
            m.topRightCorner(k, d - k) = c.at(n);
            m.bottomRightCorner(d - k, d - k) = b.at(n);
            return m;
          }).materialize();
  return out;
}

}  // namespace tvspec
