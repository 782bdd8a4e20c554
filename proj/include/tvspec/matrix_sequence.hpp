#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tvspec/errors.hpp"
#include "tvspec/parallel.hpp"
#include "tvspec/random.hpp"

namespace tvspec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = std::int64_t;

inline constexpr Index kDefaultHalfHorizon = Index{1} << 14;

/// Finite window [n_min, n_max] of the integer time axis.
struct Horizon {
  Index n_min = -kDefaultHalfHorizon;
  Index n_max = kDefaultHalfHorizon;

  Index size() const noexcept { return n_max - n_min + 1; }
  bool contains(Index n) const noexcept { return n >= n_min && n <= n_max; }
  bool symmetric() const noexcept { return n_min == -n_max; }
  std::size_t offset(Index n) const noexcept { return static_cast<std::size_t>(n - n_min); }

  friend bool operator==(const Horizon&, const Horizon&) = default;
};

inline Horizon make_horizon(Index n_min, Index n_max) {
  if (!(n_min < n_max))
    throw InputError("horizon requires min < max, got [" + std::to_string(n_min) + ", " +
                     std::to_string(n_max) + "]");
  return Horizon{n_min, n_max};
}

inline Horizon symmetric_horizon(Index half = kDefaultHalfHorizon) {
  return make_horizon(-half, half);
}

/// Deterministic provider of rows x cols real matrices over a finite horizon.
///
/// Sequences are immutable values; copies share the underlying generator.
/// Evaluation is a pure function of the index, so repeated and concurrent
/// calls to at() return bit-identical matrices.
class MatrixSequence {
 public:
  using Generator = std::function<Matrix(Index)>;

  MatrixSequence() = default;
  MatrixSequence(int rows, int cols, Horizon horizon, std::string kind, Generator generator,
                 std::optional<std::uint64_t> seed = std::nullopt)
      : rows_(rows),
        cols_(cols),
        horizon_(horizon),
        kind_(std::move(kind)),
        seed_(seed),
        generator_(std::make_shared<const Generator>(std::move(generator))) {
    if (rows <= 0 || cols <= 0) throw InputError("matrix sequence needs positive dimensions");
    make_horizon(horizon.n_min, horizon.n_max);
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }
  const Horizon& horizon() const noexcept { return horizon_; }
  const std::string& kind() const noexcept { return kind_; }
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }

  Matrix at(Index n) const {
    if (!horizon_.contains(n))
      throw InputError("index " + std::to_string(n) + " outside horizon [" +
                       std::to_string(horizon_.n_min) + ", " + std::to_string(horizon_.n_max) +
                       "]");
    Matrix m = (*generator_)(n);
    if (m.rows() != rows_ || m.cols() != cols_)
      throw InputError("generator '" + kind_ + "' produced a matrix of the wrong shape at index " +
                       std::to_string(n));
    if (!m.allFinite())
      throw NumericalRangeError("non-finite entry in sequence '" + kind_ + "' at index " +
                                std::to_string(n));
    return m;
  }

  Matrix operator()(Index n) const { return at(n); }

  /// Every matrix on the horizon, in index order.
  std::vector<Matrix> sample() const {
    std::vector<Matrix> out(static_cast<std::size_t>(horizon_.size()));
    parallel_for(0, horizon_.size(), [&](Index i) {
      out[static_cast<std::size_t>(i)] = at(horizon_.n_min + i);
    });
    return out;
  }

  /// sup_n ||M_n||_2 over the horizon.
  double sup_norm() const {
    double best = 0.0;
    for (Index n = horizon_.n_min; n <= horizon_.n_max; ++n) {
      const Matrix m = at(n);
      const double norm = (m.rows() == 1 || m.cols() == 1)
                              ? m.norm()
                              : Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
      best = std::max(best, norm);
    }
    return best;
  }

  /// Copy with every value precomputed; useful before repeated scans of a composite.
  MatrixSequence materialize() const {
    auto values = std::make_shared<const std::vector<Matrix>>(sample());
    const Horizon h = horizon_;
    return MatrixSequence(rows_, cols_, h, kind_,
                          [values, h](Index n) { return (*values)[h.offset(n)]; }, seed_);
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  Horizon horizon_{};
  std::string kind_;
  std::optional<std::uint64_t> seed_;
  std::shared_ptr<const Generator> generator_;
};

// ---------------------------------------------------------------------------
// Generators

inline MatrixSequence explicit_sequence(Horizon horizon, std::vector<Matrix> values) {
  if (static_cast<Index>(values.size()) != horizon.size())
    throw InputError("explicit sequence needs " + std::to_string(horizon.size()) +
                     " matrices, got " + std::to_string(values.size()));
  const int rows = static_cast<int>(values.front().rows());
  const int cols = static_cast<int>(values.front().cols());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i].rows() != rows || values[i].cols() != cols)
      throw InputError("explicit sequence: matrix " + std::to_string(i) +
                       " has inconsistent shape");
  auto shared = std::make_shared<const std::vector<Matrix>>(std::move(values));
  return MatrixSequence(rows, cols, horizon, "explicit",
                        [shared, horizon](Index n) { return (*shared)[horizon.offset(n)]; });
}

inline MatrixSequence constant_sequence(Horizon horizon, Matrix value) {
  const int rows = static_cast<int>(value.rows());
  const int cols = static_cast<int>(value.cols());
  return MatrixSequence(rows, cols, horizon, "constant",
                        [v = std::move(value)](Index) { return v; });
}

/// M_n = values[n mod P] with the phase anchored at n = 0.
inline MatrixSequence periodic_sequence(Horizon horizon, std::vector<Matrix> values) {
  if (values.empty()) throw InputError("periodic sequence needs at least one matrix");
  const int rows = static_cast<int>(values.front().rows());
  const int cols = static_cast<int>(values.front().cols());
  for (const auto& m : values)
    if (m.rows() != rows || m.cols() != cols)
      throw InputError("periodic sequence: inconsistent matrix shapes");
  auto shared = std::make_shared<const std::vector<Matrix>>(std::move(values));
  return MatrixSequence(rows, cols, horizon, "periodic", [shared](Index n) {
    const auto period = static_cast<Index>(shared->size());
    const Index k = ((n % period) + period) % period;
    return (*shared)[static_cast<std::size_t>(k)];
  });
}

/// Closed interval on the log-growth-rate axis.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double x, double slack = 0.0) const noexcept {
    return x >= lo - slack && x <= hi + slack;
  }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Log of the dyadic block value at |n|: rate a on [4^m, 2*4^m), rate b on
/// [2*4^m, 4^(m+1)), and a at n = 0.
inline double dyadic_log_value(double a, double b, Index n) {
  const auto k = static_cast<std::uint64_t>(n < 0 ? -n : n);
  if (k == 0) return a;
  const int msb = 63 - __builtin_clzll(k);
  return (msb % 2 == 0) ? a : b;
}

inline double dyadic_value(double a, double b, Index n) {
  return std::exp(dyadic_log_value(a, b, n));
}

/// Diagonal sequence diag(p^1_n, ..., p^d_n) of dyadic block sequences; rows
/// beyond the number of intervals repeat the first interval's sequence.
inline MatrixSequence dyadic_sequence(Horizon horizon, std::vector<Interval> intervals, int dim) {
  if (intervals.empty() || static_cast<int>(intervals.size()) > dim)
    throw InputError("dyadic sequence needs between 1 and dim intervals");
  return MatrixSequence(dim, dim, horizon, "dyadic", [intervals, dim](Index n) {
    Matrix m = Matrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
      const auto& iv = intervals[static_cast<std::size_t>(i) < intervals.size() ? i : 0];
      m(i, i) = dyadic_value(iv.lo, iv.hi, n);
    }
    return m;
  });
}

/// M_n = diag_shift * I + scale * R_n with R_n entries uniform in [-1, 1],
/// drawn from an engine keyed by (seed, n).
inline MatrixSequence random_bounded_sequence(Horizon horizon, int rows, int cols,
                                              std::uint64_t seed, double scale = 1.0,
                                              double diag_shift = 0.0) {
  return MatrixSequence(
      rows, cols, horizon, "random_bounded",
      [=](Index n) {
        auto engine = indexed_engine(seed, n);
        Matrix m(rows, cols);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) m(i, j) = scale * uniform(engine, -1.0, 1.0);
        for (int i = 0; i < std::min(rows, cols); ++i) m(i, i) += diag_shift;
        return m;
      },
      seed);
}

}  // namespace tvspec
