#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "tvspec/lyapunov.hpp"
#include "tvspec/matrix_sequence.hpp"

namespace tvspec {

/// unit * exp(log_scale), with max|unit_ij| = 1 (or unit = 0, log_scale = -inf).
/// Long products stay representable because the magnitude lives in log_scale.
struct ScaledMatrix {
  Matrix unit;
  double log_scale = 0.0;

  static ScaledMatrix identity(Eigen::Index d) { return {Matrix::Identity(d, d), 0.0}; }

  static ScaledMatrix from(const Matrix& m, double log_scale = 0.0) {
    ScaledMatrix out{m, log_scale};
    out.normalize();
    return out;
  }

  void normalize() {
    const double s = unit.cwiseAbs().maxCoeff();
    if (s == 0.0 || !std::isfinite(s)) {
      if (!std::isfinite(s)) throw NumericalRangeError("non-finite value in scaled product");
      log_scale = -std::numeric_limits<double>::infinity();
      return;
    }
    unit /= s;
    log_scale += std::log(s);
  }

  /// Dense value; throws when it would overflow.
  Matrix value() const {
    if (log_scale == -std::numeric_limits<double>::infinity())
      return Matrix::Zero(unit.rows(), unit.cols());
    if (log_scale > 700.0)
      throw NumericalRangeError("evolution operator exceeds double range (log scale " +
                                std::to_string(log_scale) + ")");
    return unit * std::exp(log_scale);
  }

  friend ScaledMatrix operator*(const ScaledMatrix& a, const ScaledMatrix& b) {
    ScaledMatrix out{a.unit * b.unit, a.log_scale + b.log_scale};
    out.normalize();
    return out;
  }
};

/// Products F_{m-1} ... F_n of a finite factor list (offsets 0..size-1) with
/// checkpoints every `stride` factors.
///
/// Preprocessing stores, for every offset, the partial product to the next
/// checkpoint (suffix) and from the previous checkpoint (prefix), plus the
/// full block products. Any query then costs O((m - n) / stride) products.
class CheckpointedProducts {
 public:
  CheckpointedProducts() = default;

  CheckpointedProducts(std::vector<Matrix> factors, Index stride)
      : factors_(std::move(factors)), stride_(stride) {
    if (stride_ < 1) throw InputError("checkpoint stride must be positive");
    if (factors_.empty()) return;
    dim_ = factors_.front().rows();
    const auto count = static_cast<Index>(factors_.size());
    const Index blocks = (count + stride_ - 1) / stride_;
    prefix_.resize(factors_.size() + 1);
    suffix_.resize(factors_.size() + 1);
    block_.resize(static_cast<std::size_t>(blocks));
    parallel_for(0, blocks, [&](Index b) {
      const Index lo = b * stride_;
      const Index hi = std::min(count, lo + stride_);
      // prefix_[j] = F_{j-1}...F_lo for lo < j <= hi; identity on checkpoints.
      ScaledMatrix acc = ScaledMatrix::identity(dim_);
      prefix_[static_cast<std::size_t>(lo)] = acc;
      for (Index j = lo + 1; j <= hi; ++j) {
        acc = ScaledMatrix::from(factors_[static_cast<std::size_t>(j - 1)]) * acc;
        if (j % stride_ != 0) prefix_[static_cast<std::size_t>(j)] = acc;
      }
      block_[static_cast<std::size_t>(b)] = acc;
      // suffix_[i] = F_{hi-1}...F_i for lo < i < hi.
      acc = ScaledMatrix::identity(dim_);
      for (Index i = hi - 1; i > lo; --i) {
        acc = acc * ScaledMatrix::from(factors_[static_cast<std::size_t>(i)]);
        suffix_[static_cast<std::size_t>(i)] = acc;
      }
    });
    suffix_[0] = ScaledMatrix::identity(dim_);
  }

  Index size() const noexcept { return static_cast<Index>(factors_.size()); }
  Index stride() const noexcept { return stride_; }
  Eigen::Index dim() const noexcept { return dim_; }
  const Matrix& factor(Index i) const { return factors_[static_cast<std::size_t>(i)]; }

  /// Reuses the run of full blocks between two queries with the same checkpoints.
  struct BlockRunCache {
    Index first = -1;
    Index last = -1;
    ScaledMatrix value;
  };

  /// F_{m-1} ... F_n for 0 <= n <= m <= size().
  ScaledMatrix product(Index m, Index n, BlockRunCache* cache = nullptr) const {
    if (n < 0 || m > size() || n > m) throw InputError("product range out of bounds");
    if (m == n) return ScaledMatrix::identity(dim_);
    const Index first_cp = ((n + stride_ - 1) / stride_) * stride_;
    const Index last_cp = (m / stride_) * stride_;
    if (first_cp > last_cp) return sequential(m, n);
    ScaledMatrix run = ScaledMatrix::identity(dim_);
    if (cache != nullptr && cache->first == first_cp && cache->last == last_cp) {
      run = cache->value;
    } else {
      for (Index b = first_cp / stride_; b < last_cp / stride_; ++b)
        run = block_[static_cast<std::size_t>(b)] * run;
      if (cache != nullptr) *cache = BlockRunCache{first_cp, last_cp, run};
    }
    ScaledMatrix acc = n == first_cp ? run : run * suffix_[static_cast<std::size_t>(n)];
    if (m != last_cp) acc = prefix_[static_cast<std::size_t>(m)] * acc;
    // Composing precomputed pieces cancels exactly when one piece's output
    // lies in the next piece's contracting subspace (triangular structure).
    if (acc.log_scale == -std::numeric_limits<double>::infinity()) return sequential(m, n);
    return acc;
  }

  /// F_{m-1} ... F_n one factor at a time.
  ScaledMatrix sequential(Index m, Index n) const {
    ScaledMatrix acc = ScaledMatrix::identity(dim_);
    for (Index i = n; i < m; ++i) acc = ScaledMatrix::from(factors_[static_cast<std::size_t>(i)]) * acc;
    return acc;
  }

 private:
  std::vector<Matrix> factors_;
  Index stride_ = 64;
  Eigen::Index dim_ = 0;
  std::vector<ScaledMatrix> prefix_;
  std::vector<ScaledMatrix> suffix_;
  std::vector<ScaledMatrix> block_;
};

inline constexpr Index kCheckpointStride = 64;

/// Evolution operator Phi(m, n) of x_{k+1} = M_k x_k over a finite horizon:
/// M_{m-1}...M_n for m > n, identity for m = n, M_m^{-1}...M_{n-1}^{-1} for m < n.
///
/// Forward products use checkpoints; dense results are memoized per (m, n).
/// All methods are safe to call concurrently.
class EvolutionCache {
 public:
  explicit EvolutionCache(MatrixSequence base, Index stride = kCheckpointStride,
                          double floor = kInvertibilityFloor)
      : base_(std::move(base)), floor_(floor) {
    if (!base_.square()) throw InputError("evolution requires a square sequence");
    products_ = CheckpointedProducts(base_.sample(), stride);
  }

  const MatrixSequence& base() const noexcept { return base_; }
  const Horizon& horizon() const noexcept { return base_.horizon(); }
  Index stride() const noexcept { return products_.stride(); }

  ScaledMatrix scaled(Index m, Index n) const {
    const Horizon& h = horizon();
    if (!h.contains(m) || !h.contains(n))
      throw InputError("evolution(" + std::to_string(m) + ", " + std::to_string(n) +
                       ") outside horizon");
    if (m >= n) return products_.product(static_cast<Index>(h.offset(m)),
                                         static_cast<Index>(h.offset(n)));
    // Phi(m, n) = M_m^{-1} ... M_{n-1}^{-1}
    ScaledMatrix acc = ScaledMatrix::identity(base_.rows());
    for (Index k = m; k < n; ++k) {
      const Matrix& f = products_.factor(static_cast<Index>(h.offset(k)));
      Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
      if (!numerically_invertible(svd.singularValues(), floor_))
        throw SingularityError(k, "evolution: factor is not invertible");
      const Matrix inv = svd.matrixV() *
                         svd.singularValues().cwiseInverse().asDiagonal() *
                         svd.matrixU().transpose();
      acc = acc * ScaledMatrix::from(inv);
    }
    return acc;
  }

  Matrix evolution(Index m, Index n) const {
    {
      std::lock_guard<std::mutex> lock(memo_->mutex);
      const auto it = memo_->values.find({m, n});
      if (it != memo_->values.end()) return it->second;
    }
    Matrix value = scaled(m, n).value();
    std::lock_guard<std::mutex> lock(memo_->mutex);
    memo_->values.emplace(std::pair{m, n}, value);
    return value;
  }

 private:
  struct Memo {
    std::mutex mutex;
    std::map<std::pair<Index, Index>, Matrix> values;
  };

  MatrixSequence base_;
  double floor_;
  CheckpointedProducts products_;
  std::shared_ptr<Memo> memo_ = std::make_shared<Memo>();
};

inline Matrix evolution(const EvolutionCache& cache, Index m, Index n) {
  return cache.evolution(m, n);
}

}  // namespace tvspec
