#pragma once

#include <limits>
#include <optional>

#include "tvspec/matrix_sequence.hpp"

namespace tvspec {

inline constexpr double kInvertibilityFloor = 1e-9;

/// Outcome of checking that a square sequence is bounded with bounded inverse.
struct LyapunovValidation {
  double norm_bound = 0.0;          // sup ||M_n||
  double inverse_norm_bound = 0.0;  // sup ||M_n^{-1}||, +inf if some M_n is singular
  double min_singular_value = std::numeric_limits<double>::infinity();
  bool ok = false;
  std::optional<Index> first_failing_index;
  Index failing_count = 0;
};

/// A factor counts as singular when sigma_min <= floor * sigma_max.
inline bool numerically_invertible(const Eigen::VectorXd& singular_values, double floor) {
  const double smax = singular_values(0);
  const double smin = singular_values(singular_values.size() - 1);
  return smax > 0.0 && std::isfinite(smax) && smin > floor * smax;
}

inline LyapunovValidation validate_lyapunov(const MatrixSequence& m,
                                            double floor = kInvertibilityFloor) {
  if (!m.square()) throw InputError("validate_lyapunov requires a square sequence");
  const Horizon& h = m.horizon();
  const auto count = static_cast<std::size_t>(h.size());
  std::vector<double> smax(count), smin(count);
  std::vector<char> good(count);
  parallel_for(0, h.size(), [&](Index i) {
    const auto k = static_cast<std::size_t>(i);
    const Eigen::VectorXd s = Eigen::JacobiSVD<Matrix>(m.at(h.n_min + i)).singularValues();
    smax[k] = s(0);
    smin[k] = s(s.size() - 1);
    good[k] = numerically_invertible(s, floor) ? 1 : 0;
  });

  LyapunovValidation out;
  for (std::size_t k = 0; k < count; ++k) {
    out.norm_bound = std::max(out.norm_bound, smax[k]);
    out.min_singular_value = std::min(out.min_singular_value, smin[k]);
    if (!good[k]) {
      ++out.failing_count;
      if (!out.first_failing_index) out.first_failing_index = h.n_min + static_cast<Index>(k);
    }
  }
  out.inverse_norm_bound = out.failing_count > 0 || out.min_singular_value <= 0.0
                               ? std::numeric_limits<double>::infinity()
                               : 1.0 / out.min_singular_value;
  out.ok = out.failing_count == 0 && std::isfinite(out.norm_bound) &&
           std::isfinite(out.inverse_norm_bound);
  return out;
}

}  // namespace tvspec
