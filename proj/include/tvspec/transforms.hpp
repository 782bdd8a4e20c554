#pragma once

#include <cmath>

#include "tvspec/lyapunov.hpp"
#include "tvspec/matrix_sequence.hpp"

namespace tvspec {

/// Closed loop n -> A_n + B_n U_n, evaluated lazily.
inline MatrixSequence apply_feedback(const MatrixSequence& a, const MatrixSequence& b,
                                     const MatrixSequence& u) {
  if (!a.square() || b.rows() != a.rows() || u.rows() != b.cols() || u.cols() != a.cols())
    throw InputError("apply_feedback: expected A d x d, B d x s, U s x d; got A " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ", B " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ", U " +
                     std::to_string(u.rows()) + "x" + std::to_string(u.cols()));
  if (a.horizon() != b.horizon() || a.horizon() != u.horizon())
    throw InputError("apply_feedback: horizons of A, B and U differ");
  return MatrixSequence(a.rows(), a.cols(), a.horizon(), "closed_loop",
                        [a, b, u](Index n) -> Matrix { return a.at(n) + b.at(n) * u.at(n); });
}

/// n -> T_{n+1}^{-1} M_n T_n, so that M_n T_n = T_{n+1} (result)_n.
///
/// T must cover the horizon of M. At n = M.n_max the successor T_{n+1} is
/// taken from T when available, otherwise T_{n_max} is reused.
inline MatrixSequence kinematic_conjugate(const MatrixSequence& m, const MatrixSequence& t,
                                          double floor = kInvertibilityFloor) {
  if (!m.square() || !t.square() || m.rows() != t.rows())
    throw InputError("kinematic_conjugate: M and T must be square of the same size");
  const Horizon& hm = m.horizon();
  const Horizon& ht = t.horizon();
  if (ht.n_min > hm.n_min || ht.n_max < hm.n_max)
    throw InputError("kinematic_conjugate: T does not cover the horizon of M");
  const auto check = validate_lyapunov(t, floor);
  if (!check.ok)
    throw SingularityError(check.first_failing_index.value_or(ht.n_min),
                           "kinematic_conjugate: transform T is not invertible");
  return MatrixSequence(m.rows(), m.cols(), hm, "transform", [m, t](Index n) -> Matrix {
    const Index next = std::min(n + 1, t.horizon().n_max);
    return t.at(next).partialPivLu().solve(m.at(n) * t.at(n));
  });
}

/// n -> e^{-gamma} M_n.
inline MatrixSequence shift(const MatrixSequence& m, double gamma) {
  if (!m.square()) throw InputError("shift requires a square sequence");
  if (gamma == 0.0) return m;
  const double factor = std::exp(-gamma);
  return MatrixSequence(m.rows(), m.cols(), m.horizon(), "transform",
                        [m, factor](Index n) -> Matrix { return factor * m.at(n); });
}

}  // namespace tvspec
