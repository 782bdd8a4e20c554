#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "tvspec/controllability.hpp"
#include "tvspec/lyapunov.hpp"
#include "tvspec/matrix_sequence.hpp"
#include "tvspec/random.hpp"
#include "tvspec/spectrum.hpp"
#include "tvspec/transforms.hpp"

namespace tvspec {

/// Prescribed union of 1 <= l <= d disjoint closed intervals.
struct TargetSpectrum {
  std::vector<Interval> intervals;
};

inline TargetSpectrum make_targets(std::vector<Interval> intervals, int dim) {
  if (intervals.empty()) throw InputError("target spectrum needs at least one interval");
  if (static_cast<int>(intervals.size()) > dim)
    throw InputError("target spectrum has " + std::to_string(intervals.size()) +
                     " intervals but the system dimension is " + std::to_string(dim));
  for (const auto& iv : intervals)
    if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
      throw InputError("target interval [" + std::to_string(iv.lo) + ", " + std::to_string(iv.hi) +
                       "] is not a finite closed interval");
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (std::size_t i = 1; i < intervals.size(); ++i)
    if (!(intervals[i - 1].hi < intervals[i].lo))
      throw InputError("target intervals must be pairwise disjoint");
  return TargetSpectrum{std::move(intervals)};
}

// ---------------------------------------------------------------------------
// Diagonal targets

/// Scalar dyadic block sequences p^1..p^d, symmetric in n, positive; rows past
/// the number of target intervals copy p^1.
struct DiagonalTargets {
  Horizon horizon{};
  std::vector<Interval> intervals;
  std::vector<std::vector<double>> values;  // values[i][horizon.offset(n)]

  int dim() const noexcept { return static_cast<int>(values.size()); }
  double at(int i, Index n) const {
    return values[static_cast<std::size_t>(i)][horizon.offset(n)];
  }

  MatrixSequence scalar(int i) const {
    auto row = std::make_shared<const std::vector<double>>(values[static_cast<std::size_t>(i)]);
    const Horizon h = horizon;
    return MatrixSequence(1, 1, h, "dyadic", [row, h](Index n) {
      return Matrix::Constant(1, 1, (*row)[h.offset(n)]);
    });
  }

  MatrixSequence diagonal() const {
    auto copy = std::make_shared<const DiagonalTargets>(*this);
    return MatrixSequence(dim(), dim(), horizon, "dyadic", [copy](Index n) {
      Matrix m = Matrix::Zero(copy->dim(), copy->dim());
      for (int i = 0; i < copy->dim(); ++i) m(i, i) = copy->at(i, n);
      return m;
    });
  }
};

inline DiagonalTargets build_diagonal_sequences(const TargetSpectrum& targets, Horizon horizon,
                                                int dim) {
  if (!horizon.symmetric())
    throw InputError("dyadic targets need a horizon symmetric about 0, got [" +
                     std::to_string(horizon.n_min) + ", " + std::to_string(horizon.n_max) + "]");
  const auto checked = make_targets(targets.intervals, dim);
  DiagonalTargets out;
  out.horizon = horizon;
  out.intervals = checked.intervals;
  out.values.resize(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    const auto& iv = checked.intervals[static_cast<std::size_t>(i) < checked.intervals.size() ? i : 0];
    auto& row = out.values[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(horizon.size()));
    for (Index n = horizon.n_min; n <= horizon.n_max; ++n)
      row[horizon.offset(n)] = dyadic_value(iv.lo, iv.hi, n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Window synthesis

/// Feedback on one window [k0, k0 + K) whose closed-loop transition is D.
struct WindowSynthesis {
  Index k0 = 0;
  Index K = 0;
  std::vector<Matrix> gains;       // F_j: open-loop u_j = F_j xi
  std::vector<Matrix> state_maps;  // L_j: x_j = L_j xi, j = k0 .. k0 + K
  std::vector<Matrix> feedback;    // U_j = F_j L_j^{-1}
};

inline constexpr double kMaxStateMapCondition = 1e8;
// State maps inherit the spread of the target rates over the window, so only
// numerical singularity is rejected there; the transform T is capped separately.
inline constexpr double kSingularCondition = 1e13;

inline double condition_number(const Matrix& m) {
  const Eigen::VectorXd s = Eigen::JacobiSVD<Matrix>(m).singularValues();
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

/// Steers every basis vector xi from the free drift Phi_A(k0 + K, k0) xi to
/// D xi with minimum-energy open-loop controls, then converts the open-loop
/// gains into state feedback through the in-window state maps.
inline WindowSynthesis assign_window_transition(const MatrixSequence& a, const MatrixSequence& b,
                                                Index k0, Index K, const Matrix& target,
                                                double max_condition = kSingularCondition) {
  detail::check_control_pair(a, b);
  detail::check_window(a.horizon(), k0, K);
  const Eigen::Index d = a.rows();
  if (target.rows() != d || target.cols() != d)
    throw InputError("window target transition has the wrong shape");
  if (!std::isfinite(condition_number(target)) || condition_number(target) > max_condition)
    throw SynthesisError(k0, "target window transition is not invertible");

  const auto rows = detail::steering_rows([&](Index j) { return a.at(j); },
                                          [&](Index j) { return b.at(j); }, k0, K, d);
  Matrix w = Matrix::Zero(d, d);
  for (const auto& g : rows) w += g.transpose() * g;
  w = 0.5 * (w + w.transpose());
  const Eigen::LLT<Matrix> llt(w);
  if (llt.info() != Eigen::Success || condition_number(w) > 1e14)
    throw SynthesisError(k0, "controllability Gramian is singular on this window");

  Matrix drift = Matrix::Identity(d, d);
  for (Index j = k0; j < k0 + K; ++j) drift = a.at(j) * drift;
  const Matrix lambda = llt.solve(target - drift);

  WindowSynthesis out;
  out.k0 = k0;
  out.K = K;
  out.gains.reserve(static_cast<std::size_t>(K));
  out.state_maps.reserve(static_cast<std::size_t>(K) + 1);
  out.feedback.reserve(static_cast<std::size_t>(K));
  out.state_maps.push_back(Matrix::Identity(d, d));
  for (Index j = k0; j < k0 + K; ++j) {
    const Matrix& l = out.state_maps.back();
    const double cond = condition_number(l);
    if (!(cond <= max_condition))
      throw SynthesisError(k0, "state map at index " + std::to_string(j) +
                                   " is singular (condition " + std::to_string(cond) + ")");
    Matrix f = rows[static_cast<std::size_t>(j - k0)] * lambda;
    Matrix u = l.transpose().partialPivLu().solve(f.transpose()).transpose();
    Matrix next = a.at(j) * l + b.at(j) * f;
    out.gains.push_back(std::move(f));
    out.feedback.push_back(std::move(u));
    out.state_maps.push_back(std::move(next));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Triangularization

struct TriangularizeOptions {
  std::optional<std::uint64_t> offdiag_seed;  // seeded bounded upper entries of C
  double offdiag_scale = 2.0;
  int max_retries = 4;
  double max_condition = kMaxStateMapCondition;
};

struct Triangularization {
  MatrixSequence U;
  MatrixSequence C;
  MatrixSequence T;
  std::vector<std::pair<Index, Index>> windows;  // (start, length)
  int retries = 0;
};

/// Upper-triangular C_n with diagonal p^i_n and, when seeded, strictly upper
/// entries uniform in [-scale, scale].
inline MatrixSequence triangular_targets(const DiagonalTargets& diag,
                                         std::optional<std::uint64_t> seed, double scale) {
  auto copy = std::make_shared<const DiagonalTargets>(diag);
  return MatrixSequence(
      diag.dim(), diag.dim(), diag.horizon, "explicit",
      [copy, seed, scale](Index n) {
        const int d = copy->dim();
        Matrix c = Matrix::Zero(d, d);
        std::optional<SplitMixEngine> engine;
        if (seed) engine = indexed_engine(*seed, n, 0x7472690aULL);
        for (int i = 0; i < d; ++i) {
          c(i, i) = copy->at(i, n);
          if (engine)
            for (int j = i + 1; j < d; ++j) c(i, j) = uniform(*engine, -scale, scale);
        }
        return c;
      },
      seed);
}

/// Partitions the horizon into windows of the certificate's length K and on
/// each window matches the closed-loop transition to the product of C_n.
/// T_n = L_n Phi_C(n, k0)^{-1} inside a window and T = I on window starts, so
/// (A_n + B_n U_n) T_n = T_{n+1} C_n for every n < n_max.
///
/// A window whose state maps are ill-conditioned is retried with doubled
/// length (more steering freedom), at most `max_retries` times.
inline Triangularization triangularize_with_feedback(const MatrixSequence& a,
                                                     const MatrixSequence& b,
                                                     const DiagonalTargets& diag,
                                                     const UccCertificate& cert,
                                                     const TriangularizeOptions& opts = {}) {
  detail::check_control_pair(a, b);
  if (!cert.ok || cert.K < 1) throw ControllabilityError("triangularization needs a valid UCC certificate");
  if (diag.dim() != a.rows() || diag.horizon != a.horizon())
    throw InputError("diagonal targets do not match the system dimension or horizon");
  const Horizon& h = a.horizon();
  const Eigen::Index d = a.rows();
  const Eigen::Index s = b.cols();
  const Index K = cert.K;
  if (h.n_max - h.n_min < K) throw InputError("horizon shorter than the controllability window");

  const MatrixSequence c = triangular_targets(diag, opts.offdiag_seed, opts.offdiag_scale);
  std::vector<Matrix> us(static_cast<std::size_t>(h.size()), Matrix::Zero(s, d));
  std::vector<Matrix> ts(static_cast<std::size_t>(h.size()), Matrix::Identity(d, d));
  Triangularization out;

  Index k0 = h.n_min;
  while (k0 < h.n_max) {
    const Index remaining = h.n_max - k0;
    auto clamp = [&](Index len) { return remaining - len < K ? remaining : std::min(len, remaining); };
    Index len = clamp(K);
    for (int attempt = 0;; ++attempt) {
      // desired transition: product of C over the window, and partial products for T
      std::vector<Matrix> partial;
      partial.reserve(static_cast<std::size_t>(len) + 1);
      partial.push_back(Matrix::Identity(d, d));
      for (Index j = k0; j < k0 + len; ++j) partial.push_back(c.at(j) * partial.back());
      try {
        const WindowSynthesis syn =
            assign_window_transition(a, b, k0, len, partial.back());
        for (Index j = k0; j < k0 + len; ++j) {
          const auto i = static_cast<std::size_t>(j - k0);
          us[h.offset(j)] = syn.feedback[i];
          // T_j = L_j P_j^{-1}
          ts[h.offset(j)] =
              partial[i].transpose().partialPivLu().solve(syn.state_maps[i].transpose()).transpose();
          if (!(condition_number(ts[h.offset(j)]) <= opts.max_condition))
            throw SynthesisError(k0, "transform at index " + std::to_string(j) + " is ill-conditioned");
        }
        out.windows.emplace_back(k0, len);
        break;
      } catch (const SynthesisError&) {
        if (attempt >= opts.max_retries || len == remaining) throw;
        ++out.retries;
        len = clamp(2 * len);
      }
    }
    k0 += len;
  }

  out.U = explicit_sequence(h, std::move(us));
  out.C = c.materialize();
  out.T = explicit_sequence(h, std::move(ts));
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end assignment

struct AssignOptions {
  int max_window = 32;
  double gramian_floor = kGramianFloor;
  double tolerance = 0.05;
  SpectrumOptions spectrum{};
  TriangularizeOptions triangularize{};
};

struct Verification {
  SpectrumEstimate estimate;
  std::vector<Interval> targets;
  double tolerance = 0.05;
  double max_endpoint_error = 0.0;
  bool passed = false;
};

struct AssignmentResult {
  TargetSpectrum targets;
  MatrixSequence U;
  MatrixSequence C;
  MatrixSequence T;
  UccCertificate certificate;
  LyapunovValidation closed_loop_validation;
  double equivalence_residual = 0.0;
  std::vector<std::pair<Index, Index>> windows;
  int retries = 0;
  Verification verification;
};

/// max_n ||(A+BU)_n T_n - T_{n+1} C_n|| / max(1, ||(A+BU)_n|| ||T_n||, ||T_{n+1}|| ||C_n||).
inline double equivalence_residual(const MatrixSequence& closed, const MatrixSequence& t,
                                   const MatrixSequence& c) {
  const Horizon& h = closed.horizon();
  double worst = 0.0;
  for (Index n = h.n_min; n < h.n_max; ++n) {
    const Matrix lhs = closed.at(n) * t.at(n);
    const Matrix rhs = t.at(n + 1) * c.at(n);
    const double scale = std::max({1.0, closed.at(n).norm() * t.at(n).norm(),
                                   t.at(n + 1).norm() * c.at(n).norm()});
    worst = std::max(worst, (lhs - rhs).norm() / scale);
  }
  return worst;
}

/// Estimated closed-loop spectrum against the targets, endpoint-wise.
inline Verification verify_spectrum(const MatrixSequence& closed, const TargetSpectrum& targets,
                                    double tolerance, const SpectrumOptions& opts = {}) {
  Verification v;
  v.estimate = dichotomy_spectrum(closed, opts);
  v.targets = targets.intervals;
  v.tolerance = tolerance;
  v.max_endpoint_error = endpoint_error(v.estimate.intervals, v.targets);
  v.passed = v.max_endpoint_error <= tolerance;
  return v;
}

/// UCC check -> dyadic diagonal targets -> triangularizing feedback ->
/// closed-loop admissibility -> spectrum verification. A failed verification
/// is reported in the result rather than thrown.
inline AssignmentResult assign_spectrum(const MatrixSequence& a, const MatrixSequence& b,
                                        const TargetSpectrum& targets,
                                        const AssignOptions& opts = {}) {
  detail::check_control_pair(a, b);
  AssignmentResult out;
  out.targets = make_targets(targets.intervals, a.rows());
  out.certificate = check_ucc(a, b, opts.max_window, opts.gramian_floor);
  if (!out.certificate.ok)
    throw ControllabilityError("system is not uniformly completely controllable with window <= " +
                               std::to_string(opts.max_window) + " (worst Gramian eigenvalue " +
                               std::to_string(out.certificate.min_gramian_eig) + ")");
  const DiagonalTargets diag = build_diagonal_sequences(out.targets, a.horizon(), a.rows());
  Triangularization tri = triangularize_with_feedback(a, b, diag, out.certificate, opts.triangularize);
  out.U = std::move(tri.U);
  out.C = std::move(tri.C);
  out.T = std::move(tri.T);
  out.windows = std::move(tri.windows);
  out.retries = tri.retries;

  const MatrixSequence closed = apply_feedback(a, b, out.U).materialize();
  out.closed_loop_validation = validate_lyapunov(closed);
  if (!out.closed_loop_validation.ok)
    throw SynthesisError(out.closed_loop_validation.first_failing_index.value_or(a.horizon().n_min),
                         "closed loop is not a Lyapunov sequence");
  out.equivalence_residual = equivalence_residual(closed, out.T, out.C);
  out.verification = verify_spectrum(closed, out.targets, opts.tolerance, opts.spectrum);
  return out;
}

}  // namespace tvspec
