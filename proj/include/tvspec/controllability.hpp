#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tvspec/matrix_sequence.hpp"
#include "tvspec/parallel.hpp"

namespace tvspec {

inline constexpr double kGramianFloor = 1e-8;

/// Window length K and steering bound alpha certifying uniform complete
/// controllability over the horizon.
struct UccCertificate {
  int K = 0;
  double alpha = std::numeric_limits<double>::infinity();
  double min_gramian_eig = 0.0;  // worst window
  double max_gramian_eig = 0.0;
  double floor = kGramianFloor;
  Index worst_window_start = 0;
  bool ok = false;
};

namespace detail {

inline void check_control_pair(const MatrixSequence& a, const MatrixSequence& b) {
  if (!a.square() || b.rows() != a.rows())
    throw InputError("control pair needs A d x d and B d x s");
  if (a.horizon() != b.horizon()) throw InputError("A and B have different horizons");
}

inline void check_window(const Horizon& h, Index k0, Index K) {
  if (K < 1 || k0 < h.n_min || k0 + K > h.n_max)
    throw InputError("window [" + std::to_string(k0) + ", " + std::to_string(k0 + K) +
                     "] not inside horizon");
}

/// G_j = B_j^T Phi(k0 + K, j + 1)^T for j = k0 .. k0 + K - 1.
template <class AtA, class AtB>
std::vector<Matrix> steering_rows(AtA&& a_at, AtB&& b_at, Index k0, Index K, Eigen::Index d) {
  std::vector<Matrix> rows(static_cast<std::size_t>(K));
  Matrix phi = Matrix::Identity(d, d);
  for (Index j = k0 + K - 1; j >= k0; --j) {
    rows[static_cast<std::size_t>(j - k0)] = b_at(j).transpose() * phi.transpose();
    phi = phi * a_at(j);
  }
  return rows;
}

}  // namespace detail

/// W = sum_{j=k0}^{k0+K-1} Phi(k0+K, j+1) B_j B_j^T Phi(k0+K, j+1)^T.
inline Matrix controllability_gramian(const MatrixSequence& a, const MatrixSequence& b, Index k0,
                                      Index K) {
  detail::check_control_pair(a, b);
  detail::check_window(a.horizon(), k0, K);
  const auto rows = detail::steering_rows([&](Index j) { return a.at(j); },
                                          [&](Index j) { return b.at(j); }, k0, K, a.rows());
  Matrix w = Matrix::Zero(a.rows(), a.rows());
  for (const auto& g : rows) w += g.transpose() * g;
  return 0.5 * (w + w.transpose());
}

/// Smallest K <= K_max whose window Gramians are uniformly positive definite
/// (smallest eigenvalue >= floor for every window in the horizon), with
/// alpha = max over windows and steps of ||B_j^T Phi^T|| * ||W^{-1}||.
inline UccCertificate check_ucc(const MatrixSequence& a, const MatrixSequence& b, int K_max,
                                double floor = kGramianFloor) {
  detail::check_control_pair(a, b);
  if (K_max < 1) throw InputError("maximum window must be at least 1");
  const Horizon& h = a.horizon();
  const std::vector<Matrix> as = a.sample();
  const std::vector<Matrix> bs = b.sample();
  const Eigen::Index d = a.rows();
  auto a_at = [&](Index j) -> const Matrix& { return as[h.offset(j)]; };
  auto b_at = [&](Index j) -> const Matrix& { return bs[h.offset(j)]; };

  UccCertificate cert;
  cert.floor = floor;
  // gram[i] is the Gramian of window [n_min + i, n_min + i + K)
  std::vector<Matrix> gram(static_cast<std::size_t>(h.size()), Matrix::Zero(d, d));
  std::vector<double> lo(static_cast<std::size_t>(h.size()));
  std::vector<double> hi(static_cast<std::size_t>(h.size()));
  for (int K = 1; K <= K_max; ++K) {
    const Index windows = h.n_max - K - h.n_min + 1;
    if (windows < 1) break;
    parallel_for(0, windows, [&](Index i) {
      const Index last = h.n_min + i + K - 1;
      Matrix& w = gram[static_cast<std::size_t>(i)];
      w = a_at(last) * w * a_at(last).transpose() + b_at(last) * b_at(last).transpose();
      w = 0.5 * (w + w.transpose());
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(w, Eigen::EigenvaluesOnly);
      lo[static_cast<std::size_t>(i)] = eig.eigenvalues()(0);
      hi[static_cast<std::size_t>(i)] = eig.eigenvalues()(d - 1);
    });
    const auto worst = std::min_element(lo.begin(), lo.begin() + windows);
    if (*worst < floor) {
      cert.K = K;
      cert.min_gramian_eig = *worst;
      cert.max_gramian_eig = *std::max_element(hi.begin(), hi.begin() + windows);
      cert.worst_window_start = h.n_min + (worst - lo.begin());
      continue;
    }

    std::vector<double> bound(static_cast<std::size_t>(windows));
    parallel_for(0, windows, [&](Index i) {
      const auto rows = detail::steering_rows(a_at, b_at, h.n_min + i, K, d);
      double g = 0.0;
      for (const auto& r : rows)
        g = std::max(g, r.rows() == 1 || r.cols() == 1
                            ? r.norm()
                            : Eigen::JacobiSVD<Matrix>(r).singularValues()(0));
      bound[static_cast<std::size_t>(i)] = g / lo[static_cast<std::size_t>(i)];
    });
    cert.K = K;
    cert.ok = true;
    cert.min_gramian_eig = *worst;
    cert.max_gramian_eig = *std::max_element(hi.begin(), hi.begin() + windows);
    cert.worst_window_start = h.n_min + (worst - lo.begin());
    cert.alpha = *std::max_element(bound.begin(), bound.end());
    return cert;
  }
  cert.ok = false;
  cert.alpha = std::numeric_limits<double>::infinity();
  return cert;
}

/// Minimum-energy controls u_j = B_j^T Phi(k0+K, j+1)^T W^{-1} target steering
/// x_{k0} = 0 to x_{k0+K} = target.
inline std::vector<Vector> min_energy_steering(const MatrixSequence& a, const MatrixSequence& b,
                                               Index k0, Index K, const Vector& target) {
  detail::check_control_pair(a, b);
  detail::check_window(a.horizon(), k0, K);
  if (target.size() != a.rows()) throw InputError("steering target has the wrong dimension");
  const auto rows = detail::steering_rows([&](Index j) { return a.at(j); },
                                          [&](Index j) { return b.at(j); }, k0, K, a.rows());
  Matrix w = Matrix::Zero(a.rows(), a.rows());
  for (const auto& g : rows) w += g.transpose() * g;
  const Eigen::LLT<Matrix> llt(0.5 * (w + w.transpose()));
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(w, Eigen::EigenvaluesOnly);
  if (llt.info() != Eigen::Success || eig.eigenvalues()(0) <= kGramianFloor * 1e-4)
    throw SingularityError(k0, "min_energy_steering: singular controllability Gramian");
  const Vector lambda = llt.solve(target);
  std::vector<Vector> controls;
  controls.reserve(rows.size());
  for (const auto& g : rows) controls.push_back(g * lambda);
  return controls;
}

/// Forward simulation of x_{j+1} = A_j x_j + B_j u_j from x_{k0} = x0.
inline Vector simulate(const MatrixSequence& a, const MatrixSequence& b, Index k0,
                       const Vector& x0, const std::vector<Vector>& controls) {
  Vector x = x0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    const Index j = k0 + static_cast<Index>(i);
    x = a.at(j) * x + b.at(j) * controls[i];
  }
  return x;
}

}  // namespace tvspec
