#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "tvspec/matrix_sequence.hpp"
#include "tvspec/parallel.hpp"
#include "tvspec/spectrum.hpp"

namespace tvspec {

/// x' = W(t) x on [n_min, n_max + 1), with W either constant on each unit
/// interval [n, n+1) or a smooth callable.
class ContinuousSystem {
 public:
  using Coefficient = std::function<Matrix(double)>;

  static ContinuousSystem piecewise_constant(Horizon horizon, std::vector<Matrix> table) {
    if (static_cast<Index>(table.size()) != horizon.size())
      throw InputError("piecewise-constant table needs one matrix per unit interval (" +
                       std::to_string(horizon.size()) + "), got " + std::to_string(table.size()));
    const auto d = table.front().rows();
    for (const auto& w : table)
      if (w.rows() != d || w.cols() != d || !w.allFinite())
        throw InputError("piecewise-constant table entries must be finite square matrices of equal size");
    ContinuousSystem out;
    out.dim_ = static_cast<int>(d);
    out.horizon_ = horizon;
    out.table_ = std::make_shared<const std::vector<Matrix>>(std::move(table));
    out.name_ = "piecewise_constant";
    return out;
  }

  static ContinuousSystem callable(Horizon horizon, int dim, std::string name, Coefficient w) {
    if (dim <= 0) throw InputError("continuous system dimension must be positive");
    ContinuousSystem out;
    out.dim_ = dim;
    out.horizon_ = horizon;
    out.callable_ = std::make_shared<const Coefficient>(std::move(w));
    out.name_ = std::move(name);
    return out;
  }

  int dim() const noexcept { return dim_; }
  const Horizon& horizon() const noexcept { return horizon_; }
  bool is_piecewise_constant() const noexcept { return table_ != nullptr; }
  const std::string& name() const noexcept { return name_; }

  /// W on [n, n+1) for a piecewise-constant system.
  const Matrix& piece(Index n) const { return (*table_)[horizon_.offset(n)]; }

  Matrix operator()(double t) const {
    if (table_) {
      auto n = static_cast<Index>(std::floor(t));
      n = std::clamp(n, horizon_.n_min, horizon_.n_max);
      return piece(n);
    }
    Matrix w = (*callable_)(t);
    if (w.rows() != dim_ || w.cols() != dim_ || !w.allFinite())
      throw InputError("coefficient '" + name_ + "' returned an invalid matrix at t = " +
                       std::to_string(t));
    return w;
  }

  /// sup ||W(t)||, sampled at 1/16 resolution for callables.
  double bound() const {
    double best = 0.0;
    if (table_) {
      for (const auto& w : *table_) best = std::max(best, Eigen::JacobiSVD<Matrix>(w).singularValues()(0));
      return best;
    }
    for (Index n = horizon_.n_min; n <= horizon_.n_max; ++n)
      for (int k = 0; k < 16; ++k) {
        const Matrix w = (*this)(static_cast<double>(n) + k / 16.0);
        best = std::max(best, Eigen::JacobiSVD<Matrix>(w).singularValues()(0));
      }
    return best;
  }

 private:
  int dim_ = 0;
  Horizon horizon_{};
  std::shared_ptr<const std::vector<Matrix>> table_;
  std::shared_ptr<const Coefficient> callable_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Built-in smooth coefficients

/// W(t) = rate I + omega J with J the 90-degree rotation generator.
inline ContinuousSystem rotation_system(Horizon horizon, double omega = 1.0, double rate = 0.0) {
  return ContinuousSystem::callable(horizon, 2, "rotation", [omega, rate](double) {
    Matrix w(2, 2);
    w << rate, omega, -omega, rate;
    return w;
  });
}

/// W(t) = diag(rates_i + amplitude sin(t + i)).
inline ContinuousSystem sinusoidal_diagonal_system(Horizon horizon, std::vector<double> rates,
                                                   double amplitude) {
  const int d = static_cast<int>(rates.size());
  return ContinuousSystem::callable(horizon, d, "sinusoidal_diagonal",
                                    [rates = std::move(rates), amplitude](double t) {
                                      const auto dd = static_cast<Eigen::Index>(rates.size());
                                      Matrix w = Matrix::Zero(dd, dd);
                                      for (Eigen::Index i = 0; i < dd; ++i)
                                        w(i, i) = rates[static_cast<std::size_t>(i)] +
                                                  amplitude * std::sin(t + static_cast<double>(i));
                                      return w;
                                    });
}

/// Upper-triangular W(t) = [[a, c cos t], [0, b]] with constant diagonal rates.
inline ContinuousSystem coupled_triangular_system(Horizon horizon, double a, double b, double c) {
  return ContinuousSystem::callable(horizon, 2, "coupled_triangular", [a, b, c](double t) {
    Matrix w(2, 2);
    w << a, c * std::cos(t), 0.0, b;
    return w;
  });
}

// ---------------------------------------------------------------------------
// One-time discretization

enum class DiscretizationMethod { exact, integrate };

struct DiscretizeOptions {
  DiscretizationMethod method = DiscretizationMethod::exact;
  int substeps = 64;
  bool refine = true;        // callables: halve the step until successive results agree
  double refine_tol = 1e-8;  // relative
  int max_substeps = 1 << 14;
};

struct Discretization {
  MatrixSequence sequence;  // A_n = Phi_W(n + 1, n)
  double kappa = 0.0;       // sampled sup_{|t - s| <= 1} ||Phi_W(t, s)||
  int substeps = 0;         // per unit interval, 0 for exact exponentials
  DiscretizationMethod method = DiscretizationMethod::exact;
};

namespace detail {

/// Classical RK4 for Phi' = W(t) Phi over [t0, t0 + 1]; records ||Phi|| and
/// ||Phi^{-1}|| every `sample_every` substeps for the kappa diagnostic.
inline Matrix rk4_unit_interval(const ContinuousSystem& w, double t0, int substeps,
                                double* kappa = nullptr) {
  const int d = w.dim();
  const double step = 1.0 / substeps;
  Matrix phi = Matrix::Identity(d, d);
  const int sample_every = std::max(1, substeps / 8);
  for (int k = 0; k < substeps; ++k) {
    const double t = t0 + k * step;
    const Matrix w0 = w(t);
    const Matrix wm = w(t + 0.5 * step);
    const Matrix w1 = w(t + step);
    const Matrix k1 = w0 * phi;
    const Matrix k2 = wm * (phi + 0.5 * step * k1);
    const Matrix k3 = wm * (phi + 0.5 * step * k2);
    const Matrix k4 = w1 * (phi + step * k3);
    phi += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (kappa != nullptr && (k + 1) % sample_every == 0) {
      const Eigen::VectorXd sv = Eigen::JacobiSVD<Matrix>(phi).singularValues();
      *kappa = std::max({*kappa, sv(0), 1.0 / sv(sv.size() - 1)});
    }
  }
  return phi;
}

}  // namespace detail

/// A_n = Phi_W(n + 1, n) for every n in the horizon: exact exponentials
/// (scaling and squaring with Pade approximants) for piecewise-constant W,
/// fixed-step RK4 otherwise. Also reports kappa, the largest sampled
/// ||Phi_W(t, s)|| with |t - s| <= 1 inside unit intervals (both directions).
inline Discretization discretize_one_time(const ContinuousSystem& w,
                                          const DiscretizeOptions& opts = {}) {
  const Horizon& h = w.horizon();
  const int d = w.dim();
  std::vector<Matrix> steps(static_cast<std::size_t>(h.size()));
  std::vector<double> kappas(static_cast<std::size_t>(h.size()), 1.0);
  Discretization out;
  const bool exact = w.is_piecewise_constant() && opts.method == DiscretizationMethod::exact;
  out.method = exact ? DiscretizationMethod::exact : DiscretizationMethod::integrate;

  if (exact) {
    parallel_for(0, h.size(), [&](Index i) {
      const Matrix& piece = w.piece(h.n_min + i);
      const Matrix eighth = (piece / 8.0).exp();
      const Matrix back = (-piece / 8.0).exp();
      Matrix fwd = Matrix::Identity(d, d);
      Matrix bwd = Matrix::Identity(d, d);
      double kappa = 1.0;
      for (int k = 0; k < 8; ++k) {
        fwd = eighth * fwd;
        bwd = back * bwd;
        kappa = std::max({kappa, Eigen::JacobiSVD<Matrix>(fwd).singularValues()(0),
                          Eigen::JacobiSVD<Matrix>(bwd).singularValues()(0)});
      }
      steps[static_cast<std::size_t>(i)] = piece.exp();
      kappas[static_cast<std::size_t>(i)] = kappa;
    });
    out.substeps = 0;
  } else {
    if (opts.substeps < 1) throw InputError("substeps must be positive");
    int substeps = opts.substeps;
    auto integrate_all = [&](int n_sub, std::vector<Matrix>& into, bool record) {
      parallel_for(0, h.size(), [&](Index i) {
        double kappa = 1.0;
        into[static_cast<std::size_t>(i)] = detail::rk4_unit_interval(
            w, static_cast<double>(h.n_min + i), n_sub, record ? &kappa : nullptr);
        if (record) kappas[static_cast<std::size_t>(i)] = kappa;
      });
    };
    integrate_all(substeps, steps, true);
    if (!w.is_piecewise_constant() && opts.refine) {
      while (true) {
        if (2 * substeps > opts.max_substeps)
          throw NumericalRangeError("discretize_one_time: step refinement did not converge by " +
                                    std::to_string(substeps) + " substeps per unit interval");
        std::vector<Matrix> finer(steps.size());
        integrate_all(2 * substeps, finer, true);
        double diff = 0.0;
        for (std::size_t i = 0; i < steps.size(); ++i)
          diff = std::max(diff, (finer[i] - steps[i]).norm() / std::max(1.0, finer[i].norm()));
        steps = std::move(finer);
        substeps *= 2;
        if (diff <= opts.refine_tol) break;
      }
    }
    out.substeps = substeps;
  }
  for (double k : kappas) out.kappa = std::max(out.kappa, k);
  out.sequence = explicit_sequence(h, std::move(steps));
  return out;
}

/// Dichotomy spectrum of a continuous system through its one-time
/// discretization; the continuous and discrete spectra coincide.
inline SpectrumEstimate continuous_spectrum(const ContinuousSystem& w,
                                            const SpectrumOptions& spectrum = {},
                                            const DiscretizeOptions& discretize = {}) {
  return dichotomy_spectrum(discretize_one_time(w, discretize).sequence, spectrum);
}

/// Piecewise-constant continuous system whose one-time discretization is the
/// given discrete sequence: W = log(M_n) on [n, n+1). Requires each M_n to
/// have a real logarithm (e.g. upper-triangular with positive diagonal).
inline ContinuousSystem logarithmic_embedding(const MatrixSequence& m) {
  if (!m.square()) throw InputError("logarithmic embedding requires a square sequence");
  std::vector<Matrix> table = m.sample();
  parallel_for(0, static_cast<Index>(table.size()), [&](Index i) {
    auto& t = table[static_cast<std::size_t>(i)];
    const Eigen::EigenSolver<Matrix> eig(t, false);
    for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
      const auto lambda = eig.eigenvalues()(k);
      if (std::abs(lambda.imag()) < 1e-12 && lambda.real() <= 0.0)
        throw InputError("logarithmic embedding: matrix at index " +
                         std::to_string(m.horizon().n_min + i) +
                         " has a non-positive real eigenvalue");
    }
    Matrix log = t.log();
    t = std::move(log);
  });
  return ContinuousSystem::piecewise_constant(m.horizon(), std::move(table));
}

}  // namespace tvspec
