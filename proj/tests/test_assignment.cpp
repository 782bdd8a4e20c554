#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tvspec/assignment.hpp"

namespace tvspec {
namespace {

using testing::lyapunov_random;

const Horizon kFull = symmetric_horizon();
const Horizon kSmall = symmetric_horizon(256);

Matrix double_integrator() {
  Matrix a(2, 2);
  a << 1.0, 1.0, 0.0, 1.0;
  return a;
}

Matrix e2() {
  Matrix b(2, 1);
  b << 0.0, 1.0;
  return b;
}

Matrix closed_transition(const MatrixSequence& a, const MatrixSequence& b,
                         const std::vector<Matrix>& u, Index k0) {
  const Eigen::Index d = a.rows();
  Matrix x = Matrix::Identity(d, d);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Index j = k0 + static_cast<Index>(i);
    x = (a.at(j) + b.at(j) * u[i]) * x;
  }
  return x;
}

// ---------------------------------------------------------------------------
// targets and diagonal sequences

TEST(Targets, Validation) {
  EXPECT_THROW(make_targets({}, 2), InputError);
  EXPECT_THROW(make_targets({{0, 1}, {2, 3}, {4, 5}}, 2), InputError);
  EXPECT_THROW(make_targets({{0, 1}, {0.5, 2}}, 2), InputError);
  EXPECT_THROW(make_targets({{1, 0}}, 2), InputError);
  const auto t = make_targets({{2, 3}, {0, 1}}, 2);
  EXPECT_EQ(t.intervals.front(), (Interval{0, 1}));
}

TEST(DiagonalSequences, DegenerateZeroIsOne) {
  const auto diag = build_diagonal_sequences(make_targets({{0, 0}}, 1), kSmall, 1);
  for (Index n = kSmall.n_min; n <= kSmall.n_max; ++n) EXPECT_EQ(diag.at(0, n), 1.0);
}

TEST(DiagonalSequences, DyadicBlockPattern) {
  const auto diag = build_diagonal_sequences(make_targets({{0, 1}}, 1), kSmall, 1);
  const double e = std::exp(1.0);
  EXPECT_EQ(diag.at(0, 1), 1.0);
  EXPECT_EQ(diag.at(0, 2), e);
  EXPECT_EQ(diag.at(0, 3), e);
  for (Index n = 4; n <= 7; ++n) EXPECT_EQ(diag.at(0, n), 1.0);
  for (Index n = 8; n <= 15; ++n) EXPECT_EQ(diag.at(0, n), e);
  EXPECT_EQ(diag.at(0, 0), 1.0);
}

TEST(DiagonalSequences, SymmetricPositiveAndFilled) {
  const auto diag = build_diagonal_sequences(make_targets({{-1.2, -0.3}, {0.4, 0.4}}, 4), kFull, 4);
  ASSERT_EQ(diag.dim(), 4);
  for (int i = 0; i < 4; ++i)
    for (Index n = 0; n <= kFull.n_max; ++n) {
      EXPECT_EQ(diag.at(i, n), diag.at(i, -n));
      EXPECT_GT(diag.at(i, n), 0.0);
    }
  for (Index n = kFull.n_min; n <= kFull.n_max; n += 97) {
    EXPECT_EQ(diag.at(2, n), diag.at(0, n));
    EXPECT_EQ(diag.at(3, n), diag.at(0, n));
  }
}

TEST(DiagonalSequences, RejectsAsymmetricHorizon) {
  EXPECT_THROW(build_diagonal_sequences(make_targets({{0, 1}}, 1), make_horizon(-10, 20), 1), InputError);
}

TEST(TriangularTargets, UpperTriangularWithBoundedFill) {
  const auto diag = build_diagonal_sequences(make_targets({{-1, 0}, {1, 2}}, 3), kSmall, 3);
  const auto c = triangular_targets(diag, 17, 2.0);
  const auto plain = triangular_targets(diag, std::nullopt, 2.0);
  for (Index n = kSmall.n_min; n <= kSmall.n_max; ++n) {
    const Matrix m = c.at(n);
    for (int i = 0; i < 3; ++i) {
      EXPECT_EQ(m(i, i), diag.at(i, n));
      for (int j = 0; j < i; ++j) EXPECT_EQ(m(i, j), 0.0);
      for (int j = i + 1; j < 3; ++j) EXPECT_LE(std::abs(m(i, j)), 2.0);
    }
    EXPECT_EQ(Matrix(plain.at(n)), Matrix(diag.diagonal().at(n)));
  }
}

// ---------------------------------------------------------------------------
// window synthesis

TEST(WindowTransition, FullyActuatedShortcut) {
  const auto a = lyapunov_random(kSmall, 3, 4);
  const auto b = constant_sequence(kSmall, Matrix::Identity(3, 3));
  Matrix d(3, 3);
  d << 2, 1, 0, 0, 0.5, -1, 0, 0, 1.5;
  const auto syn = assign_window_transition(a, b, 10, 1, d);
  ASSERT_EQ(syn.feedback.size(), 1u);
  EXPECT_LT((syn.feedback[0] - (d - a.at(10))).norm(), 1e-13);
}

TEST(WindowTransition, DriftAlreadyMatches) {
  const auto a = lyapunov_random(kSmall, 2, 9);
  const auto b = random_bounded_sequence(kSmall, 2, 1, 10);
  const Matrix drift = testing::naive_product(a, 7, 3);
  const auto syn = assign_window_transition(a, b, 3, 4, drift);
  for (const auto& f : syn.gains) EXPECT_LT(f.norm(), 1e-12);
  for (const auto& u : syn.feedback) EXPECT_LT(u.norm(), 1e-12);
}

TEST(WindowTransition, DoubleIntegratorReachesScaledIdentity) {
  const auto a = constant_sequence(kSmall, double_integrator());
  const auto b = constant_sequence(kSmall, e2());
  const Matrix d = std::exp(1.0) * Matrix::Identity(2, 2);
  const auto syn = assign_window_transition(a, b, -5, 2, d);
  EXPECT_LT((closed_transition(a, b, syn.feedback, -5) - d).norm(), 1e-12);
}

TEST(WindowTransition, RandomPairsMatchTargetExactly) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int d = 2 + static_cast<int>(seed % 3);
    const auto a = lyapunov_random(kSmall, d, seed);
    const auto b = random_bounded_sequence(kSmall, d, 1, seed + 50);
    const Index K = 2 * d;
    Matrix target = Matrix::Identity(d, d);
    target.diagonal() = Vector::LinSpaced(d, 0.5, 2.0);
    target(0, d - 1) = 1.0;
    const auto syn = assign_window_transition(a, b, 0, K, target);
    EXPECT_LT((closed_transition(a, b, syn.feedback, 0) - target).norm(), 1e-9) << "seed " << seed;
    // Open-loop gains reproduce the state maps.
    for (Index j = 0; j < K; ++j) {
      const auto i = static_cast<std::size_t>(j);
      EXPECT_LT((syn.feedback[i] * syn.state_maps[i] - syn.gains[i]).norm(),
                1e-10 * std::max(1.0, syn.gains[i].norm()));
    }
  }
}

TEST(WindowTransition, SingularTargetOrGramian) {
  const auto a = constant_sequence(kSmall, Matrix::Identity(2, 2));
  EXPECT_THROW(assign_window_transition(a, constant_sequence(kSmall, e2()), 0, 3, Matrix::Identity(2, 2) * 2),
               SynthesisError);
  EXPECT_THROW(assign_window_transition(a, a, 0, 1, Matrix::Zero(2, 2)), SynthesisError);
}

// ---------------------------------------------------------------------------
// triangularization

TEST(Triangularize, FullyActuatedGivesCMinusA) {
  const auto a = lyapunov_random(kSmall, 2, 1);
  const auto b = constant_sequence(kSmall, Matrix::Identity(2, 2));
  const auto diag = build_diagonal_sequences(make_targets({{0, 0}, {1, 1}}, 2), kSmall, 2);
  const auto cert = check_ucc(a, b, 4);
  ASSERT_EQ(cert.K, 1);
  const auto tri = triangularize_with_feedback(a, b, diag, cert);
  const auto closed = apply_feedback(a, b, tri.U);
  for (Index n = kSmall.n_min; n < kSmall.n_max; ++n) {
    EXPECT_LT((tri.U.at(n) - (tri.C.at(n) - a.at(n))).norm(), 1e-13);
    EXPECT_LT((closed.at(n) - tri.C.at(n)).norm(), 1e-13);
    EXPECT_EQ(tri.T.at(n), Matrix::Identity(2, 2));
  }
}

TEST(Triangularize, IdentityPairWithConstantDiagonal) {
  const auto i2 = constant_sequence(kSmall, Matrix::Identity(2, 2));
  const auto diag = build_diagonal_sequences(make_targets({{1, 1}}, 2), kSmall, 2);
  const auto tri = triangularize_with_feedback(i2, i2, diag, check_ucc(i2, i2, 4));
  const auto closed = apply_feedback(i2, i2, tri.U);
  for (Index n = kSmall.n_min; n < kSmall.n_max; ++n)
    EXPECT_LT((closed.at(n) - std::exp(1.0) * Matrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(Triangularize, DoubleIntegratorDefiningIdentity) {
  const Horizon h = symmetric_horizon(2048);
  const auto a = constant_sequence(h, double_integrator());
  const auto b = constant_sequence(h, e2());
  const auto diag = build_diagonal_sequences(make_targets({{-0.5, 0.0}}, 2), h, 2);
  const auto cert = check_ucc(a, b, 8);
  ASSERT_TRUE(cert.ok);
  const auto tri = triangularize_with_feedback(a, b, diag, cert);
  const auto closed = apply_feedback(a, b, tri.U).materialize();
  for (Index n = h.n_min; n < h.n_max; ++n) {
    const Matrix lhs = closed.at(n) * tri.T.at(n);
    const Matrix rhs = tri.T.at(n + 1) * tri.C.at(n);
    const double scale = std::max({1.0, closed.at(n).norm() * tri.T.at(n).norm(),
                                   tri.T.at(n + 1).norm() * tri.C.at(n).norm()});
    ASSERT_LT((lhs - rhs).norm() / scale, 1e-8) << "n=" << n;
  }
  EXPECT_NEAR(equivalence_residual(closed, tri.T, tri.C), 0.0, 1e-8);
  EXPECT_TRUE(validate_lyapunov(closed).ok);
}

TEST(Triangularize, WindowsTileTheHorizon) {
  const auto a = lyapunov_random(kSmall, 3, 2);
  const auto b = random_bounded_sequence(kSmall, 3, 1, 3);
  const auto cert = check_ucc(a, b, 16);
  ASSERT_TRUE(cert.ok);
  const auto diag = build_diagonal_sequences(make_targets({{0, 0.5}}, 3), kSmall, 3);
  const auto tri = triangularize_with_feedback(a, b, diag, cert);
  Index next = kSmall.n_min;
  for (const auto& [start, len] : tri.windows) {
    EXPECT_EQ(start, next);
    EXPECT_GE(len, cert.K);
    next = start + len;
  }
  EXPECT_EQ(next, kSmall.n_max);
}

TEST(Triangularize, NeedsCertificate) {
  const auto i2 = constant_sequence(kSmall, Matrix::Identity(2, 2));
  const auto diag = build_diagonal_sequences(make_targets({{0, 0}}, 2), kSmall, 2);
  EXPECT_THROW(triangularize_with_feedback(i2, i2, diag, UccCertificate{}), ControllabilityError);
}

// ---------------------------------------------------------------------------
// end to end

TEST(AssignSpectrum, ScalarToZero) {
  const auto a = constant_sequence(kFull, Matrix::Constant(1, 1, 2.0));
  const auto b = constant_sequence(kFull, Matrix::Constant(1, 1, 1.0));
  const auto r = assign_spectrum(a, b, make_targets({{0, 0}}, 1));
  EXPECT_TRUE(r.verification.passed) << r.verification.max_endpoint_error;
  ASSERT_EQ(r.verification.estimate.intervals.size(), 1u);
  EXPECT_NEAR(r.verification.estimate.intervals[0].lo, 0.0, 0.05);
  EXPECT_NEAR(r.verification.estimate.intervals[0].hi, 0.0, 0.05);
}

TEST(AssignSpectrum, FullyActuatedTwoIntervals) {
  const auto a = lyapunov_random(kFull, 2, 77);
  const auto b = constant_sequence(kFull, Matrix::Identity(2, 2));
  const std::vector<Interval> targets{{-1.0, -0.5}, {0.5, 1.0}};
  const auto r = assign_spectrum(a, b, make_targets(targets, 2));
  EXPECT_TRUE(r.closed_loop_validation.ok);
  EXPECT_TRUE(r.verification.passed);
  EXPECT_LE(endpoint_error(r.verification.estimate.intervals, targets), 0.05);
  EXPECT_LT(r.equivalence_residual, 1e-8);
}

TEST(AssignSpectrum, PointTargetMatchesLyapunovSpectrum) {
  const auto a = constant_sequence(kFull, double_integrator());
  const auto b = constant_sequence(kFull, e2());
  const auto r = assign_spectrum(a, b, make_targets({{0.3, 0.3}}, 2));
  ASSERT_TRUE(r.verification.passed) << r.verification.max_endpoint_error;
  const auto closed = apply_feedback(a, b, r.U).materialize();
  for (double x : lyapunov_spectrum(closed, kFull.n_max)) EXPECT_NEAR(x, 0.3, 0.05);
  for (const auto& iv : r.verification.estimate.intervals) {
    EXPECT_NEAR(iv.lo, 0.3, 0.05);
    EXPECT_NEAR(iv.hi, 0.3, 0.05);
  }
}

TEST(AssignSpectrum, DiagonalFidelity) {
  const auto a = lyapunov_random(kSmall, 3, 5);
  const auto b = random_bounded_sequence(kSmall, 3, 2, 6);
  const auto targets = make_targets({{-0.8, -0.2}, {0.6, 0.9}}, 3);
  AssignOptions opts;
  opts.spectrum.window = 64;
  opts.triangularize.offdiag_seed = 4;
  const auto r = assign_spectrum(a, b, targets, opts);
  const auto diag = build_diagonal_sequences(targets, kSmall, 3);
  for (Index n = kSmall.n_min; n <= kSmall.n_max; ++n)
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r.C.at(n)(i, i), diag.at(i, n));
  EXPECT_LT(r.equivalence_residual, 1e-8);
  EXPECT_TRUE(r.closed_loop_validation.ok);
}

TEST(AssignSpectrum, Errors) {
  const auto i2 = constant_sequence(kSmall, Matrix::Identity(2, 2));
  EXPECT_THROW(assign_spectrum(i2, constant_sequence(kSmall, Matrix::Zero(2, 1)), make_targets({{0, 0}}, 2)),
               ControllabilityError);
  EXPECT_THROW(assign_spectrum(i2, i2, TargetSpectrum{{{0, 1}, {2, 3}, {4, 5}}}), InputError);
  const Horizon lopsided = make_horizon(-10, 30);
  EXPECT_THROW(assign_spectrum(constant_sequence(lopsided, Matrix::Identity(2, 2)),
                               constant_sequence(lopsided, Matrix::Identity(2, 2)), make_targets({{0, 0}}, 2)),
               InputError);
}

TEST(AssignSpectrum, FailedVerificationIsReported) {
  const auto i2 = constant_sequence(kFull, Matrix::Identity(2, 2));
  AssignOptions opts;
  opts.tolerance = 1e-9;
  const auto r = assign_spectrum(i2, i2, make_targets({{-0.7, -0.2}}, 2), opts);
  EXPECT_FALSE(r.verification.passed);
  EXPECT_GT(r.verification.max_endpoint_error, 1e-9);
  EXPECT_EQ(r.verification.targets.size(), 1u);
}

}  // namespace
}  // namespace tvspec
