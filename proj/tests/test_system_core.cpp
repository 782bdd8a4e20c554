#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "tvspec/compound.hpp"
#include "tvspec/constructions.hpp"
#include "tvspec/evolution.hpp"
#include "tvspec/lyapunov.hpp"
#include "tvspec/transforms.hpp"

namespace tvspec {
namespace {

using testing::lyapunov_random;
using testing::naive_product;
using testing::relative_error;

Matrix scalar(double x) { return Matrix::Constant(1, 1, x); }

Matrix rotation(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

TEST(Horizon, RejectsEmptyRange) {
  EXPECT_THROW(make_horizon(5, 5), InputError);
  EXPECT_THROW(make_horizon(5, -5), InputError);
  EXPECT_EQ(symmetric_horizon().size(), (Index{1} << 15) + 1);
}

TEST(MatrixSequence, EvaluationOutsideHorizonThrows) {
  const auto m = constant_sequence(make_horizon(-3, 3), scalar(2.0));
  EXPECT_THROW(m.at(4), InputError);
  EXPECT_THROW(m.at(-4), InputError);
  EXPECT_NO_THROW(m.at(3));
}

TEST(MatrixSequence, NonFiniteEntriesAreRejected) {
  const MatrixSequence bad(1, 1, make_horizon(0, 4), "explicit", [](Index n) {
    return scalar(n == 2 ? std::numeric_limits<double>::quiet_NaN() : 1.0);
  });
  EXPECT_NO_THROW(bad.at(1));
  EXPECT_THROW(bad.at(2), NumericalRangeError);
}

TEST(MatrixSequence, WrongShapeIsRejected) {
  const MatrixSequence bad(2, 2, make_horizon(0, 4), "explicit",
                           [](Index) { return Matrix::Identity(3, 3); });
  EXPECT_THROW(bad.at(0), InputError);
}

TEST(MatrixSequence, GeneratorsAreDeterministic) {
  const Horizon h = make_horizon(-200, 200);
  const auto a = random_bounded_sequence(h, 3, 2, 42);
  const auto b = random_bounded_sequence(h, 3, 2, 42);
  const auto c = random_bounded_sequence(h, 3, 2, 43);
  for (Index n = h.n_min; n <= h.n_max; n += 7) {
    const Matrix x = a.at(n);
    EXPECT_EQ(x, a.at(n));
    EXPECT_EQ(x, b.at(n));
    EXPECT_NE(x, c.at(n));
  }
}

TEST(MatrixSequence, SupNormAndMaterialize) {
  const Horizon h = make_horizon(-50, 50);
  const auto m = random_bounded_sequence(h, 2, 2, 9, 0.5);
  double expected = 0.0;
  for (Index n = h.n_min; n <= h.n_max; ++n)
    expected = std::max(expected, Eigen::JacobiSVD<Matrix>(m.at(n)).singularValues()(0));
  EXPECT_NEAR(m.sup_norm(), expected, 1e-14);
  const auto frozen = m.materialize();
  for (Index n = h.n_min; n <= h.n_max; ++n) EXPECT_EQ(frozen.at(n), m.at(n));
}

TEST(MatrixSequence, PeriodicAndExplicit) {
  const Horizon h = make_horizon(-5, 5);
  const auto p = periodic_sequence(h, {scalar(1.0), scalar(2.0), scalar(3.0)});
  EXPECT_EQ(p.at(0)(0, 0), 1.0);
  EXPECT_EQ(p.at(4)(0, 0), 2.0);
  EXPECT_EQ(p.at(-1)(0, 0), 3.0);
  EXPECT_THROW(explicit_sequence(h, {scalar(1.0)}), InputError);
}

// ---------------------------------------------------------------------------
// evolution

TEST(Evolution, ConstantScalar) {
  const EvolutionCache cache(constant_sequence(make_horizon(-10, 10), scalar(2.0)));
  EXPECT_DOUBLE_EQ(evolution(cache, 3, 0)(0, 0), 8.0);
  EXPECT_DOUBLE_EQ(evolution(cache, 0, 2)(0, 0), 0.25);
}

TEST(Evolution, DiagonalIsIdentity) {
  const Horizon h = make_horizon(-100, 100);
  const EvolutionCache cache(lyapunov_random(h, 3, 5));
  for (Index n : {-100, -3, 0, 17, 100}) EXPECT_EQ(evolution(cache, n, n), Matrix::Identity(3, 3));
}

TEST(Evolution, MatchesNaiveProduct) {
  const Horizon h = make_horizon(-400, 400);
  const auto m = lyapunov_random(h, 4, 11);
  const EvolutionCache cache(m);
  auto engine = indexed_engine(11, 0, 1);
  for (int trial = 0; trial < 60; ++trial) {
    Index n = h.n_min + static_cast<Index>(unit_uniform(engine) * 700);
    Index len = static_cast<Index>(unit_uniform(engine) * 150);
    EXPECT_LT(relative_error(evolution(cache, n + len, n), naive_product(m, n + len, n)), 1e-12)
        << "window [" << n << ", " << n + len << "]";
  }
}

TEST(Evolution, CheckpointedProductsMatchNaiveAcrossStrides) {
  const Horizon h = make_horizon(0, 300);
  const auto m = lyapunov_random(h, 3, 3);
  for (Index stride : {1, 2, 7, 64, 500}) {
    const CheckpointedProducts products(m.sample(), stride);
    for (Index n = 0; n <= 300; n += 23)
      for (Index len : {0, 1, 5, 63, 64, 65, 130}) {
        if (n + len > products.size()) continue;
        const Matrix got = products.product(n + len, n).value();
        EXPECT_LT(relative_error(got, naive_product(m, n + len, n)), 1e-12)
            << "stride " << stride << " [" << n << ", " << n + len << "]";
      }
  }
}

class Cocycle : public ::testing::TestWithParam<int> {};

TEST_P(Cocycle, ComposesAndInverts) {
  const int d = GetParam();
  const Horizon h = make_horizon(-300, 300);
  const EvolutionCache cache(lyapunov_random(h, d, 100 + static_cast<std::uint64_t>(d)));
  auto engine = indexed_engine(static_cast<std::uint64_t>(d), 0, 2);
  auto draw = [&] { return h.n_min + static_cast<Index>(unit_uniform(engine) * 600); };
  for (int trial = 0; trial < 40; ++trial) {
    const Index m = draw(), n = draw(), k = draw();
    // Error relative to the factor norms: composing across a detour through
    // n cancels, and no dense product can beat eps * |Phi(m,n)| |Phi(n,k)|.
    const Matrix a = evolution(cache, m, n), b = evolution(cache, n, k);
    EXPECT_LT((a * b - evolution(cache, m, k)).norm() / (a.norm() * b.norm()), 1e-10)
        << m << " " << n << " " << k;
    const Matrix back = evolution(cache, n, m);
    EXPECT_LT((a * back - Matrix::Identity(d, d)).norm() / (a.norm() * back.norm()), 1e-10)
        << m << " " << n;
    if ((m - n) * (n - k) >= 0)
      EXPECT_LT(relative_error(a * b, evolution(cache, m, k)), 1e-10) << m << " " << n << " " << k;
  }
}

INSTANTIATE_TEST_SUITE_P(Dimensions, Cocycle, ::testing::Values(1, 2, 3, 4, 5));

TEST(Evolution, SingularFactorNamesIndex) {
  const Horizon h = make_horizon(0, 10);
  Matrix sing(2, 2);
  sing << 1.0, 0.0, 0.0, 0.0;
  const auto m = MatrixSequence(2, 2, h, "explicit",
                                [&](Index n) { return n == 4 ? sing : Matrix(Matrix::Identity(2, 2)); });
  const EvolutionCache cache(m);
  EXPECT_NO_THROW(evolution(cache, 8, 0));
  try {
    evolution(cache, 2, 7);
    FAIL() << "expected a singularity error";
  } catch (const SingularityError& e) {
    EXPECT_EQ(e.index(), 4);
  }
}

TEST(Evolution, LongProductsStayRepresentable) {
  const Horizon h = symmetric_horizon();
  const EvolutionCache cache(constant_sequence(h, scalar(std::exp(0.5))));
  const ScaledMatrix p = cache.scaled(h.n_max, h.n_min);
  EXPECT_NEAR(p.log_scale + std::log(std::abs(p.unit(0, 0))), 0.5 * static_cast<double>(h.size() - 1),
              1e-6);
  EXPECT_THROW(cache.evolution(h.n_max, h.n_min), NumericalRangeError);
}

// ---------------------------------------------------------------------------
// validate_lyapunov

TEST(ValidateLyapunov, Identity) {
  const auto v = validate_lyapunov(constant_sequence(make_horizon(-20, 20), Matrix::Identity(3, 3)));
  EXPECT_TRUE(v.ok);
  EXPECT_DOUBLE_EQ(v.norm_bound, 1.0);
  EXPECT_DOUBLE_EQ(v.inverse_norm_bound, 1.0);
}

TEST(ValidateLyapunov, SingularEverywhere) {
  Matrix m(2, 2);
  m << 1.0, 0.0, 0.0, 0.0;
  const Horizon h = make_horizon(-20, 20);
  const auto v = validate_lyapunov(constant_sequence(h, m));
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.failing_count, h.size());
  ASSERT_TRUE(v.first_failing_index.has_value());
  EXPECT_EQ(*v.first_failing_index, h.n_min);
}

TEST(ValidateLyapunov, RotationsHaveUnitBounds) {
  const auto m = MatrixSequence(2, 2, make_horizon(-500, 500), "rotation",
                                [](Index n) { return rotation(static_cast<double>(n)); });
  const auto v = validate_lyapunov(m);
  EXPECT_TRUE(v.ok);
  EXPECT_NEAR(v.norm_bound, 1.0, 1e-14);
  EXPECT_NEAR(v.inverse_norm_bound, 1.0, 1e-14);
}

// ---------------------------------------------------------------------------
// feedback, conjugation, shift

TEST(ApplyFeedback, ZeroFeedbackReturnsA) {
  const Horizon h = make_horizon(-30, 30);
  const auto a = lyapunov_random(h, 3, 1);
  const auto b = random_bounded_sequence(h, 3, 2, 2);
  const auto closed = apply_feedback(a, b, constant_sequence(h, Matrix::Zero(2, 3)));
  for (Index n = h.n_min; n <= h.n_max; ++n) EXPECT_EQ(closed.at(n), a.at(n));
}

TEST(ApplyFeedback, ScalarExample) {
  const Horizon h = make_horizon(-5, 5);
  const auto closed = apply_feedback(constant_sequence(h, scalar(2.0)), constant_sequence(h, scalar(1.0)),
                                     constant_sequence(h, scalar(-1.0)));
  for (Index n = h.n_min; n <= h.n_max; ++n) EXPECT_EQ(closed.at(n)(0, 0), 1.0);
}

TEST(ApplyFeedback, MatchesIndependentRecomputation) {
  const Horizon h = make_horizon(-100, 100);
  const auto a = lyapunov_random(h, 4, 21);
  const auto b = random_bounded_sequence(h, 4, 2, 22);
  const auto u = random_bounded_sequence(h, 2, 4, 23);
  const auto closed = apply_feedback(a, b, u);
  for (Index n = h.n_min; n <= h.n_max; ++n) {
    const Matrix an = a.at(n), bn = b.at(n), un = u.at(n);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double v = an(i, j);
        for (int k = 0; k < 2; ++k) v += bn(i, k) * un(k, j);
        EXPECT_NEAR(closed.at(n)(i, j), v, 1e-14);
      }
  }
}

TEST(ApplyFeedback, ShapeAndHorizonMismatch) {
  const Horizon h = make_horizon(-5, 5);
  const auto a = lyapunov_random(h, 2, 1);
  const auto b = random_bounded_sequence(h, 2, 1, 2);
  EXPECT_THROW(apply_feedback(a, b, random_bounded_sequence(h, 2, 2, 3)), InputError);
  EXPECT_THROW(apply_feedback(a, b, random_bounded_sequence(make_horizon(-4, 5), 1, 2, 3)), InputError);
}

TEST(KinematicConjugate, IdentityTransform) {
  const Horizon h = make_horizon(-30, 30);
  const auto m = lyapunov_random(h, 3, 4);
  const auto r = kinematic_conjugate(m, constant_sequence(h, Matrix::Identity(3, 3)));
  for (Index n = h.n_min; n <= h.n_max; ++n) EXPECT_LT((r.at(n) - m.at(n)).norm(), 1e-15);
}

TEST(KinematicConjugate, ConstantTransform) {
  const Horizon h = make_horizon(-10, 10);
  Matrix diag = Matrix::Zero(2, 2);
  diag.diagonal() << 2.0, 3.0;
  Matrix p(2, 2);
  p << 1.0, 2.0, -1.0, 0.5;
  const auto r = kinematic_conjugate(constant_sequence(h, diag), constant_sequence(h, p));
  const Matrix expected = p.inverse() * diag * p;
  for (Index n = h.n_min; n <= h.n_max; ++n) EXPECT_LT((r.at(n) - expected).norm(), 1e-13);
}

TEST(KinematicConjugate, DefiningIdentity) {
  const Horizon h = make_horizon(-200, 200);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = lyapunov_random(h, 3, seed);
    const auto t = seeded_transform(h, 3, seed + 50, 10.0);
    const auto r = kinematic_conjugate(m, t);
    for (Index n = h.n_min; n < h.n_max; ++n) {
      const Matrix lhs = m.at(n) * t.at(n);
      EXPECT_LT((lhs - t.at(n + 1) * r.at(n)).norm(), 1e-12 * std::max(1.0, lhs.norm()));
    }
  }
}

TEST(KinematicConjugate, RejectsSingularTransform) {
  const Horizon h = make_horizon(-5, 5);
  Matrix sing = Matrix::Zero(2, 2);
  sing(0, 0) = 1.0;
  EXPECT_THROW(kinematic_conjugate(lyapunov_random(h, 2, 1), constant_sequence(h, sing)), Error);
}

TEST(Shift, ZeroShiftReturnsM) {
  const Horizon h = make_horizon(-30, 30);
  const auto m = lyapunov_random(h, 2, 8);
  const auto s = shift(m, 0.0);
  for (Index n = h.n_min; n <= h.n_max; ++n) EXPECT_EQ(s.at(n), m.at(n));
}

TEST(Shift, ScalarToUnity) {
  const auto s = shift(constant_sequence(make_horizon(-5, 5), scalar(2.0)), std::log(2.0));
  for (Index n = -5; n <= 5; ++n) EXPECT_NEAR(s.at(n)(0, 0), 1.0, 1e-15);
}

TEST(Shift, EvolutionScalesExponentially) {
  const Horizon h = make_horizon(-200, 200);
  const auto m = lyapunov_random(h, 3, 12);
  const EvolutionCache base(m);
  for (double gamma : {-0.7, 0.3, 1.1}) {
    const EvolutionCache shifted(shift(m, gamma));
    for (auto [hi, lo] : {std::pair<Index, Index>{150, -120}, {10, 3}, {-50, 40}}) {
      const Matrix expected = std::exp(-gamma * static_cast<double>(hi - lo)) * evolution(base, hi, lo);
      EXPECT_LT(relative_error(evolution(shifted, hi, lo), expected), 1e-10);
    }
  }
}

// ---------------------------------------------------------------------------
// compound matrices

TEST(Compound, FirstCompoundAndDeterminant) {
  const auto m = lyapunov_random(make_horizon(0, 1), 4, 3).at(0);
  EXPECT_EQ(compound(m, 1), m);
  EXPECT_NEAR(compound(m, 4)(0, 0), m.determinant(), 1e-14);
}

TEST(Compound, CauchyBinet) {
  const Horizon h = make_horizon(0, 10);
  for (int d = 2; d <= 5; ++d) {
    const auto m = random_bounded_sequence(h, d, d, static_cast<std::uint64_t>(d));
    for (int k = 1; k <= d; ++k) {
      const Matrix a = m.at(1), b = m.at(2);
      EXPECT_LT((compound(a * b, k) - compound(a, k) * compound(b, k)).norm(), 1e-12)
          << "d=" << d << " k=" << k;
    }
  }
}

TEST(Compound, SingularValuesAreProducts) {
  const auto m = random_bounded_sequence(make_horizon(0, 1), 4, 4, 77).at(0);
  const Eigen::VectorXd s = Eigen::JacobiSVD<Matrix>(m).singularValues();
  for (int k = 1; k <= 4; ++k) {
    const double top = Eigen::JacobiSVD<Matrix>(compound(m, k)).singularValues()(0);
    EXPECT_NEAR(top, s.head(k).prod(), 1e-12);
  }
}

TEST(Random, StreamsAreIndexed) {
  auto a = indexed_engine(5, 10, 1);
  auto b = indexed_engine(5, 10, 1);
  auto c = indexed_engine(5, 11, 1);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform(a, -2.0, 3.0);
    EXPECT_GE(u, -2.0);
    EXPECT_LT(u, 3.0);
  }
}

}  // namespace
}  // namespace tvspec
