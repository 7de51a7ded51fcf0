#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "capfuzz/metrics.hpp"
#include "capfuzz/qp_membership.hpp"
#include "test_support.hpp"

using namespace capfuzz;
using capfuzz::testing::make_q;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

Matrix mat2(double a, double b, double c, double d) {
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

}  // namespace

TEST(SquaredDistances, PythagoreanTriple) {
    Matrix x(1, 2);
    x << 0, 0;
    Matrix c(1, 2);
    c << 3, 4;
    const auto q = build_squared_distances(x, c, 1e-18);
    EXPECT_DOUBLE_EQ(q.values(0, 0), 25.0);
    EXPECT_FALSE(q.clamped());
}

TEST(SquaredDistances, CoincidentPointIsClamped) {
    Matrix x(1, 2);
    x << 1.5, -2;
    const auto q = build_squared_distances(x, x, 1e-18);
    EXPECT_EQ(q.values(0, 0), 1e-18);
    EXPECT_TRUE(q.clamped());
    EXPECT_EQ(q.clamp_count, 1);
}

TEST(SquaredDistances, OneDimensional) {
    Matrix x(1, 1);
    x << 1;
    Matrix c(1, 1);
    c << -1;
    EXPECT_DOUBLE_EQ(build_squared_distances(x, c, 1e-18).values(0, 0), 4.0);
}

TEST(SquaredDistances, DimensionMismatch) {
    Matrix x = Matrix::Zero(3, 2);
    Matrix c = Matrix::Zero(2, 3);
    try {
        build_squared_distances(x, c, 1e-18);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(EqualityQp, SingleClusterTakesEverything) {
    const auto q = make_q((Matrix(1, 3) << 2.0, 0.5, 7.0).finished());
    const Vector z = vec({1.0, 2.0, 0.5});
    const auto sol = solve_equality_qp(q, z, vec({3.5}));
    EXPECT_TRUE(sol.memberships.values.isApproxToConstant(1.0, 1e-14));
}

TEST(EqualityQp, FullySymmetricInstance) {
    const auto sol = solve_equality_qp(make_q(Matrix::Ones(2, 2)), vec({1, 1}), vec({1, 1}));
    EXPECT_TRUE(sol.memberships.values.isApproxToConstant(0.5, 1e-14));
}

TEST(EqualityQp, OneFreeScalarMatchesGridOracle) {
    // u11 = u22 = t, u12 = u21 = 1 - t; objective 2 t^2 + 8 (1 - t)^2.
    const double t_grid =
        capfuzz::testing::grid_argmin([](double t) { return 2 * t * t + 8 * (1 - t) * (1 - t); }, -1.0, 2.0, 3'000'000);
    EXPECT_NEAR(t_grid, 0.8, 1e-6);

    const auto sol = solve_equality_qp(make_q(mat2(1, 4, 4, 1)), vec({1, 1}), vec({1, 1}));
    const Matrix expected = mat2(0.8, 0.2, 0.2, 0.8);
    EXPECT_LT((sol.memberships.values - expected).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_FALSE(sol.memberships.bounds_enforced);
}

TEST(EqualityQp, GaugeFixesLastCapacityMultiplier) {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 20; ++k) {
        const auto inst = capfuzz::testing::random_qp_instance(rng);
        const auto sol = solve_equality_qp(inst.q, inst.z, inst.mu);
        EXPECT_EQ(sol.multipliers.beta[sol.multipliers.beta.size() - 1], 0.0);
        // u reconstructed from the multipliers
        for (Eigen::Index j = 0; j < inst.z.size(); ++j) {
            for (Eigen::Index i = 0; i < inst.mu.size(); ++i) {
                const double u = (sol.multipliers.alpha[j] + sol.multipliers.beta[i] * inst.z[j]) /
                                 (2.0 * inst.q.values(i, j));
                EXPECT_NEAR(u, sol.memberships.values(i, j), 1e-9);
            }
        }
    }
}

TEST(EqualityQp, MatchesDenseSaddleSolve) {
    std::mt19937_64 rng(2024);
    for (int k = 0; k < 50; ++k) {
        const auto inst = capfuzz::testing::random_qp_instance(rng);
        const auto sol = solve_equality_qp(inst.q, inst.z, inst.mu);
        const Matrix dense = capfuzz::testing::dense_kkt_equality(inst.q, inst.z, inst.mu);
        EXPECT_LE((sol.memberships.values - dense).cwiseAbs().maxCoeff(), 1e-8) << "instance " << k;
        const Vector col_gap = sol.memberships.values.colwise().sum().transpose().array() - 1.0;
        EXPECT_LE(col_gap.cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE(((sol.memberships.values * inst.z - inst.mu).array() / inst.mu.array()).abs().maxCoeff(), 1e-10);
    }
}

TEST(EqualityQp, ScalingDistancesLeavesArgminUnchanged) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 30; ++k) {
        const auto inst = capfuzz::testing::random_qp_instance(rng);
        auto scaled = inst.q;
        const double kappa = 37.5;
        scaled.values *= kappa;
        const auto a = solve_equality_qp(inst.q, inst.z, inst.mu);
        const auto b = solve_equality_qp(scaled, inst.z, inst.mu);
        EXPECT_LE((a.memberships.values - b.memberships.values).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((b.multipliers.beta - kappa * a.multipliers.beta).cwiseAbs().maxCoeff(),
                  1e-8 * std::max(1.0, kappa * a.multipliers.beta.cwiseAbs().maxCoeff()));
    }
}

TEST(EqualityQp, HugeWeightFromClampedDistanceStaysAccurate) {
    // point 0 sits on centroid 0
    const auto q = make_q((Matrix(2, 3) << 1e-18, 4.0, 9.0, 16.0, 1.0, 1.0).finished());
    const Vector z = vec({1, 1, 1});
    const Vector mu = vec({1.5, 1.5});
    const auto sol = solve_equality_qp(q, z, mu);
    const Matrix dense = capfuzz::testing::dense_kkt_equality(q, z, mu);
    EXPECT_LE((sol.memberships.values - dense).cwiseAbs().maxCoeff(), 1e-9);
    const auto box = solve_box_qp(q, z, mu);
    EXPECT_LE(kkt_residual(box.memberships, box.multipliers, box.active_set, q, z, mu), 1e-8);
    EXPECT_NEAR(box.memberships.values(0, 0), 1.0, 1e-9);
}

TEST(EqualityQp, ShapeErrors) {
    EXPECT_THROW(solve_equality_qp(make_q(Matrix::Ones(2, 3)), vec({1, 1}), vec({1, 1})), Error);
}

TEST(BoxQp, InteriorEqualitySolutionIsReturnedUnchanged) {
    const auto q = make_q(mat2(1, 4, 4, 1));
    const auto eq = solve_equality_qp(q, vec({1, 1}), vec({1, 1}));
    const auto box = solve_box_qp(q, vec({1, 1}), vec({1, 1}));
    EXPECT_EQ(box.memberships.values, eq.memberships.values);
    EXPECT_TRUE(box.active_set.empty());
    EXPECT_TRUE(box.memberships.bounds_enforced);
    EXPECT_EQ(box.iterations, 0);
}

TEST(BoxQp, ClippedScalarMatchesGridOracle) {
    // u11 = t, u21 = 1 - t, u12 = 1.9 - t, u22 = t - 0.9, feasible t in [0.9, 1].
    auto f = [](double t) {
        return 0.01 * t * t + (1 - t) * (1 - t) + (1.9 - t) * (1.9 - t) + 0.01 * (t - 0.9) * (t - 0.9);
    };
    EXPECT_NEAR(capfuzz::testing::grid_argmin(f, 0.0, 3.0, 3'000'000), 5.818 / 4.04, 1e-6);
    const double t_box = capfuzz::testing::grid_argmin(f, 0.9, 1.0, 1'000'000);
    EXPECT_NEAR(t_box, 1.0, 1e-12);

    const auto q = make_q(mat2(0.01, 1, 1, 0.01));
    const Vector z = vec({1, 1});
    const Vector mu = vec({1.9, 0.1});
    const auto box = solve_box_qp(q, z, mu);
    const Matrix expected = mat2(1.0, 0.9, 0.0, 0.1);
    EXPECT_LE((box.memberships.values - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(box.active_set.status(1, 0), BoundState::Lower);
    EXPECT_EQ(box.active_set.status(0, 0), BoundState::Upper);
    EXPECT_EQ(box.active_set.status(0, 1), BoundState::Free);
    EXPECT_GE(box.active_set.lower_multipliers()(1, 0), 0.0);
    EXPECT_LE(kkt_residual(box.memberships, box.multipliers, box.active_set, q, z, mu), 1e-8);
}

TEST(BoxQp, SingleCluster) {
    const auto q = make_q((Matrix(1, 2) << 3.0, 0.2).finished());
    const auto box = solve_box_qp(q, vec({1, 2}), vec({3}));
    EXPECT_TRUE(box.memberships.values.isApproxToConstant(1.0, 1e-14));
    EXPECT_TRUE(box.active_set.empty());
}

TEST(BoxQp, UnreachableCapacity) {
    const auto q = make_q(Matrix::Ones(2, 2));
    try {
        solve_box_qp(q, vec({1, 1}), vec({2.5, -0.5}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InfeasibleBoxProblem);
    }
}

TEST(BoxQp, AgreesWithProjectedGradientOracle) {
    std::mt19937_64 rng(77);
    int with_active_bounds = 0;
    for (int k = 0; k < 40; ++k) {
        const auto inst = capfuzz::testing::random_qp_instance(rng);
        const auto box = solve_box_qp(inst.q, inst.z, inst.mu);
        const auto oracle = capfuzz::testing::projected_gradient_oracle(inst.q, inst.z, inst.mu);
        EXPECT_LE((box.memberships.values - oracle.u).cwiseAbs().maxCoeff(), 1e-5) << "instance " << k;
        EXPECT_LE(kkt_residual(box.memberships, box.multipliers, box.active_set, inst.q, inst.z, inst.mu), 1e-8);
        if (!box.active_set.empty()) ++with_active_bounds;
    }
    EXPECT_GT(with_active_bounds, 10);
}

TEST(BoxQp, EqualityObjectiveIsALowerBound) {
    std::mt19937_64 rng(99);
    for (int k = 0; k < 100; ++k) {
        const auto inst = capfuzz::testing::random_qp_instance(rng);
        const auto eq = solve_equality_qp(inst.q, inst.z, inst.mu);
        const auto box = solve_box_qp(inst.q, inst.z, inst.mu);
        EXPECT_LE(objective(eq.memberships, inst.q, 2.0), objective(box.memberships, inst.q, 2.0) + 1e-12);
    }
}

TEST(BoxQp, ActiveSetPartitionAndComplementarity) {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 30; ++k) {
        const auto inst = capfuzz::testing::random_qp_instance(rng);
        const auto box = solve_box_qp(inst.q, inst.z, inst.mu);
        const auto& s = box.active_set;
        EXPECT_EQ(s.count(BoundState::Free) + s.count(BoundState::Lower) + s.count(BoundState::Upper),
                  static_cast<std::size_t>(inst.q.values.size()));
        for (Eigen::Index j = 0; j < inst.z.size(); ++j) {
            for (Eigen::Index i = 0; i < inst.mu.size(); ++i) {
                const double u = box.memberships.values(i, j);
                if (s.status(i, j) == BoundState::Lower) {
                    EXPECT_EQ(u, 0.0);
                }
                if (s.status(i, j) == BoundState::Upper) {
                    EXPECT_EQ(u, 1.0);
                }
                if (s.status(i, j) != BoundState::Lower) {
                    EXPECT_EQ(s.lower_multipliers()(i, j), 0.0);
                }
            }
        }
    }
}

TEST(KktResidual, DetectsPointSumViolation) {
    const auto q = make_q(Matrix::Ones(2, 2));
    const Vector z = vec({1, 1});
    const Vector mu = vec({1, 1});
    auto sol = solve_equality_qp(q, z, mu);
    sol.memberships.values(0, 0) += 0.1;
    EXPECT_GE(kkt_residual(sol.memberships, sol.multipliers, ActiveSetState(2, 2), q, z, mu), 0.1);
}

TEST(KktResidual, DetectsNegativeEntryWithEmptyActiveSet) {
    const auto q = make_q(mat2(0.01, 1, 1, 0.01));
    const Vector z = vec({1, 1});
    const Vector mu = vec({1.9, 0.1});
    const auto eq = solve_equality_qp(q, z, mu);
    const double most_negative = eq.memberships.values.minCoeff();
    ASSERT_LT(most_negative, 0.0);
    EXPECT_GE(kkt_residual(eq.memberships, eq.multipliers, ActiveSetState(2, 2), q, z, mu), -most_negative);

    MembershipMatrix hand;
    hand.values = mat2(1.05, 0.85, -0.05, 0.15);
    KktMultipliers zero{Vector::Zero(2), Vector::Zero(2)};
    EXPECT_GE(kkt_residual(hand, zero, ActiveSetState(2, 2), q, z, mu), 0.05);
}

TEST(KktResidual, ShapeMismatch) {
    const auto q = make_q(Matrix::Ones(2, 2));
    MembershipMatrix u{Matrix::Ones(2, 3), true};
    KktMultipliers m{Vector::Zero(3), Vector::Zero(2)};
    EXPECT_THROW(kkt_residual(u, m, ActiveSetState(2, 3), q, vec({1, 1, 1}), vec({1.5, 1.5})), Error);
}

TEST(EqualityQp, RoughlyLinearInPointCount) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> d(0.1, 10.0);
    auto time_for = [&](int n) {
        const int g = 8;
        Matrix qv(g, n);
        for (Eigen::Index k = 0; k < qv.size(); ++k) qv.data()[k] = std::pow(d(rng), 2);
        const auto q = make_q(qv);
        const Vector z = Vector::Ones(n);
        const Vector mu = Vector::Constant(g, n / 8.0);
        double best = 1e9;
        for (int rep = 0; rep < 15; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            auto sol = solve_equality_qp(q, z, mu);
            const auto t1 = std::chrono::steady_clock::now();
            volatile double sink = sol.memberships.values(0, 0);
            (void)sink;
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        return best;
    };
    const double t2000 = time_for(2000);
    const double t4000 = time_for(4000);
    EXPECT_LE(t4000, 3.0 * t2000) << t2000 << " vs " << t4000;
}
