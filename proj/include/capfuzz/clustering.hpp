#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "capfuzz/error.hpp"
#include "capfuzz/metrics.hpp"
#include "capfuzz/problem.hpp"
#include "capfuzz/qp_membership.hpp"

namespace capfuzz {

struct FitResult {
    MembershipMatrix memberships;
    Centroids centroids;
    std::vector<double> objective_trace;          // J after each full iteration
    std::vector<double> capacity_residual_trace;  // relative, after each membership step
    int iterations = 0;
    bool converged = false;
    int clamp_events = 0;
};

struct InitStrategy {
    enum class Kind { SeededPoints, UserProvided };

    Kind kind = Kind::SeededPoints;
    std::uint64_t rng_seed = 0;
    Matrix centroids;  // g x d, only for UserProvided

    static InitStrategy seeded(std::uint64_t seed) { return {Kind::SeededPoints, seed, {}}; }
    static InitStrategy provided(Matrix c) { return {Kind::UserProvided, 0, std::move(c)}; }
};

namespace detail {

// 53-bit uniform in [0, 1); the standard distributions are not
// reproducible across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Distance-weighted greedy seeding: the first centroid is a uniformly drawn
/// point, each further one is drawn with probability proportional to the
/// squared distance to the nearest chosen centroid. Picks g distinct points.
inline Matrix seed_centroids(const Matrix& points, Eigen::Index g, std::uint64_t seed) {
    const auto n = points.rows();
    if (g < 1 || g > n) throw Error(ErrorCode::InvalidArgument, "need 1 <= g <= n for seeding");
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> chosen;
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    Vector nearest = Vector::Constant(n, std::numeric_limits<double>::infinity());

    auto take = [&](Eigen::Index idx) {
        chosen.push_back(idx);
        taken[static_cast<std::size_t>(idx)] = true;
        for (Eigen::Index j = 0; j < n; ++j) {
            nearest[j] = std::min(nearest[j], (points.row(j) - points.row(idx)).squaredNorm());
        }
    };

    take(std::min<Eigen::Index>(static_cast<Eigen::Index>(detail::uniform01(rng) * static_cast<double>(n)), n - 1));
    while (static_cast<Eigen::Index>(chosen.size()) < g) {
        double total = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!taken[static_cast<std::size_t>(j)]) total += nearest[j];
        }
        Eigen::Index pick = -1;
        if (total > 0.0) {
            const double target = detail::uniform01(rng) * total;
            double acc = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (taken[static_cast<std::size_t>(j)] || nearest[j] <= 0.0) continue;
                acc += nearest[j];
                pick = j;
                if (acc > target) break;
            }
        } else {
            // remaining points all duplicate a chosen one
            for (Eigen::Index j = 0; j < n && pick < 0; ++j) {
                if (!taken[static_cast<std::size_t>(j)]) pick = j;
            }
        }
        take(pick);
    }
    Matrix c(g, points.cols());
    for (Eigen::Index i = 0; i < g; ++i) c.row(i) = points.row(chosen[static_cast<std::size_t>(i)]);
    return c;
}

inline Matrix initial_centroids(const Matrix& points, Eigen::Index g, const InitStrategy& init) {
    if (init.kind == InitStrategy::Kind::UserProvided) {
        if (init.centroids.rows() != g || init.centroids.cols() != points.cols()) {
            throw Error(ErrorCode::DimensionMismatch, "initial centroids must be " + std::to_string(g) + "x" +
                                                          std::to_string(points.cols()));
        }
        return init.centroids;
    }
    return seed_centroids(points, g, init.rng_seed);
}

/// c_i = sum_j u_ij^m x_j / sum_j u_ij^m
inline Centroids update_centroids(const MembershipMatrix& u, const Matrix& points, double m) {
    if (u.values.cols() != points.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "memberships and points disagree on n");
    }
    const Matrix um = m == 2.0 ? Matrix(u.values.array().square()) : Matrix(u.values.array().abs().pow(m));
    const Vector mass = um.rowwise().sum();
    for (Eigen::Index i = 0; i < mass.size(); ++i) {
        if (!(mass[i] >= 1e-300)) {
            throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(i) + " has no membership mass");
        }
    }
    Centroids c;
    c.values = (um * points).array().colwise() / mass.array();
    return c;
}

namespace detail {

inline double max_displacement(const Matrix& a, const Matrix& b) {
    return (a - b).rowwise().norm().maxCoeff();
}

/// Shared alternating loop: membership step for fixed centroids, then the
/// centroid update. `step` maps clamped distances to memberships.
template <class MembershipStep>
FitResult alternate(const Matrix& points, Matrix centroids, double m, const Tolerances& tol, double clamp_floor,
                    const Vector& z, const Vector& mu, MembershipStep&& step, bool assert_monotone) {
    FitResult out;
    SquaredDistanceMatrix q = build_squared_distances(points, centroids, clamp_floor);
    out.clamp_events += q.clamp_count;
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= tol.max_iterations; ++k) {
        MembershipMatrix u = step(q);
        out.capacity_residual_trace.push_back(capacity_residual(u, z, mu));
        Centroids next = update_centroids(u, points, m);
        SquaredDistanceMatrix next_q = build_squared_distances(points, next.values, clamp_floor);
        out.clamp_events += next_q.clamp_count;
        const double j_value = objective(u, next_q, m);
        if (assert_monotone && j_value > previous + 1e-9 * std::max(1.0, std::abs(previous))) {
            throw Error(ErrorCode::NonMonotoneObjective,
                        "objective rose from " + std::to_string(previous) + " to " + std::to_string(j_value) +
                            " at iteration " + std::to_string(k));
        }
        out.objective_trace.push_back(j_value);
        const double shift = max_displacement(next.values, centroids);
        const bool flat = k > 1 && std::abs(previous - j_value) < tol.convergence_tol * (1.0 + j_value);

        out.memberships = std::move(u);
        centroids = std::move(next.values);
        q = std::move(next_q);
        previous = j_value;
        out.iterations = k;
        if (shift < tol.convergence_tol || flat) {
            out.converged = true;
            break;
        }
    }
    out.centroids.values = std::move(centroids);
    return out;
}

}  // namespace detail

/// One membership step of the capacity-constrained model: the equality
/// solution, escalated to the bounded solve only when an entry leaves
/// [-1e-12, 1 + 1e-12].
inline MembershipMatrix capacitated_membership(const SquaredDistanceMatrix& q, const Vector& z, const Vector& mu) {
    auto eq = solve_equality_qp(q, z, mu);
    const auto& v = eq.memberships.values.array();
    if ((v >= -1e-12).all() && (v <= 1.0 + 1e-12).all()) {
        eq.memberships.bounds_enforced = true;
        return std::move(eq.memberships);
    }
    return solve_box_qp(q, z, mu).memberships;
}

/// Alternating minimization for the capacity-constrained problem (m = 2).
inline FitResult fit_capacitated(const ValidatedProblem& problem, const InitStrategy& init) {
    if (problem.fuzzifier() != 2.0) {
        throw Error(ErrorCode::UnsupportedFuzzifier,
                    "the capacity-constrained membership step requires m = 2, got m = " +
                        std::to_string(problem.fuzzifier()));
    }
    const Vector& z = problem.weights();
    const Vector& mu = problem.capacities();
    return detail::alternate(
        problem.points(), initial_centroids(problem.points(), problem.g(), init), 2.0, problem.tolerances(),
        problem.clamp_floor(), z, mu, [&](const SquaredDistanceMatrix& q) { return capacitated_membership(q, z, mu); },
        true);
}

/// Unconstrained fuzzy c-means membership. A centroid within the clamp floor
/// of a point takes all of that point's membership (split evenly on ties).
inline MembershipMatrix fcm_membership(const SquaredDistanceMatrix& q, double m) {
    const auto g = q.values.rows();
    const auto n = q.values.cols();
    const double exponent = 1.0 / (m - 1.0);
    MembershipMatrix u;
    u.values.resize(g, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index coincident = 0;
        for (Eigen::Index i = 0; i < g; ++i) {
            if (q.values(i, j) <= q.clamp_floor) ++coincident;
        }
        if (coincident > 0) {
            for (Eigen::Index i = 0; i < g; ++i) {
                u.values(i, j) = q.values(i, j) <= q.clamp_floor ? 1.0 / static_cast<double>(coincident) : 0.0;
            }
            continue;
        }
        for (Eigen::Index i = 0; i < g; ++i) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < g; ++k) s += std::pow(q.values(i, j) / q.values(k, j), exponent);
            u.values(i, j) = 1.0 / s;
        }
    }
    return u;
}

struct FcmOptions {
    Tolerances tolerances{};
    /// Used only for the reported capacity residual; default unit weights
    /// and equal capacities.
    std::optional<Vector> weights;
    std::optional<Vector> capacities;
};

inline FitResult fit_fcm(const Matrix& points, Eigen::Index g, double m, const InitStrategy& init,
                         const FcmOptions& options = {}) {
    if (!(m > 1.0)) throw Error(ErrorCode::UnsupportedFuzzifier, "fuzzifier must exceed 1");
    const auto n = points.rows();
    if (n == 0 || points.cols() == 0) throw Error(ErrorCode::EmptyData, "no data points");
    if (g < 1 || g > n) throw Error(ErrorCode::InvalidArgument, "need 1 <= g <= n");
    const Vector z = options.weights.value_or(Vector::Ones(n));
    if (z.size() != n) throw Error(ErrorCode::DimensionMismatch, "weights length != n");
    const Vector mu = options.capacities.value_or(Vector::Constant(g, z.sum() / static_cast<double>(g)));
    if (mu.size() != g) throw Error(ErrorCode::DimensionMismatch, "capacities length != g");
    return detail::alternate(
        points, initial_centroids(points, g, init), m, options.tolerances, default_clamp_floor(points), z, mu,
        [&](const SquaredDistanceMatrix& q) { return fcm_membership(q, m); }, false);
}

/// Unit weights and equal capacities n/g.
inline ProblemSpec equibalanced_spec(const Matrix& points, Eigen::Index g, const Tolerances& tolerances = {}) {
    ProblemSpec spec;
    spec.points = points;
    spec.weights = Vector::Ones(points.rows());
    spec.capacities = Vector::Constant(g, static_cast<double>(points.rows()) / static_cast<double>(g));
    spec.tolerances = tolerances;
    return spec;
}

inline FitResult fit_equibalanced(const Matrix& points, Eigen::Index g, const InitStrategy& init,
                                  const Tolerances& tolerances = {}) {
    if (g < 1) throw Error(ErrorCode::InvalidArgument, "g must be at least 1");
    return fit_capacitated(validate_problem(equibalanced_spec(points, g, tolerances)), init);
}

}  // namespace capfuzz
