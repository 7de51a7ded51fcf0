#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "capfuzz/error.hpp"

namespace capfuzz {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Tolerances {
    double feasibility_tol = 1e-9;  // relative, on the capacity-sum mismatch
    double convergence_tol = 1e-6;
    int max_iterations = 300;
};

/// Raw problem instance. Points are stored one per row (n x d).
struct ProblemSpec {
    Matrix points;
    Vector weights;     // z_j, length n
    Vector capacities;  // mu_i, length g
    double fuzzifier = 2.0;
    Tolerances tolerances{};
};

/// g x n membership degrees u_ij. `bounds_enforced` is false for the output
/// of the equality-only solve, whose entries may leave [0, 1].
struct MembershipMatrix {
    Matrix values;
    bool bounds_enforced = true;

    Eigen::Index clusters() const { return values.rows(); }
    Eigen::Index points() const { return values.cols(); }
};

/// g x d centroid coordinates, one centroid per row.
struct Centroids {
    Matrix values;
};

/// Length of the bounding-box diagonal; an upper bound on the data diameter.
inline double bounding_box_diagonal(const Matrix& points) {
    if (points.rows() == 0) return 0.0;
    Vector span = points.colwise().maxCoeff() - points.colwise().minCoeff();
    return span.norm();
}

/// Squared-distance floor (1e-9 * diameter)^2, kept strictly positive.
inline double default_clamp_floor(const Matrix& points) {
    const double scale = 1e-9 * bounding_box_diagonal(points);
    return std::max(scale * scale, std::numeric_limits<double>::min());
}

/// A problem instance that passed validation. Capacities are rescaled so
/// that their sum equals the total weight.
class ValidatedProblem {
public:
    const Matrix& points() const { return points_; }
    const Vector& weights() const { return weights_; }
    const Vector& capacities() const { return capacities_; }
    double fuzzifier() const { return fuzzifier_; }
    const Tolerances& tolerances() const { return tolerances_; }
    double clamp_floor() const { return clamp_floor_; }

    Eigen::Index n() const { return points_.rows(); }
    Eigen::Index d() const { return points_.cols(); }
    Eigen::Index g() const { return capacities_.size(); }

private:
    friend ValidatedProblem validate_problem(const ProblemSpec& spec);
    ValidatedProblem() = default;

    Matrix points_;
    Vector weights_;
    Vector capacities_;
    double fuzzifier_ = 2.0;
    Tolerances tolerances_{};
    double clamp_floor_ = 0.0;
};

inline ValidatedProblem validate_problem(const ProblemSpec& spec) {
    const auto n = spec.points.rows();
    const auto d = spec.points.cols();
    const auto g = spec.capacities.size();
    if (n == 0 || d == 0) throw Error(ErrorCode::EmptyData, "no data points");
    if (g == 0) throw Error(ErrorCode::EmptyData, "no clusters");
    if (spec.weights.size() != n) {
        throw Error(ErrorCode::DimensionMismatch,
                    "weights length " + std::to_string(spec.weights.size()) + " != n = " + std::to_string(n));
    }
    if (n < g) {
        throw Error(ErrorCode::InvalidArgument,
                    "need n >= g, got n = " + std::to_string(n) + ", g = " + std::to_string(g));
    }
    if (!spec.points.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite coordinate");
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!(spec.weights[j] > 0.0) || !std::isfinite(spec.weights[j])) {
            throw Error(ErrorCode::NonPositiveWeight, "weight " + std::to_string(j) + " is not positive");
        }
    }
    for (Eigen::Index i = 0; i < g; ++i) {
        if (!(spec.capacities[i] > 0.0) || !std::isfinite(spec.capacities[i])) {
            throw Error(ErrorCode::NonPositiveCapacity, "capacity " + std::to_string(i) + " is not positive");
        }
    }
    const auto& tol = spec.tolerances;
    if (!(tol.feasibility_tol >= 0.0) || !(tol.convergence_tol > 0.0) || tol.max_iterations < 1) {
        throw Error(ErrorCode::InvalidArgument, "invalid tolerances");
    }
    if (!(spec.fuzzifier > 1.0)) throw Error(ErrorCode::UnsupportedFuzzifier, "fuzzifier must exceed 1");

    const double total_weight = spec.weights.sum();
    const double total_capacity = spec.capacities.sum();
    if (std::abs(total_capacity - total_weight) > tol.feasibility_tol * total_weight) {
        throw Error(ErrorCode::CapacityMismatch, "sum of capacities " + std::to_string(total_capacity) +
                                                     " != sum of weights " + std::to_string(total_weight));
    }

    ValidatedProblem out;
    out.points_ = spec.points;
    out.weights_ = spec.weights;
    out.capacities_ = spec.capacities * (total_weight / total_capacity);
    out.fuzzifier_ = spec.fuzzifier;
    out.tolerances_ = tol;
    out.clamp_floor_ = default_clamp_floor(spec.points);
    return out;
}

/// Uniform split u_ij = mu_i / sum(mu); feasible whenever sum(mu) = sum(z).
inline MembershipMatrix feasible_init_membership(const ValidatedProblem& problem) {
    const Vector share = problem.capacities() / problem.capacities().sum();
    MembershipMatrix u;
    u.values = share.replicate(1, problem.n());
    u.bounds_enforced = true;
    return u;
}

}  // namespace capfuzz
