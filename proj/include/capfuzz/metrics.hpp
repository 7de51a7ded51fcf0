#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "capfuzz/error.hpp"
#include "capfuzz/problem.hpp"
#include "capfuzz/qp_membership.hpp"

namespace capfuzz {

using LabelVector = std::vector<int>;

/// J = sum_ij u_ij^m q_ij.
inline double objective(const MembershipMatrix& u, const SquaredDistanceMatrix& q, double m) {
    if (u.values.rows() != q.values.rows() || u.values.cols() != q.values.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "objective: membership and distance shapes differ");
    }
    if (!(m > 1.0)) throw Error(ErrorCode::UnsupportedFuzzifier, "fuzzifier must exceed 1");
    if (m == 2.0) return (u.values.array().square() * q.values.array()).sum();
    return (u.values.array().abs().pow(m) * q.values.array()).sum();
}

/// Column-wise argmax; ties go to the lowest cluster id.
inline LabelVector harden(const MembershipMatrix& u) {
    LabelVector labels(static_cast<std::size_t>(u.values.cols()), 0);
    for (Eigen::Index j = 0; j < u.values.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < u.values.rows(); ++i) {
            if (u.values(i, j) > u.values(best, j)) best = i;
        }
        labels[static_cast<std::size_t>(j)] = static_cast<int>(best);
    }
    return labels;
}

/// Adjusted Rand index (Hubert & Arabie) from the contingency table.
/// Two single-cluster partitions score 1.
inline double adjusted_rand_index(const LabelVector& a, const LabelVector& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    "label vectors have lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    const auto n = static_cast<double>(a.size());
    auto pairs = [](double c) { return c * (c - 1.0) / 2.0; };

    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> rows;
    std::map<int, double> cols;
    for (std::size_t k = 0; k < a.size(); ++k) {
        cells[{a[k], b[k]}] += 1.0;
        rows[a[k]] += 1.0;
        cols[b[k]] += 1.0;
    }
    double index = 0.0;
    for (const auto& [key, c] : cells) index += pairs(c);
    double sum_rows = 0.0;
    for (const auto& [key, c] : rows) sum_rows += pairs(c);
    double sum_cols = 0.0;
    for (const auto& [key, c] : cols) sum_cols += pairs(c);

    const double total = pairs(n);
    const double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

/// max_i |sum_j u_ij z_j - mu_i| / mu_i
inline double capacity_residual(const MembershipMatrix& u, const Vector& z, const Vector& mu) {
    if (u.values.cols() != z.size() || u.values.rows() != mu.size()) {
        throw Error(ErrorCode::DimensionMismatch, "capacity_residual: inconsistent shapes");
    }
    const Vector load = u.values * z;
    return ((load - mu).array().abs() / mu.array()).maxCoeff();
}

}  // namespace capfuzz
