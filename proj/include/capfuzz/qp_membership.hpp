#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "capfuzz/error.hpp"
#include "capfuzz/problem.hpp"

// Membership step for m = 2. For fixed centroids the memberships solve
//
//   min  sum_ij u_ij^2 q_ij
//   s.t. sum_i u_ij = 1             (every point j)
//        sum_j u_ij z_j = mu_i      (every cluster i)
//        0 <= u_ij <= 1
//
// Stationarity gives u_ij = (alpha_j + beta_i z_j) / (2 q_ij). Substituting
// into the constraints yields a (n + g) system in the multipliers whose
// point block is diagonal; eliminating it leaves a g x g Schur complement
// with a one-dimensional null space (beta -> beta + c, alpha -> alpha - c z),
// removed by pinning beta_{g-1} = 0.

namespace capfuzz {

/// Clamped squared distances q_ij = max(|x_j - c_i|^2, clamp_floor), g x n.
struct SquaredDistanceMatrix {
    Matrix values;
    double clamp_floor = 0.0;
    int clamp_count = 0;

    bool clamped() const { return clamp_count > 0; }
};

inline SquaredDistanceMatrix build_squared_distances(const Matrix& points, const Matrix& centroids,
                                                     double clamp_floor) {
    if (points.cols() != centroids.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "points have " + std::to_string(points.cols()) +
                                                      " features, centroids have " +
                                                      std::to_string(centroids.cols()));
    }
    if (!(clamp_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "clamp_floor must be positive");

    SquaredDistanceMatrix q;
    q.clamp_floor = clamp_floor;
    q.values.resize(centroids.rows(), points.rows());
    for (Eigen::Index j = 0; j < points.rows(); ++j) {
        for (Eigen::Index i = 0; i < centroids.rows(); ++i) {
            const double d2 = (points.row(j) - centroids.row(i)).squaredNorm();
            if (d2 < clamp_floor) {
                q.values(i, j) = clamp_floor;
                ++q.clamp_count;
            } else {
                q.values(i, j) = d2;
            }
        }
    }
    return q;
}

/// Multipliers of the point-sum (alpha) and capacity (beta) constraints,
/// scaled so that u_ij = (alpha_j + beta_i z_j) / (2 q_ij) on free entries.
/// beta[g-1] is pinned to zero.
struct KktMultipliers {
    Vector alpha;
    Vector beta;
};

enum class BoundState : std::uint8_t { Free, Lower, Upper };

/// Partition of the (i, j) entries into free / pinned-at-0 / pinned-at-1
/// together with the bound multipliers (gamma for 0, delta for 1).
class ActiveSetState {
public:
    ActiveSetState() = default;
    ActiveSetState(Eigen::Index g, Eigen::Index n)
        : g_(g), n_(n), status_(static_cast<std::size_t>(g * n), BoundState::Free),
          lower_multipliers_(Matrix::Zero(g, n)), upper_multipliers_(Matrix::Zero(g, n)) {}

    Eigen::Index clusters() const { return g_; }
    Eigen::Index points() const { return n_; }

    BoundState status(Eigen::Index i, Eigen::Index j) const { return status_[index(i, j)]; }
    void set_status(Eigen::Index i, Eigen::Index j, BoundState s) { status_[index(i, j)] = s; }

    /// gamma_ij, nonzero only on lower-active entries.
    const Matrix& lower_multipliers() const { return lower_multipliers_; }
    Matrix& lower_multipliers() { return lower_multipliers_; }
    /// delta_ij, nonzero only on upper-active entries.
    const Matrix& upper_multipliers() const { return upper_multipliers_; }
    Matrix& upper_multipliers() { return upper_multipliers_; }

    std::size_t count(BoundState s) const {
        return static_cast<std::size_t>(std::count(status_.begin(), status_.end(), s));
    }
    bool empty() const { return count(BoundState::Free) == status_.size(); }

private:
    std::size_t index(Eigen::Index i, Eigen::Index j) const { return static_cast<std::size_t>(j * g_ + i); }

    Eigen::Index g_ = 0;
    Eigen::Index n_ = 0;
    std::vector<BoundState> status_;
    Matrix lower_multipliers_;
    Matrix upper_multipliers_;
};

struct EqualityQpSolution {
    MembershipMatrix memberships;
    KktMultipliers multipliers;
};

struct BoxQpSolution {
    MembershipMatrix memberships;
    KktMultipliers multipliers;
    ActiveSetState active_set;
    int iterations = 0;  // semismooth Newton steps; 0 when no bound was active
};

namespace detail {

inline void check_qp_shapes(const SquaredDistanceMatrix& q, const Vector& z, const Vector& mu) {
    if (q.values.rows() != mu.size() || q.values.cols() != z.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "q is " + std::to_string(q.values.rows()) + "x" + std::to_string(q.values.cols()) +
                        ", expected " + std::to_string(mu.size()) + "x" + std::to_string(z.size()));
    }
    if (mu.size() == 0 || z.size() == 0) throw Error(ErrorCode::EmptyData, "empty membership problem");
    if (!(q.values.array() > 0.0).all()) {
        throw Error(ErrorCode::InvalidArgument, "squared distances must be positive (clamped)");
    }
}

/// Gauge-fixed solve of the g x g Schur complement: the last multiplier is
/// held at zero and the leading (g-1) block is factored with LDL^T.
/// Returns false when a pivot falls below `pivot_tol` relative to the largest.
inline bool solve_gauged(const Matrix& schur, const Vector& rhs, double pivot_tol, Vector& out) {
    const auto g = schur.rows();
    out = Vector::Zero(g);
    if (g == 1) return true;
    const auto m = g - 1;
    Eigen::LDLT<Matrix> ldlt(schur.topLeftCorner(m, m));
    if (ldlt.info() != Eigen::Success) return false;
    const Vector piv = ldlt.vectorD();
    const double largest = piv.cwiseAbs().maxCoeff();
    if (!(largest > 0.0) || piv.minCoeff() <= pivot_tol * largest) return false;
    out.head(m) = ldlt.solve(rhs.head(m));
    return out.allFinite();
}

/// Schur complement of the multiplier system over the entries with
/// nonzero `w` (w_ij = 1/(2 q_ij) on free entries, 0 on pinned ones):
///   M_ik = delta_ik sum_j w_ij z_j^2 - sum_j z_j^2 w_ij w_kj / A_j,
///   A_j = sum_l w_lj.
/// Rows of M sum to zero, so it is a weighted graph Laplacian; it is built
/// from the off-diagonal terms to avoid cancelling O(w) diagonals when a
/// clamped distance makes one w_ij huge. Columns with no free entry
/// contribute nothing. O(n g^2).
inline Matrix assemble_schur(const Matrix& w, const Vector& z) {
    const auto g = w.rows();
    const auto n = w.cols();
    Matrix schur = Matrix::Zero(g, g);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double a = w.col(j).sum();
        if (a <= 0.0) continue;
        const double scale = z[j] * z[j] / a;
        for (Eigen::Index k = 0; k < g; ++k) {
            const double wk = w(k, j);
            if (wk == 0.0) continue;
            for (Eigen::Index i = k + 1; i < g; ++i) schur(i, k) -= scale * w(i, j) * wk;
        }
    }
    for (Eigen::Index k = 0; k < g; ++k) {
        for (Eigen::Index i = k + 1; i < g; ++i) schur(k, i) = schur(i, k);
    }
    for (Eigen::Index i = 0; i < g; ++i) {
        double off = 0.0;
        for (Eigen::Index k = 0; k < g; ++k) {
            if (k != i) off += schur(i, k);
        }
        schur(i, i) = -off;
    }
    return schur;
}

/// u_ij = (alpha_j + beta_i z_j) w_ij with alpha_j eliminated over the set S
/// of free entries in column j:
///   u_ij = w_ij / A_S (1 + z_j sum_{k in S} w_kj (beta_i - beta_k)).
/// This form has no cancellation between alpha_j and beta_i z_j.
inline double membership_from_beta(const Matrix& w, const Vector& z, const Vector& beta, Eigen::Index i,
                                   Eigen::Index j, const Eigen::Index* set, std::size_t set_size, double a) {
    double acc = 0.0;
    for (std::size_t s = 0; s < set_size; ++s) {
        const auto k = set[s];
        acc += w(k, j) * (beta[i] - beta[k]);
    }
    return w(i, j) / a * (1.0 + z[j] * acc);
}

inline void rebase_gauge(KktMultipliers& mult, const Vector& z) {
    const auto g = mult.beta.size();
    const double shift = mult.beta[g - 1];
    if (shift == 0.0) return;
    mult.beta.array() -= shift;
    mult.alpha += shift * z;
}

/// Evaluation of the capacity-dual at a given beta: for each point the
/// alpha_j making sum_i max(0, (alpha_j + beta_i z_j) w_ij) = 1 is found
/// exactly by a breakpoint sweep.
struct DualPoint {
    Vector beta;
    Vector alpha;
    Matrix u;
    Vector residual;  // mu_i - sum_j u_ij z_j
    double value = 0.0;
    double residual_norm = 0.0;
};

inline DualPoint evaluate_dual(const Matrix& q, const Matrix& w, const Vector& z, const Vector& mu,
                               const Vector& beta) {
    const auto g = q.rows();
    const auto n = q.cols();
    DualPoint p;
    p.beta = beta;
    p.alpha.resize(n);
    p.u.resize(g, n);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(g));
    for (Eigen::Index j = 0; j < n; ++j) {
        // Entries turn on in order of decreasing beta_i (breakpoint -beta_i z_j).
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return beta[a] > beta[b] || (beta[a] == beta[b] && a < b);
        });
        std::size_t active = 0;
        double sw = 0.0;
        double swb = 0.0;
        while (active < order.size()) {
            const auto i = order[active];
            if (active > 0) {
                double acc = 0.0;
                for (std::size_t s = 0; s < active; ++s) acc += w(order[s], j) * (beta[i] - beta[order[s]]);
                if (1.0 + z[j] * acc <= 0.0) break;
            }
            sw += w(i, j);
            swb -= w(i, j) * beta[i] * z[j];
            ++active;
        }
        p.alpha[j] = (1.0 + swb) / sw;
        p.u.col(j).setZero();
        for (std::size_t s = 0; s < active; ++s) {
            const auto i = order[s];
            p.u(i, j) = std::max(0.0, membership_from_beta(w, z, beta, i, j, order.data(), active, sw));
        }
    }
    p.residual = mu - p.u * z;
    p.residual_norm = p.residual.cwiseAbs().maxCoeff();
    const Vector col_gap = p.u.colwise().sum().transpose().array() - 1.0;
    p.value = (p.u.array().square() * q.array()).sum() + beta.dot(p.residual) - p.alpha.dot(col_gap);
    return p;
}

}  // namespace detail

/// Minimizer of the membership QP with the bounds dropped. Entries may leave
/// [0, 1]; the result is flagged with bounds_enforced = false.
inline EqualityQpSolution solve_equality_qp(const SquaredDistanceMatrix& q, const Vector& z, const Vector& mu) {
    detail::check_qp_shapes(q, z, mu);
    const auto g = q.values.rows();
    const auto n = q.values.cols();

    const Matrix w = 0.5 * q.values.cwiseInverse();
    const Vector point_diag = w.colwise().sum().transpose();  // per-point block
    const Matrix schur = detail::assemble_schur(w, z);

    // rhs_i = mu_i - sum_j w_ij z_j / A_j
    const Vector scaled_z = z.cwiseQuotient(point_diag);
    const Vector rhs = mu - w * scaled_z;

    Vector beta;
    if (!detail::solve_gauged(schur, rhs, 1e-12, beta)) {
        throw Error(ErrorCode::SingularReducedSystem, "reduced cluster system is numerically singular");
    }

    EqualityQpSolution out;
    out.multipliers.beta = beta;
    out.multipliers.alpha.resize(n);
    out.memberships.values.resize(g, n);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(g));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    for (Eigen::Index j = 0; j < n; ++j) {
        out.multipliers.alpha[j] = (1.0 - z[j] * w.col(j).dot(beta)) / point_diag[j];
        for (Eigen::Index i = 0; i < g; ++i) {
            out.memberships.values(i, j) =
                detail::membership_from_beta(w, z, beta, i, j, all.data(), all.size(), point_diag[j]);
        }
    }
    out.memberships.bounds_enforced = false;
    return out;
}

/// Full membership QP with 0 <= u_ij <= 1.
///
/// Starts from the equality solution and returns it unchanged when it is
/// already inside the box. Otherwise runs a semismooth Newton method on the
/// capacity multipliers: each step fixes the active set implied by the
/// current multipliers (entries with alpha_j + beta_i z_j <= 0 pinned at 0),
/// re-solves the equality system restricted to the free entries through the
/// same masked Schur complement, and line-searches on the concave dual.
/// The upper bound is implied by u >= 0 and the point-sum constraint; an
/// entry is reported upper-active when it is the only free entry in its
/// column.
inline BoxQpSolution solve_box_qp(const SquaredDistanceMatrix& q, const Vector& z, const Vector& mu) {
    detail::check_qp_shapes(q, z, mu);
    const auto g = q.values.rows();
    const auto n = q.values.cols();
    const double total = z.sum();
    if ((mu.array() <= 0.0).any() || (mu.array() > total * (1.0 + 1e-12)).any() ||
        std::abs(mu.sum() - total) > 1e-9 * total) {
        throw Error(ErrorCode::InfeasibleBoxProblem, "capacity targets unreachable with 0 <= u <= 1");
    }

    auto eq = solve_equality_qp(q, z, mu);
    BoxQpSolution out;
    out.active_set = ActiveSetState(g, n);
    if ((eq.memberships.values.array() >= 0.0).all() && (eq.memberships.values.array() <= 1.0).all()) {
        out.memberships = std::move(eq.memberships);
        out.memberships.bounds_enforced = true;
        out.multipliers = std::move(eq.multipliers);
        return out;
    }

    const Matrix w = 0.5 * q.values.cwiseInverse();
    const double tol = 1e-12 * std::max(total, 1.0);
    const double floor_tol = 1e-9 * std::max(total, 1.0);
    const long max_steps = 10L * g * n;

    detail::DualPoint cur = detail::evaluate_dual(q.values, w, z, mu, eq.multipliers.beta);
    Matrix masked_w(g, n);
    Vector step;
    int steps = 0;
    while (cur.residual_norm > tol) {
        if (steps >= max_steps) {
            throw Error(ErrorCode::ActiveSetStall,
                        "no convergence after " + std::to_string(steps) + " active-set updates");
        }
        ++steps;
        masked_w = (cur.u.array() > 0.0).select(w, 0.0);
        Matrix schur = detail::assemble_schur(masked_w, z);
        if (!detail::solve_gauged(schur, cur.residual, 1e-12, step)) {
            // Rows without free entries (or split components) leave the
            // restricted system singular; regularize so the line search can
            // move those multipliers.
            const double reg = 1e-10 * std::max(schur.diagonal().maxCoeff(), w.maxCoeff() * total);
            schur.diagonal().array() += reg;
            if (!detail::solve_gauged(schur, cur.residual, 0.0, step)) {
                throw Error(ErrorCode::SingularReducedSystem, "restricted cluster system is singular");
            }
        }
        const double slope = cur.residual.dot(step);
        double t = 1.0;
        bool accepted = false;
        detail::DualPoint trial;
        while (t > 1e-14) {
            trial = detail::evaluate_dual(q.values, w, z, mu, cur.beta + t * step);
            if (trial.value >= cur.value + 1e-4 * t * slope ||
                (t == 1.0 && trial.residual_norm < 0.5 * cur.residual_norm)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (cur.residual_norm <= floor_tol) break;  // roundoff floor
            throw Error(ErrorCode::ActiveSetStall, "line search failed on the capacity dual");
        }
        cur = std::move(trial);
    }

    out.iterations = steps;
    out.multipliers.alpha = cur.alpha;
    out.multipliers.beta = cur.beta;
    out.memberships.values = cur.u;
    out.memberships.bounds_enforced = true;

    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index free_count = 0;
        Eigen::Index last_free = 0;
        for (Eigen::Index i = 0; i < g; ++i) {
            if (cur.u(i, j) > 0.0) {
                ++free_count;
                last_free = i;
            }
        }
        for (Eigen::Index i = 0; i < g; ++i) {
            if (cur.u(i, j) <= 0.0) {
                out.memberships.values(i, j) = 0.0;
                out.active_set.set_status(i, j, BoundState::Lower);
                out.active_set.lower_multipliers()(i, j) =
                    std::max(0.0, -(cur.alpha[j] + cur.beta[i] * z[j]));
            }
        }
        if (free_count == 1 && g > 1) {
            out.memberships.values(last_free, j) = 1.0;
            out.active_set.set_status(last_free, j, BoundState::Upper);
            out.active_set.upper_multipliers()(last_free, j) =
                std::max(0.0, cur.alpha[j] + cur.beta[last_free] * z[j] - 2.0 * q.values(last_free, j));
        }
    }
    detail::rebase_gauge(out.multipliers, z);
    return out;
}

/// Largest violation over the KKT families: stationarity, point sums,
/// capacities, bounds, multiplier signs and complementary slackness.
inline double kkt_residual(const MembershipMatrix& u, const KktMultipliers& mult, const ActiveSetState& state,
                           const SquaredDistanceMatrix& q, const Vector& z, const Vector& mu) {
    const auto g = u.values.rows();
    const auto n = u.values.cols();
    if (q.values.rows() != g || q.values.cols() != n || z.size() != n || mu.size() != g ||
        mult.alpha.size() != n || mult.beta.size() != g || state.clusters() != g || state.points() != n) {
        throw Error(ErrorCode::DimensionMismatch, "kkt_residual: inconsistent shapes");
    }
    const Matrix& gamma = state.lower_multipliers();
    const Matrix& delta = state.upper_multipliers();
    double worst = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < g; ++i) {
            const double uij = u.values(i, j);
            const double stat = 2.0 * uij * q.values(i, j) - mult.alpha[j] - mult.beta[i] * z[j] - gamma(i, j) +
                                delta(i, j);
            worst = std::max({worst, std::abs(stat), std::max(0.0, -uij), std::max(0.0, uij - 1.0),
                              std::max(0.0, -gamma(i, j)), std::max(0.0, -delta(i, j)), std::abs(gamma(i, j) * uij),
                              std::abs(delta(i, j) * (uij - 1.0))});
        }
    }
    const Vector col_gap = u.values.colwise().sum().transpose().array() - 1.0;
    const Vector cap_gap = u.values * z - mu;
    return std::max({worst, col_gap.cwiseAbs().maxCoeff(), cap_gap.cwiseAbs().maxCoeff()});
}

}  // namespace capfuzz
