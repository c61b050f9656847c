#pragma once

#include "lfm/common.hpp"
#include "lfm/lagrangian.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace lfm {

/// Square matrix of pairwise endpoint costs; entry (i, j) pairs source i with target j.
struct CostMatrix {
    RowMatrix entries;

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(entries.rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
};

/// Source i is paired with target assignment[i].
struct CouplingPlan {
    std::vector<std::size_t> assignment;
    double total_cost = 0.0;
    double mean_cost = 0.0;
};

enum class CostKind {
    Action,         // least-action cost of the Lagrangian
    KineticEnergy,  // kinetic energy of the harmonic geodesic (harmonic specs only)
};

namespace detail {

inline void check_batches(const PointBatch& source, const PointBatch& target) {
    require(source.size() == target.size(), "coupling: batch sizes differ (" + std::to_string(source.size()) + " vs " +
                                                std::to_string(target.size()) + ")");
    require(source.dim() == target.dim(), "coupling: dimension mismatch");
    require(source.size() >= 1, "coupling: empty batch");
}

// alpha |x0|^2 + beta |x1|^2 + gamma <x0, x1> for every pair.
inline RowMatrix gram_form(const RowMatrix& x0, const RowMatrix& x1, double alpha, double beta, double gamma) {
    const Vector sq0 = x0.rowwise().squaredNorm();
    const Vector sq1 = x1.rowwise().squaredNorm();
    RowMatrix m = gamma * (x0 * x1.transpose());
    m.colwise() += alpha * sq0;
    m.rowwise() += beta * sq1.transpose();
    return m;
}

}  // namespace detail

/// Pairwise cost matrix between two equal-size batches.
inline CostMatrix cost_matrix(const LagrangianSpec& spec, const PointBatch& source, const PointBatch& target,
                              CostKind kind = CostKind::Action) {
    detail::check_batches(source, target);
    const RowMatrix& x0 = source.points();
    const RowMatrix& x1 = target.points();

    if (kind == CostKind::KineticEnergy) {
        require(spec.is_harmonic(), "cost_matrix: kinetic-energy mode needs a harmonic spec");
        const double w = spec.omega();
        const double s = std::sin(w);
        const double c = std::cos(w);
        const double sin2 = std::sin(2.0 * w) / (4.0 * w);
        const double i_ss = 0.5 - sin2;
        const double i_cc = 0.5 + sin2;
        const double i_sc = s * s / (2.0 * w);
        // Expand |B|^2 and <x0, B> with B = (x1 - c x0) / s.
        const double h = 0.5 * w * w;
        const double alpha = h * (i_ss + c * c * i_cc / (s * s) + 2.0 * c * i_sc / s);
        const double beta = h * i_cc / (s * s);
        const double gamma = h * (-2.0 * c * i_cc / (s * s) - 2.0 * i_sc / s);
        return {detail::gram_form(x0, x1, alpha, beta, gamma)};
    }

    if (spec.is_free()) return {detail::gram_form(x0, x1, 0.5, 0.5, -1.0)};
    if (spec.is_harmonic()) {
        const double w = spec.omega();
        if (w < kAffineOmega) return {detail::gram_form(x0, x1, 0.5, 0.5, -1.0)};
        const double pre = w / (2.0 * std::sin(w));
        const double cw = std::cos(w);
        return {detail::gram_form(x0, x1, pre * cw, pre * cw, -2.0 * pre)};
    }

    // Anisotropic: sum of per-mode harmonic costs in the eigenframe.
    const auto& sp = spec.spectral();
    require(sp.dim() == source.dim(), "cost_matrix: potential dimension mismatch");
    const RowMatrix y0 = x0 * sp.frame();
    const RowMatrix y1 = x1 * sp.frame();
    const Eigen::Index d = y0.cols();
    Vector diag_coef(d);
    Vector cross_coef(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double w = sp.frequencies()[k];
        if (w < kAffineOmega) {
            diag_coef[k] = 0.5;
            cross_coef[k] = -1.0;
        } else {
            diag_coef[k] = w * std::cos(w) / (2.0 * std::sin(w));
            cross_coef[k] = -w / std::sin(w);
        }
    }
    const Vector q0 = y0.array().square().matrix() * diag_coef;
    const Vector q1 = y1.array().square().matrix() * diag_coef;
    RowMatrix m = (y0 * cross_coef.asDiagonal()) * y1.transpose();
    m.colwise() += q0;
    m.rowwise() += q1.transpose();
    return {m};
}

/// Minimum-cost perfect matching by the Hungarian method, O(n^3).
///
/// Dual prices start from row reduction, and rows are first
/// matched greedily along zero reduced-cost edges. Every still-free row is
/// then inserted by a Dijkstra-style shortest augmenting path search over
/// reduced costs. Rows and columns are scanned in index order, so ties always
/// resolve the same way.
inline CouplingPlan solve_assignment(const CostMatrix& m) {
    const auto& cost = m.entries;
    const auto n = static_cast<std::size_t>(cost.rows());
    require(cost.rows() == cost.cols(), "solve_assignment: cost matrix must be square");
    require(n >= 1, "solve_assignment: empty cost matrix");
    require(cost.allFinite(), "solve_assignment: non-finite cost entry");

    constexpr double inf = std::numeric_limits<double>::infinity();
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    const double* c = cost.data();

    // Reduced cost c(i, j) - u[i] - v[j] stays >= 0; matched edges have it == 0.
    std::vector<double> u(n), v(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = c + i * n;
        u[i] = *std::min_element(row, row + n);
    }

    std::vector<std::size_t> row_of(n, none), col_of(n, none);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = c + i * n;
        for (std::size_t j = 0; j < n; ++j)
            if (col_of[j] == none && row[j] - u[i] - v[j] == 0.0) {
                col_of[j] = i;
                row_of[i] = j;
                break;
            }
    }

    std::vector<double> dist(n), settled_dist(n), penalty(n);
    std::vector<std::size_t> via(n);  // column preceding j on the shortest path (none: the free row)
    std::vector<std::size_t> settled;
    settled.reserve(n);
    for (std::size_t free_row = 0; free_row < n; ++free_row) {
        if (row_of[free_row] != none) continue;
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(penalty.begin(), penalty.end(), 0.0);
        settled.clear();
        std::size_t i0 = free_row;
        std::size_t prev_col = none;
        double reached = 0.0;  // distance of the column whose row is being scanned
        std::size_t end_col = none;
        while (true) {
            const double* row = c + i0 * n;
            const double base = reached - u[i0];
            // Settled columns carry an infinite penalty and never relax.
            for (std::size_t j = 0; j < n; ++j) {
                const double dj = base + row[j] - v[j] + penalty[j];
                const bool closer = dj < dist[j];
                dist[j] = closer ? dj : dist[j];
                via[j] = closer ? prev_col : via[j];
            }
            std::size_t best_j = 0;
            double best = dist[0];
            for (std::size_t j = 1; j < n; ++j)
                if (dist[j] < best) {
                    best = dist[j];
                    best_j = j;
                }
            reached = best;
            settled_dist[best_j] = best;
            dist[best_j] = inf;
            penalty[best_j] = inf;
            settled.push_back(best_j);
            if (col_of[best_j] == none) {
                end_col = best_j;
                break;
            }
            prev_col = best_j;
            i0 = col_of[best_j];
        }
        // Price update keeps reduced costs non-negative and the new path tight.
        u[free_row] += reached;
        for (std::size_t j : settled) {
            if (j == end_col) continue;
            const double delta = reached - settled_dist[j];
            v[j] -= delta;
            u[col_of[j]] += delta;
        }
        // Flip the alternating path.
        std::size_t j = end_col;
        while (true) {
            const std::size_t pj = via[j];
            const std::size_t i = pj == none ? free_row : col_of[pj];
            col_of[j] = i;
            row_of[i] = j;
            if (pj == none) break;
            j = pj;
        }
    }

    CouplingPlan plan;
    plan.assignment = std::move(row_of);
    for (std::size_t i = 0; i < n; ++i) plan.total_cost += m(i, plan.assignment[i]);
    plan.mean_cost = plan.total_cost / static_cast<double>(n);
    return plan;
}

/// Mini-batch optimal coupling under the Lagrangian's action cost.
inline CouplingPlan couple(const LagrangianSpec& spec, const PointBatch& source, const PointBatch& target) {
    detail::check_batches(source, target);
    if (source.size() == 1) {
        const auto m = cost_matrix(spec, source, target);
        return {{0}, m(0, 0), m(0, 0)};
    }
    return solve_assignment(cost_matrix(spec, source, target));
}

inline bool is_permutation(const std::vector<std::size_t>& sigma) {
    std::vector<char> seen(sigma.size(), 0);
    for (auto j : sigma) {
        if (j >= sigma.size() || seen[j]) return false;
        seen[j] = 1;
    }
    return true;
}

}  // namespace lfm
