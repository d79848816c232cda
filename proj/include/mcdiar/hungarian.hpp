#pragma once

// Minimum-cost linear assignment (Kuhn-Munkres with row potentials).
//
// Rectangular problems are padded to square with zero-cost dummy rows or
// columns. Among optimal assignments the lexicographically smallest
// row->column vector (over the padded problem) is returned.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mcdiar/matrix.hpp"

namespace mcdiar {

struct AssignmentSolution {
    /// column assigned to each row, -1 for rows left unassigned
    std::vector<int> row_to_col;
    double cost = 0.0;
};

namespace detail {

struct SquareResult {
    std::vector<std::size_t> assign;  // column position for each listed row
    std::vector<double> row_potential;
    std::vector<double> col_potential;
};

// O(n^3) shortest augmenting path solver on the sub-problem restricted to
// `rows` x `cols` (equal sizes). Potentials satisfy u[i] + v[j] <= cost(i, j)
// with equality on every edge of every optimal assignment.
inline SquareResult solve_square_with_duals(const Matrix& cost, const std::vector<std::size_t>& rows,
                                            const std::vector<std::size_t>& cols) {
    const std::size_t n = rows.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    SquareResult out;
    out.assign.resize(n);
    for (std::size_t j = 1; j <= n; ++j) out.assign[p[j] - 1] = j - 1;
    out.row_potential.assign(u.begin() + 1, u.end());
    out.col_potential.assign(v.begin() + 1, v.end());
    return out;
}

inline std::vector<std::size_t> solve_square(const Matrix& cost, const std::vector<std::size_t>& rows,
                                             const std::vector<std::size_t>& cols) {
    return solve_square_with_duals(cost, rows, cols).assign;
}

inline double assignment_cost(const Matrix& cost, const std::vector<std::size_t>& rows,
                              const std::vector<std::size_t>& cols, const std::vector<std::size_t>& assign) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) s += cost(rows[i], cols[assign[i]]);
    return s;
}

}  // namespace detail

/// Optimal injective assignment of min(n, m) rows to columns.
inline AssignmentSolution hungarian(const Matrix& cost) {
    for (double c : cost.data()) {
        if (!std::isfinite(c)) throw std::invalid_argument("assignment cost matrix has non-finite entries");
    }
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    AssignmentSolution out;
    out.row_to_col.assign(n, -1);
    if (n == 0 || m == 0) return out;

    const std::size_t size = std::max(n, m);
    Matrix padded(size, size, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) padded(r, c) = cost(r, c);

    std::vector<std::size_t> all(size);
    std::iota(all.begin(), all.end(), 0);
    const auto full = detail::solve_square_with_duals(padded, all, all);
    const double best = detail::assignment_cost(padded, all, all, full.assign);
    double scale = 0.0;
    for (double c : padded.data()) scale = std::max(scale, std::abs(c));
    const double tol = 1e-9 * (1.0 + scale * static_cast<double>(size));

    // Fix rows one at a time to the smallest column that still admits an
    // optimal completion.
    std::vector<std::size_t> free_cols = all;
    double prefix = 0.0;
    std::vector<std::size_t> chosen(size);
    for (std::size_t r = 0; r < size; ++r) {
        std::vector<std::size_t> rest_rows(all.begin() + static_cast<std::ptrdiff_t>(r) + 1, all.end());
        bool fixed = false;
        for (std::size_t idx = 0; idx < free_cols.size(); ++idx) {
            const std::size_t c = free_cols[idx];
            const bool last_option = idx + 1 == free_cols.size();
            // Optimal assignments use only edges that are tight under the optimal duals.
            const double reduced = padded(r, c) - full.row_potential[r] - full.col_potential[c];
            if (reduced > tol && !last_option) continue;
            std::vector<std::size_t> rest_cols = free_cols;
            rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(idx));
            double total = prefix + padded(r, c);
            if (!rest_rows.empty()) {
                total += detail::assignment_cost(padded, rest_rows, rest_cols,
                                                 detail::solve_square(padded, rest_rows, rest_cols));
            }
            if (total <= best + tol || last_option) {
                chosen[r] = c;
                prefix += padded(r, c);
                free_cols = std::move(rest_cols);
                fixed = true;
                break;
            }
        }
        if (!fixed) throw std::logic_error("assignment refinement failed");
    }
    for (std::size_t r = 0; r < n; ++r) {
        if (chosen[r] < m) {
            out.row_to_col[r] = static_cast<int>(chosen[r]);
            out.cost += cost(r, chosen[r]);
        }
    }
    return out;
}

}  // namespace mcdiar
