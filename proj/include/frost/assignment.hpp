#pragma once

// Minimum-cost bipartite assignment (Hungarian / Kuhn-Munkres with
// potentials, O(n^3)) and the cluster-to-class accuracy mapping built on it.
//
// Among co-optimal permutations the lexicographically smallest row -> column
// mapping is returned: after solving, rows are fixed in order to the lowest
// column that still admits a perfect matching on tight edges.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "frost/error.hpp"

namespace frost {

class CostMatrix {
public:
    CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (rows_ == 0 || cols_ == 0) throw ValidationError("cost matrix must be non-empty");
        if (values_.size() != rows_ * cols_) throw ValidationError("cost matrix data length mismatch");
        for (double v : values_)
            if (!std::isfinite(v)) throw ValidationError("cost matrix entries must be finite");
    }

    static CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw ValidationError("cost matrix must be non-empty");
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != rows.front().size()) throw ValidationError("ragged cost matrix");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return CostMatrix(rows.size(), rows.front().size(), std::move(flat));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool square() const { return rows_ == cols_; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

private:
    std::size_t rows_, cols_;
    std::vector<double> values_;
};

struct Assignment {
    std::vector<std::size_t> row_to_col;
    double cost = 0.0;
};

inline double assignment_cost(const CostMatrix& c, std::span<const std::size_t> perm) {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += c(i, perm[i]);
    return s;
}

inline Assignment solve(const CostMatrix& c) {
    if (!c.square()) throw ValidationError("solve: cost matrix must be square");
    const std::size_t n = c.rows();
    constexpr double inf = std::numeric_limits<double>::infinity();

    // Potentials and matching are 1-based; index 0 is the virtual column.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> col_row(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        col_row[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = col_row[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (col_row[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> row_col(n), col_row0(n);
    for (std::size_t j = 1; j <= n; ++j) row_col[col_row[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) col_row0[row_col[i]] = i;

    // Tight edges of the optimal dual carry every optimal assignment.
    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(c(i, j)));
    const double tol = 1e-9 * scale * static_cast<double>(n);
    auto tight = [&](std::size_t i, std::size_t j) { return std::abs(c(i, j) - u[i + 1] - v[j + 1]) <= tol; };

    std::vector<char> fixed_col(n, 0);

    // Try to give column `want` to row i: search an alternating path of tight edges from
    // the row currently holding `want` to row i's column, through unfixed columns only.
    auto reroute = [&](std::size_t i, std::size_t want) {
        const std::size_t target = row_col[i];
        const std::size_t start = col_row0[want];
        std::vector<std::size_t> reached_from(n, n);
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> frontier{start};
        while (!frontier.empty()) {
            std::vector<std::size_t> next;
            for (auto r : frontier)
                for (std::size_t j = 0; j < n; ++j) {
                    if (seen[j] || fixed_col[j] || j == want || !tight(r, j)) continue;
                    seen[j] = 1;
                    reached_from[j] = r;
                    if (j != target) {
                        next.push_back(col_row0[j]);
                        continue;
                    }
                    for (std::size_t col = target;;) {
                        const std::size_t r2 = reached_from[col];
                        const std::size_t prev = row_col[r2];
                        row_col[r2] = col;
                        col_row0[col] = r2;
                        if (r2 == start) break;
                        col = prev;
                    }
                    row_col[i] = want;
                    col_row0[want] = i;
                    return true;
                }
            frontier = std::move(next);
        }
        return false;
    };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (fixed_col[j] || !tight(i, j)) continue;
            if (j == row_col[i] || reroute(i, j)) break;
        }
        fixed_col[row_col[i]] = 1;
    }
    return {row_col, assignment_cost(c, row_col)};
}

// Pads a rectangular matrix with zero-cost dummy rows/columns; the result maps
// each real row to a column index, which is >= cols() when it landed on a dummy.
inline Assignment solve_rectangular(const CostMatrix& c) {
    if (c.square()) return solve(c);
    const std::size_t n = std::max(c.rows(), c.cols());
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < c.cols(); ++j) v[i * n + j] = c(i, j);
    auto a = solve(CostMatrix(n, n, std::move(v)));
    a.row_to_col.resize(c.rows());
    return a;
}

struct LabelMapping {
    std::vector<std::size_t> cluster_to_class;
    std::vector<std::size_t> class_to_cluster;
    double accuracy = 0.0;
    std::size_t matched = 0;
};

// Match-maximising bijection between predicted clusters and ground-truth classes.
inline LabelMapping optimal_label_mapping(std::span<const std::size_t> preds, std::span<const std::size_t> gts,
                                          std::size_t k) {
    if (preds.size() != gts.size()) throw ValidationError("optimal_label_mapping: length mismatch");
    if (preds.empty()) throw ValidationError("optimal_label_mapping: empty input");
    if (k == 0) throw ValidationError("optimal_label_mapping: k must be positive");
    std::vector<double> counts(k * k, 0.0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= k || gts[i] >= k) throw ValidationError("optimal_label_mapping: index out of range");
        counts[preds[i] * k + gts[i]] += 1.0;
    }
    std::vector<double> cost(k * k);
    for (std::size_t i = 0; i < k * k; ++i) cost[i] = -counts[i];
    auto a = solve(CostMatrix(k, k, std::move(cost)));
    LabelMapping m;
    m.cluster_to_class = a.row_to_col;
    m.class_to_cluster.assign(k, 0);
    for (std::size_t r = 0; r < k; ++r) {
        m.class_to_cluster[a.row_to_col[r]] = r;
        m.matched += static_cast<std::size_t>(counts[r * k + a.row_to_col[r]]);
    }
    m.accuracy = static_cast<double>(m.matched) / static_cast<double>(preds.size());
    return m;
}

inline LabelMapping optimal_label_mapping(std::span<const std::size_t> preds, std::span<const std::size_t> gts) {
    std::size_t k = 0;
    for (auto p : preds) k = std::max(k, p + 1);
    for (auto g : gts) k = std::max(k, g + 1);
    return optimal_label_mapping(preds, gts, k);
}

}  // namespace frost
