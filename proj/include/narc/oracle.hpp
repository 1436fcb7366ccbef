#pragma once

// Independent reference solvers used by the self-test and the test suites:
// a dense two-phase simplex, an exact integer assignment solver, and the
// discretized worst-case transport LP over a W1 ball.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "narc/error.hpp"

namespace narc::oracle {

struct LpResult {
    bool feasible = false;
    bool bounded = true;
    long double value = 0.0L;
    std::vector<long double> x;
};

/// min c'x  s.t.  A x = b, x >= 0  (dense tableau, Bland's rule, long double).
/// Rows with negative b are negated first. Redundant rows are tolerated.
inline LpResult simplex_minimize(std::vector<std::vector<long double>> a, std::vector<long double> b,
                                 std::vector<long double> c) {
    const std::size_t m = a.size();
    const std::size_t n = c.size();
    for (std::size_t i = 0; i < m; ++i) {
        detail::require(a[i].size() == n, "LP row width mismatch");
        if (b[i] < 0) {
            b[i] = -b[i];
            for (auto& v : a[i]) v = -v;
        }
    }
    const long double eps = 1e-15L;
    // Columns: n structural, m artificial, then rhs.
    const std::size_t cols = n + m + 1;
    std::vector<std::vector<long double>> t(m + 1, std::vector<long double>(cols, 0.0L));
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(a[i].begin(), a[i].end(), t[i].begin());
        t[i][n + i] = 1.0L;
        t[i][cols - 1] = b[i];
        basis[i] = n + i;
    }

    auto pivot = [&](std::size_t r, std::size_t k) {
        const long double p = t[r][k];
        for (auto& v : t[r]) v /= p;
        for (std::size_t i = 0; i <= m; ++i) {
            if (i == r || t[i][k] == 0.0L) continue;
            const long double f = t[i][k];
            for (std::size_t j = 0; j < cols; ++j) t[i][j] -= f * t[r][j];
        }
        basis[r] = k;
    };

    // Objective row holds reduced costs for the current phase.
    auto run = [&](const std::vector<long double>& cost, std::size_t allowed) -> bool {
        auto& obj = t[m];
        std::fill(obj.begin(), obj.end(), 0.0L);
        for (std::size_t j = 0; j < cost.size(); ++j) obj[j] = cost[j];
        for (std::size_t i = 0; i < m; ++i) {
            const long double cb = basis[i] < cost.size() ? cost[basis[i]] : 0.0L;
            if (cb == 0.0L) continue;
            for (std::size_t j = 0; j < cols; ++j) obj[j] -= cb * t[i][j];
        }
        for (;;) {
            std::size_t enter = allowed;
            for (std::size_t j = 0; j < allowed; ++j)
                if (obj[j] < -eps) {
                    enter = j;
                    break;
                }
            if (enter == allowed) return true;
            std::size_t leave = m;
            long double best = std::numeric_limits<long double>::infinity();
            for (std::size_t i = 0; i < m; ++i) {
                if (t[i][enter] <= eps) continue;
                const long double ratio = t[i][cols - 1] / t[i][enter];
                if (ratio < best - eps || (std::abs(ratio - best) <= eps && leave < m && basis[i] < basis[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave == m) return false;
            pivot(leave, enter);
        }
    };

    LpResult res;
    std::vector<long double> phase1(n + m, 0.0L);
    for (std::size_t i = 0; i < m; ++i) phase1[n + i] = 1.0L;
    run(phase1, n + m);
    if (-t[m][cols - 1] > 1e-12L) return res;
    res.feasible = true;
    // Drive zero-level artificials out of the basis where possible.
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] < n) continue;
        for (std::size_t j = 0; j < n; ++j)
            if (std::abs(t[i][j]) > 1e-12L) {
                pivot(i, j);
                break;
            }
    }
    // Rows still holding an artificial are redundant; zero them so they stay inert.
    for (std::size_t i = 0; i < m; ++i)
        if (basis[i] >= n)
            for (std::size_t j = 0; j < n; ++j) t[i][j] = 0.0L;
    if (!run(c, n)) {
        res.bounded = false;
        return res;
    }
    res.x.assign(n, 0.0L);
    for (std::size_t i = 0; i < m; ++i)
        if (basis[i] < n) res.x[basis[i]] = t[i][cols - 1];
    res.value = 0.0L;
    for (std::size_t j = 0; j < n; ++j) res.value += c[j] * res.x[j];
    return res;
}

/// Minimum-cost perfect matching on a square integer cost matrix
/// (Hungarian method with potentials). Exact.
inline std::int64_t assignment_min_cost(const std::vector<std::vector<std::int64_t>>& cost) {
    const std::size_t n = cost.size();
    if (n == 0) return 0;
    constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<std::int64_t> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            std::int64_t delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const std::int64_t cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    std::int64_t total = 0;
    for (std::size_t j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
    return total;
}

/// Exact W1 between uniform measures on integer atoms, as a fraction
/// numerator / denominator. Each atom is replicated lcm(n, m) / n times and
/// the resulting assignment problem solved exactly.
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;
    [[nodiscard]] double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline Fraction exact_w1_integer(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
    detail::require(!a.empty() && !b.empty(), "exact W1 needs nonempty atom sets");
    const auto n = static_cast<std::int64_t>(a.size());
    const auto m = static_cast<std::int64_t>(b.size());
    const std::int64_t l = std::lcm(n, m);
    std::vector<std::int64_t> ra, rb;
    for (auto x : a)
        for (std::int64_t k = 0; k < l / n; ++k) ra.push_back(x);
    for (auto x : b)
        for (std::int64_t k = 0; k < l / m; ++k) rb.push_back(x);
    std::vector<std::vector<std::int64_t>> cost(static_cast<std::size_t>(l), std::vector<std::int64_t>(static_cast<std::size_t>(l)));
    for (std::size_t i = 0; i < ra.size(); ++i)
        for (std::size_t j = 0; j < rb.size(); ++j) cost[i][j] = ra[i] > rb[j] ? ra[i] - rb[j] : rb[j] - ra[i];
    const std::int64_t total = assignment_min_cost(cost);
    const std::int64_t g = std::gcd(total, l);
    return {total / (g == 0 ? 1 : g), l / (g == 0 ? 1 : g)};
}

/// W1 between weighted atom sets by the transport LP.
inline double transport_lp_w1(std::span<const double> a, std::span<const double> wa, std::span<const double> b,
                              std::span<const double> wb) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<long double>> rows;
    std::vector<long double> rhs;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<long double> r(n * m, 0.0L);
        for (std::size_t j = 0; j < m; ++j) r[i * m + j] = 1.0L;
        rows.push_back(std::move(r));
        rhs.push_back(wa[i]);
    }
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<long double> r(n * m, 0.0L);
        for (std::size_t i = 0; i < n; ++i) r[i * m + j] = 1.0L;
        rows.push_back(std::move(r));
        rhs.push_back(wb[j]);
    }
    std::vector<long double> c(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) c[i * m + j] = std::abs(static_cast<long double>(a[i]) - b[j]);
    const auto res = simplex_minimize(rows, rhs, c);
    detail::require(res.feasible && res.bounded, "transport LP failed");
    return static_cast<double>(res.value);
}

/// Worst case of sum_k pi_jk g(x_k) over couplings moving atom j (weight p_j)
/// to grid nodes x_k with total transport cost at most radius. Exact for the
/// piecewise-linear interpolant of g on the nodes when the atoms are nodes.
inline double worst_case_transport_lp(std::span<const double> nodes, std::span<const double> g,
                                      std::span<const double> atoms, std::span<const double> weights, double radius) {
    const std::size_t k = nodes.size(), n = atoms.size();
    const std::size_t vars = n * k + 1;  // last one is the budget slack
    std::vector<std::vector<long double>> rows;
    std::vector<long double> rhs;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<long double> r(vars, 0.0L);
        for (std::size_t q = 0; q < k; ++q) r[j * k + q] = 1.0L;
        rows.push_back(std::move(r));
        rhs.push_back(weights[j]);
    }
    std::vector<long double> budget(vars, 0.0L);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t q = 0; q < k; ++q)
            budget[j * k + q] = std::abs(static_cast<long double>(atoms[j]) - nodes[q]);
    budget[vars - 1] = 1.0L;
    rows.push_back(std::move(budget));
    rhs.push_back(radius);
    std::vector<long double> c(vars, 0.0L);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t q = 0; q < k; ++q) c[j * k + q] = g[q];
    const auto res = simplex_minimize(rows, rhs, c);
    detail::require(res.feasible && res.bounded, "worst-case LP failed");
    return static_cast<double>(res.value);
}

/// Piecewise-linear function through (xs, ys), constant outside.
struct PiecewiseLinear {
    std::vector<double> xs;
    std::vector<double> ys;

    double operator()(double z) const {
        if (z <= xs.front()) return ys.front();
        if (z >= xs.back()) return ys.back();
        const auto it = std::upper_bound(xs.begin(), xs.end(), z);
        const auto i = static_cast<std::size_t>(it - xs.begin());
        const double w = (z - xs[i - 1]) / (xs[i] - xs[i - 1]);
        return ys[i - 1] + w * (ys[i] - ys[i - 1]);
    }
};

}  // namespace narc::oracle
