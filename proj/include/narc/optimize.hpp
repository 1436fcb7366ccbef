#pragma once

// Derivative-free optimizers: bounded scalar minimization (Brent's method,
// golden section with parabolic steps) and a box-constrained Nelder-Mead.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "narc/error.hpp"

namespace narc {

struct ScalarMin {
    double x;
    double fx;
    int evaluations;
};

/// Minimizes f on [lo, hi]. The result is a local minimizer located to within
/// about tol, and never worse than the best of f(lo), f(hi) and f(midpoint).
template <class F>
ScalarMin scalar_minimize(F&& f, double lo, double hi, double tol = 1e-4) {
    detail::require(lo < hi, "scalar_minimize needs lo < hi");
    detail::require(tol > 0.0, "scalar_minimize needs a positive tolerance");

    int evals = 0;
    auto eval = [&](double x) {
        const double v = f(x);
        ++evals;
        if (!std::isfinite(v)) throw SearchError("objective is not finite", x);
        return v;
    };

    constexpr double kGolden = 0.3819660112501051;  // (3 - sqrt 5) / 2
    const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
    double a = lo, b = hi;
    double x = a + kGolden * (b - a);
    double w = x, v = x;
    double fx = eval(x);
    double fw = fx, fv = fx;
    double d = 0.0, e = 0.0;

    for (int iter = 0; iter < 500; ++iter) {
        const double m = 0.5 * (a + b);
        const double tol1 = sqrt_eps * std::abs(x) + tol / 3.0;
        const double tol2 = 2.0 * tol1;
        if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;

        bool golden = true;
        if (std::abs(e) > tol1) {
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0)
                p = -p;
            else
                q = -q;
            const double e_prev = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = x < m ? tol1 : -tol1;
                golden = false;
            }
        }
        if (golden) {
            e = (x < m) ? b - x : a - x;
            d = kGolden * e;
        }
        const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0.0 ? tol1 : -tol1);
        const double fu = eval(u);

        if (fu <= fx) {
            if (u < x)
                b = x;
            else
                a = x;
            v = w, fv = fw;
            w = x, fw = fx;
            x = u, fx = fu;
        } else {
            if (u < x)
                a = u;
            else
                b = u;
            if (fu <= fw || w == x) {
                v = w, fv = fw;
                w = u, fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u, fv = fu;
            }
        }
    }

    ScalarMin best{x, fx, 0};
    for (double probe : {lo, hi, 0.5 * (lo + hi)}) {
        const double fp = eval(probe);
        if (fp < best.fx) best = {probe, fp, 0};
    }
    best.evaluations = evals;
    return best;
}

struct NelderMeadResult {
    std::vector<double> x;
    double fx;
    int iterations;
};

/// Nelder-Mead on a box; trial points are projected onto [lower, upper].
/// Every accepted simplex update is non-increasing in the best value, so the
/// result is never worse than the starting point.
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> start, const std::vector<double>& lower,
                             const std::vector<double>& upper, int max_iter = 200, double step = 0.5,
                             double ftol = 1e-8) {
    const std::size_t n = start.size();
    detail::require(n >= 1 && lower.size() == n && upper.size() == n, "nelder_mead dimension mismatch");
    auto project = [&](std::vector<double>& p) {
        for (std::size_t i = 0; i < n; ++i) p[i] = std::clamp(p[i], lower[i], upper[i]);
    };
    project(start);

    std::vector<std::vector<double>> simplex(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = simplex[i + 1];
        p[i] += (p[i] + step <= upper[i]) ? step : -step;
        project(p);
    }
    std::vector<double> fvals(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fvals[i] = f(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return fvals[i] < fvals[j]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
        if (std::abs(fvals[worst] - fvals[best]) <= ftol * (1.0 + std::abs(fvals[best]))) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[order[k]][i] / static_cast<double>(n);

        auto along = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t i = 0; i < n; ++i) p[i] = centroid[i] + coef * (simplex[worst][i] - centroid[i]);
            project(p);
            return p;
        };

        auto reflected = along(-1.0);
        const double fr = f(reflected);
        if (fr < fvals[best]) {
            auto expanded = along(-2.0);
            const double fe = f(expanded);
            if (fe < fr) {
                simplex[worst] = std::move(expanded), fvals[worst] = fe;
            } else {
                simplex[worst] = std::move(reflected), fvals[worst] = fr;
            }
        } else if (fr < fvals[second]) {
            simplex[worst] = std::move(reflected), fvals[worst] = fr;
        } else {
            auto contracted = fr < fvals[worst] ? along(-0.5) : along(0.5);
            const double fc = f(contracted);
            if (fc < std::min(fr, fvals[worst])) {
                simplex[worst] = std::move(contracted), fvals[worst] = fc;
            } else {
                for (std::size_t k = 1; k <= n; ++k) {
                    auto& p = simplex[order[k]];
                    for (std::size_t i = 0; i < n; ++i) p[i] = simplex[best][i] + 0.5 * (p[i] - simplex[best][i]);
                    fvals[order[k]] = f(p);
                }
            }
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fvals.begin(), fvals.end()) - fvals.begin());
    return {simplex[best], fvals[best], iter};
}

}  // namespace narc
