#pragma once

// Wasserstein-ball radius calibration.
//
// The ball around the empirical distribution F_t has radius
//     Q^H_t(1 - alpha) / sqrt(n),   n = t0 + t,
// where Q^H_t is the quantile function of the Brownian-bridge functional
//     H_t = sum_{i=1}^{n-1} |B(i/n)| (z_(i+1) - z_(i)),
// estimated by Monte Carlo over simulated bridge paths.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "narc/empirical.hpp"
#include "narc/error.hpp"
#include "narc/rng.hpp"

namespace narc {

struct AmbiguityRadius {
    double alpha = 0.1;
    double quantile_value = 0.0;  // Q^H_t(1 - alpha)
    double radius = 0.0;          // quantile_value / sqrt(t0_plus_t)
    int n_bridge_sims = 0;
    std::size_t t0_plus_t = 1;

    static AmbiguityRadius from_quantile(double alpha, double q, int sims, std::size_t n) {
        detail::require(n >= 1, "sample count must be positive");
        detail::require(q >= 0.0, "bridge quantile must be nonnegative");
        return {alpha, q, q / std::sqrt(static_cast<double>(n)), sims, n};
    }

    friend bool operator==(const AmbiguityRadius&, const AmbiguityRadius&) = default;
};

/// sum_i |bridge_values[i]| * (z_(i+1) - z_(i)) over the sorted samples.
inline double bridge_functional(const EmpiricalDistribution& f, std::span<const double> bridge_values) {
    detail::require(bridge_values.size() + 1 == f.count(),
                    "bridge path must have exactly count - 1 points");
    const auto z = f.samples();
    double h = 0.0;
    for (std::size_t i = 0; i < bridge_values.size(); ++i)
        h += std::abs(bridge_values[i]) * (z[i + 1] - z[i]);
    return h;
}

/// B(i / (n_points + 1)) for i = 1..n_points, with B(s) = W(s) - s W(1).
inline std::vector<double> simulate_bridge(std::size_t n_points, Rng& rng) {
    detail::require(n_points >= 1, "bridge needs at least one interior point");
    const std::size_t steps = n_points + 1;
    const double sd = std::sqrt(1.0 / static_cast<double>(steps));
    std::vector<double> w(n_points);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_points; ++i) {
        acc += sd * rng.normal();
        w[i] = acc;
    }
    const double w1 = acc + sd * rng.normal();
    for (std::size_t i = 0; i < n_points; ++i)
        w[i] -= static_cast<double>(i + 1) / static_cast<double>(steps) * w1;
    return w;
}

/// A batch of simulated bridge paths sharing one grid, stored row-major.
/// Reusing one batch across many distributions of the same count gives
/// common random numbers.
class BridgeBatch {
public:
    BridgeBatch(std::size_t n_points, int n_sims, Rng& rng) : n_points_(n_points), n_sims_(n_sims) {
        detail::require(n_sims >= 1, "need at least one bridge simulation");
        values_.reserve(n_points * static_cast<std::size_t>(n_sims));
        for (int s = 0; s < n_sims; ++s) {
            const auto path = simulate_bridge(n_points, rng);
            values_.insert(values_.end(), path.begin(), path.end());
        }
    }

    [[nodiscard]] std::size_t n_points() const noexcept { return n_points_; }
    [[nodiscard]] int n_sims() const noexcept { return n_sims_; }
    [[nodiscard]] std::span<const double> path(int s) const {
        return std::span<const double>(values_).subspan(static_cast<std::size_t>(s) * n_points_, n_points_);
    }

    /// H-values of f under every path of the batch.
    [[nodiscard]] std::vector<double> functionals(const EmpiricalDistribution& f) const {
        std::vector<double> h(static_cast<std::size_t>(n_sims_));
        for (int s = 0; s < n_sims_; ++s) h[static_cast<std::size_t>(s)] = bridge_functional(f, path(s));
        return h;
    }

private:
    std::size_t n_points_;
    int n_sims_;
    std::vector<double> values_;
};

/// Radius from a pre-simulated batch whose grid matches f.count() - 1 points.
inline AmbiguityRadius radius_from_batch(const EmpiricalDistribution& f, double alpha, const BridgeBatch& batch) {
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    detail::require(f.count() >= 2, "radius needs at least two samples");
    const EmpiricalDistribution h(batch.functionals(f));
    return AmbiguityRadius::from_quantile(alpha, h.quantile(1.0 - alpha), batch.n_sims(), f.count());
}

inline AmbiguityRadius radius(const EmpiricalDistribution& f, double alpha, int n_bridge_sims, Rng& rng) {
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    detail::require(f.count() >= 2, "radius needs at least two samples");
    const BridgeBatch batch(f.count() - 1, n_bridge_sims, rng);
    return radius_from_batch(f, alpha, batch);
}

}  // namespace narc
