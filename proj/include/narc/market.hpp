#pragma once

// Two-asset market: a bank account paying 1 + r per step and a stock with
// i.i.d. log-returns. Wealth evolves as
//     X_{t+1} = X_t ((1 - a)(1 + r) + a e^{Z_{t+1}}),   a in [0, 1].
// Everything is phrased as maximization of a terminal utility.

#include <cmath>
#include <vector>

#include "narc/empirical.hpp"
#include "narc/error.hpp"
#include "narc/rng.hpp"

namespace narc {

enum class UtilityKind { exponential, power };

struct MarketParams {
    double r = 0.002;
    double eta = 0.01;
    int horizon = 10;
    double x0 = 100.0;
    UtilityKind utility = UtilityKind::exponential;

    void validate() const {
        detail::require(r > -1.0, "interest rate must exceed -1");
        detail::require(eta > 0.0, "risk aversion must be positive");
        detail::require(horizon >= 1, "horizon must be at least one step");
        detail::require(x0 > 0.0, "initial wealth must be positive");
        if (utility == UtilityKind::power) detail::require(eta != 1.0, "power utility needs eta != 1");
    }
};

struct AugmentedState {
    double wealth;
    EmpiricalDistribution dist;
};

struct MixtureComponent {
    double weight;
    double mean;
    double stddev;
};

class MixtureModel {
public:
    explicit MixtureModel(std::vector<MixtureComponent> components) : components_(std::move(components)) {
        detail::require(!components_.empty(), "mixture needs at least one component");
        double total = 0.0;
        for (const auto& c : components_) {
            detail::require(c.weight > 0.0, "mixture weights must be positive");
            detail::require(c.stddev > 0.0, "mixture standard deviations must be positive");
            total += c.weight;
        }
        detail::require(std::abs(total - 1.0) < 1e-9, "mixture weights must sum to one");
    }

    /// 40% N(0.006, 0.016), 60% N(0.016, 0.00625): annual figures scaled to
    /// ten steps per year.
    static MixtureModel reference() {
        return MixtureModel({{0.4, 0.06 / 10.0, std::sqrt(0.4 * 0.4 / 10.0)},
                             {0.6, 0.16 / 10.0, std::sqrt(0.25 * 0.25 / 10.0)}});
    }

    [[nodiscard]] const std::vector<MixtureComponent>& components() const noexcept { return components_; }

    [[nodiscard]] double mean() const noexcept {
        double m = 0.0;
        for (const auto& c : components_) m += c.weight * c.mean;
        return m;
    }

    [[nodiscard]] double variance() const noexcept {
        double m2 = 0.0;
        for (const auto& c : components_) m2 += c.weight * (c.stddev * c.stddev + c.mean * c.mean);
        return m2 - mean() * mean();
    }

    /// E[e^Z] in closed form.
    [[nodiscard]] double mean_exp() const noexcept {
        double m = 0.0;
        for (const auto& c : components_) m += c.weight * std::exp(c.mean + 0.5 * c.stddev * c.stddev);
        return m;
    }

    /// Picks a component with one uniform, then draws from it (two uniforms).
    double sample(Rng& rng) const noexcept {
        const double u = rng.uniform();
        double acc = 0.0;
        const MixtureComponent* pick = &components_.back();
        for (const auto& c : components_) {
            acc += c.weight;
            if (u < acc) {
                pick = &c;
                break;
            }
        }
        return rng.normal(pick->mean, pick->stddev);
    }

    std::vector<double> sample(Rng& rng, std::size_t n) const {
        std::vector<double> out(n);
        for (auto& z : out) z = sample(rng);
        return out;
    }

private:
    std::vector<MixtureComponent> components_;
};

inline double sample_mixture(const MixtureModel& model, Rng& rng) { return model.sample(rng); }

inline double wealth_step(double x, double a, double z, double r) {
    detail::require(a >= 0.0 && a <= 1.0, "action must lie in [0, 1]");
    return x * ((1.0 - a) * (1.0 + r) + a * std::exp(z));
}

inline AugmentedState transition(int /*t*/, const AugmentedState& y, double a, double z, const MarketParams& p) {
    return {wealth_step(y.wealth, a, z, p.r), y.dist.updated(z)};
}

/// Exponential: (1 - e^{-eta x}) / eta. Power: (x^{1-eta} - 1) / (1 - eta).
inline double utility(double x, double eta, UtilityKind kind = UtilityKind::exponential) {
    detail::require(eta > 0.0, "risk aversion must be positive");
    if (kind == UtilityKind::power) return (std::pow(x, 1.0 - eta) - 1.0) / (1.0 - eta);
    return -std::expm1(-eta * x) / eta;
}

inline double utility(double x, const MarketParams& p) { return utility(x, p.eta, p.utility); }

}  // namespace narc
