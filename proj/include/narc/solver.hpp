#pragma once

// Backward adaptive-robust Bellman recursion.
//
// For a design state y at time t and an action a, the worst case over the
// Wasserstein-1 ball of radius eps around the empirical law is computed
// through its Lagrangian dual
//
//     D(gamma) = sum_j p_j inf_z { g(z) + gamma |z - z_j| } - gamma eps,
//     g(z)     = V_{t+1}(G(t, y, a, z)),
//
// which is concave in gamma, so a bounded scalar search is global. The value
// V_t(y) = max_a max_gamma D(gamma); the maximizing action is the policy.
// Values and actions at the design states are then regressed onto
// (wealth, raw moments) with Gaussian-process surrogates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "narc/ambiguity.hpp"
#include "narc/empirical.hpp"
#include "narc/error.hpp"
#include "narc/gp.hpp"
#include "narc/log.hpp"
#include "narc/market.hpp"
#include "narc/optimize.hpp"
#include "narc/parallel.hpp"
#include "narc/rng.hpp"

namespace narc {

enum class Method { ar, tr, sr };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::ar: return "AR";
        case Method::tr: return "TR";
        case Method::sr: return "SR";
    }
    return "?";
}

struct Bracket {
    double lo;
    double hi;
};

struct SolverConfig {
    int n_design_points = 1000;
    int d = 4;
    double alpha = 0.1;
    int n_bridge_sims = 1000;
    double gamma_cap_factor = 10.0;
    double z_bracket_spread = 3.0;
    double tol = 1e-4;
    // Uniform z nodes per design state (sample points are added on top).
    int z_grid_points = 40;
    // Nodes used to carry the large true-model sample.
    int true_grid_points = 201;
    std::size_t true_sample_size = 10000;
    bool common_random_numbers = true;
    // Replaces the simulated Q^H at t = 0 only, or at every stage.
    std::optional<double> q0_override;
    std::optional<double> quantile_override;
    // Test hook: every design path uses this action instead of U[0, 1].
    std::optional<double> design_action_override;
    int threads = 0;
    std::uint64_t seed = 0;
    GPConfig gp;

    void validate() const {
        detail::require(n_design_points >= 1, "n_design_points must be positive");
        detail::require(d >= 1, "moment count d must be positive");
        detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
        detail::require(n_bridge_sims >= 1, "n_bridge_sims must be positive");
        detail::require(gamma_cap_factor > 0.0, "gamma cap factor must be positive");
        detail::require(z_bracket_spread > 0.0, "bracket spread must be positive");
        detail::require(tol > 0.0, "tolerance must be positive");
        detail::require(z_grid_points >= 2, "z grid needs at least two points");
        detail::require(true_grid_points >= 2, "true-model grid needs at least two points");
        detail::require(true_sample_size >= 2, "true-model sample needs at least two draws");
        if (q0_override) detail::require(*q0_override >= 0.0, "q0 override must be nonnegative");
        if (quantile_override) detail::require(*quantile_override >= 0.0, "quantile override must be nonnegative");
        if (design_action_override)
            detail::require(*design_action_override >= 0.0 && *design_action_override <= 1.0,
                            "design action override must lie in [0, 1]");
    }
};

/// Market, true noise law, and the historical sample behind F_0.
struct Problem {
    MarketParams market;
    MixtureModel model;
    EmpiricalDistribution history;

    [[nodiscard]] AugmentedState initial_state() const { return {market.x0, history}; }
};

/// Surrogate inputs: (wealth, m^1..m^d), or wealth alone when d == 0.
inline std::vector<double> features(const AugmentedState& y, int d) {
    std::vector<double> f{y.wealth};
    if (d > 0) {
        const auto m = y.dist.moments(d);
        f.insert(f.end(), m.begin(), m.end());
    }
    return f;
}

// ----------------------------------------------------------------------------
// Value functions and stage policies
// ----------------------------------------------------------------------------

/// V_{t+1}: the terminal utility or a fitted value surrogate.
class ValueFunction {
public:
    static ValueFunction terminal(const MarketParams& market) {
        ValueFunction v;
        v.market_ = market;
        return v;
    }

    static ValueFunction surrogate(std::shared_ptr<const GPSurrogate> gp, int feature_moments) {
        detail::require(gp != nullptr, "value surrogate is null");
        ValueFunction v;
        v.gp_ = std::move(gp);
        v.moments_ = feature_moments;
        return v;
    }

    [[nodiscard]] bool is_terminal() const noexcept { return gp_ == nullptr; }
    [[nodiscard]] const GPSurrogate* gp() const noexcept { return gp_.get(); }
    [[nodiscard]] int feature_moments() const noexcept { return moments_; }
    [[nodiscard]] const MarketParams& market() const noexcept { return market_; }

    double operator()(const AugmentedState& y) const {
        if (is_terminal()) return utility(y.wealth, market_);
        return gp_->predict(features(y, moments_));
    }

private:
    MarketParams market_;
    std::shared_ptr<const GPSurrogate> gp_;
    int moments_ = 0;
};

struct DesignDiagnostic {
    std::vector<double> features;
    double value = 0.0;
    double action = 0.0;
    double gamma = 0.0;
    double quantile = 0.0;
    double radius = 0.0;
    bool cap_hit = false;
};

struct StagePolicy {
    int t = 0;
    int feature_moments = 0;
    std::shared_ptr<const GPSurrogate> value;
    std::shared_ptr<const GPSurrogate> policy;
    std::vector<DesignDiagnostic> design;

    /// Surrogate action, clamped to [0, 1].
    [[nodiscard]] double action(const AugmentedState& y) const {
        return std::clamp(policy->predict(features(y, feature_moments)), 0.0, 1.0);
    }
};

// ----------------------------------------------------------------------------
// Inner robust problem
// ----------------------------------------------------------------------------

struct InnerConfig {
    double tol = 1e-4;
    double gamma_cap_factor = 10.0;
    // Uniform probes (plus the atoms) for the Lipschitz estimate behind the cap.
    int lipschitz_probes = 64;
    std::optional<double> gamma_max;
};

struct InnerResult {
    double value = 0.0;
    double gamma = 0.0;
    double gamma_max = 0.0;
    bool cap_hit = false;
};

/// inf_{z in bracket} g(z) + gamma |z - z_j|. Each side of the kink at z_j is
/// scanned on a uniform probe grid and Brent's method is run from every
/// discrete local minimum of the scan.
template <class G>
double moreau_envelope(G&& g, double gamma, double zj, Bracket br, double tol = 1e-4, int probes_per_side = 32) {
    detail::require(gamma >= 0.0, "gamma must be nonnegative");
    detail::require(br.lo < br.hi && std::isfinite(br.lo) && std::isfinite(br.hi), "bracket must be finite and ordered");
    auto penalized = [&](double z) { return g(z) + gamma * std::abs(z - zj); };
    const double center = std::clamp(zj, br.lo, br.hi);
    double best = penalized(center);

    auto side = [&](double lo, double hi) {
        if (hi - lo <= tol) return;
        const int m = std::max(2, probes_per_side);
        std::vector<double> zs(static_cast<std::size_t>(m + 1)), fs(zs.size());
        for (int i = 0; i <= m; ++i) {
            zs[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / m;
            fs[static_cast<std::size_t>(i)] = penalized(zs[static_cast<std::size_t>(i)]);
            best = std::min(best, fs[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i <= m; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const bool left_ok = i == 0 || fs[k] <= fs[k - 1];
            const bool right_ok = i == m || fs[k] <= fs[k + 1];
            if (!(left_ok && right_ok)) continue;
            const double a = zs[i == 0 ? k : k - 1];
            const double b = zs[i == m ? k : k + 1];
            if (b - a > tol) best = std::min(best, scalar_minimize(penalized, a, b, tol).fx);
        }
    };
    side(br.lo, center);
    side(center, br.hi);
    return best;
}

namespace detail {

inline double lipschitz_on_nodes(std::span<const double> nodes, std::span<const double> g) {
    double lip = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const double dz = nodes[i] - nodes[i - 1];
        if (dz > 0.0) lip = std::max(lip, std::abs(g[i] - g[i - 1]) / dz);
    }
    return lip;
}

inline double gamma_cap(double lipschitz, const InnerConfig& cfg) {
    if (cfg.gamma_max) return *cfg.gamma_max;
    // A flat objective still needs a positive search interval.
    return lipschitz > 0.0 ? cfg.gamma_cap_factor * lipschitz : cfg.gamma_cap_factor;
}

/// Maximizes the concave dual on [0, gamma_max].
template <class Dual>
InnerResult maximize_dual(Dual&& dual, double gamma_max, double radius, double tol) {
    const auto res = scalar_minimize([&](double gamma) { return -dual(gamma); }, 0.0, gamma_max, tol);
    InnerResult out;
    out.value = -res.fx;
    out.gamma = res.x;
    out.gamma_max = gamma_max;
    out.cap_hit = radius > 0.0 && res.x >= gamma_max - tol;
    return out;
}

}  // namespace detail

/// Worst-case expectation of g over the W1 ball of the given radius around
/// the weighted atoms, with envelopes found by scalar search.
template <class G>
InnerResult inner_robust_value(G&& g, std::span<const double> atoms, std::span<const double> weights, double radius,
                               Bracket br, const InnerConfig& cfg = {}) {
    detail::require(radius >= 0.0, "radius must be nonnegative");
    detail::require(!atoms.empty() && atoms.size() == weights.size(), "atoms and weights must match");

    std::vector<double> probe_z;
    const int probes = std::max(2, cfg.lipschitz_probes);
    for (int i = 0; i <= probes; ++i) probe_z.push_back(br.lo + (br.hi - br.lo) * i / probes);
    for (double z : atoms) probe_z.push_back(std::clamp(z, br.lo, br.hi));
    std::sort(probe_z.begin(), probe_z.end());
    probe_z.erase(std::unique(probe_z.begin(), probe_z.end()), probe_z.end());
    std::vector<double> probe_g(probe_z.size());
    for (std::size_t i = 0; i < probe_z.size(); ++i) probe_g[i] = g(probe_z[i]);
    const double gamma_max = detail::gamma_cap(detail::lipschitz_on_nodes(probe_z, probe_g), cfg);

    auto dual = [&](double gamma) {
        double acc = 0.0;
        for (std::size_t j = 0; j < atoms.size(); ++j)
            acc += weights[j] * moreau_envelope(g, gamma, atoms[j], br, cfg.tol);
        return acc - gamma * radius;
    };
    return detail::maximize_dual(dual, gamma_max, radius, cfg.tol);
}

/// Same problem when g is known on sorted nodes and interpolated linearly in
/// between. The envelope of a piecewise-linear g is attained at a node or at
/// the atom, so two distance-transform sweeps give it exactly. Atoms must be
/// nodes; atom_nodes[j] indexes them.
inline InnerResult grid_inner_value(std::span<const double> nodes, std::span<const double> g,
                                    std::span<const std::size_t> atom_nodes, std::span<const double> weights,
                                    double radius, const InnerConfig& cfg = {}) {
    detail::require(nodes.size() == g.size() && !nodes.empty(), "node values must match nodes");
    detail::require(atom_nodes.size() == weights.size() && !atom_nodes.empty(), "atoms and weights must match");
    detail::require(radius >= 0.0, "radius must be nonnegative");
    const double gamma_max = detail::gamma_cap(detail::lipschitz_on_nodes(nodes, g), cfg);

    if (radius == 0.0) {
        double mean = 0.0;
        for (std::size_t j = 0; j < atom_nodes.size(); ++j) mean += weights[j] * g[atom_nodes[j]];
        return {mean, gamma_max, gamma_max, false};
    }

    std::vector<double> env(g.size());
    auto dual = [&](double gamma) {
        std::copy(g.begin(), g.end(), env.begin());
        for (std::size_t i = 1; i < env.size(); ++i)
            env[i] = std::min(env[i], env[i - 1] + gamma * (nodes[i] - nodes[i - 1]));
        for (std::size_t i = env.size() - 1; i-- > 0;)
            env[i] = std::min(env[i], env[i + 1] + gamma * (nodes[i + 1] - nodes[i]));
        double acc = 0.0;
        for (std::size_t j = 0; j < atom_nodes.size(); ++j) acc += weights[j] * env[atom_nodes[j]];
        return acc - gamma * radius;
    };
    return detail::maximize_dual(dual, gamma_max, radius, cfg.tol);
}

/// Envelope of z -> V(G(t, y, a, z)).
inline double moreau_envelope(const ValueFunction& v, int t, const AugmentedState& y, double a, double gamma,
                              double zj, Bracket br, const MarketParams& market, double tol = 1e-4) {
    auto g = [&](double z) { return v(transition(t, y, a, z, market)); };
    return moreau_envelope(g, gamma, zj, br, tol);
}

/// [min - spread sd, max + spread sd] of the sample.
inline Bracket z_bracket(const EmpiricalDistribution& f, double spread) {
    const double sd = std::max(f.stddev(), 1e-3);
    return {f.min() - spread * sd, f.max() + spread * sd};
}

/// Worst case of V(G(t, y, a, Z)) over the ball around y's empirical law.
inline InnerResult inner_robust_value(const ValueFunction& v, int t, const AugmentedState& y, double a,
                                      const AmbiguityRadius& radius, const MarketParams& market,
                                      const SolverConfig& cfg) {
    const auto atoms = y.dist.samples();
    const std::vector<double> weights(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
    auto g = [&](double z) { return v(transition(t, y, a, z, market)); };
    InnerConfig inner;
    inner.tol = cfg.tol;
    inner.gamma_cap_factor = cfg.gamma_cap_factor;
    auto res = inner_robust_value(g, atoms, weights, radius.radius, z_bracket(y.dist, cfg.z_bracket_spread), inner);
    if (res.cap_hit) log::warn("gamma search hit its cap " + std::to_string(res.gamma_max) + " at t=" + std::to_string(t));
    return res;
}

// ----------------------------------------------------------------------------
// Per-design-state objective on a z grid
// ----------------------------------------------------------------------------

/// Evaluates a -> (V_{t+1}(G(t, y, a, z_k)))_k on fixed nodes. The moment part
/// of each next state does not depend on the action, so its contribution to
/// the kernel distances is computed once.
class GridObjective {
public:
    GridObjective(const ValueFunction& next, const AugmentedState& y, std::span<const double> nodes,
                  const MarketParams& market)
        : next_(&next), wealth_(y.wealth), bank_(1.0 + market.r) {
        growth_.resize(nodes.size());
        for (std::size_t k = 0; k < nodes.size(); ++k) growth_[k] = std::exp(nodes[k]);
        if (next.is_terminal()) return;

        const GPSurrogate& gp = *next.gp();
        const std::size_t n_train = gp.size();
        const int d = next.feature_moments();
        partial_r2_.assign(nodes.size() * n_train, 0.0);
        if (d > 0) {
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                const auto m = y.dist.updated(nodes[k]).moments(d);
                double* row = partial_r2_.data() + k * n_train;
                for (int j = 0; j < d; ++j) {
                    const auto col = gp.scaled_column(static_cast<std::size_t>(j + 1));
                    const double q = gp.scale_coord(static_cast<std::size_t>(j + 1), m[static_cast<std::size_t>(j)]);
                    for (std::size_t i = 0; i < n_train; ++i) {
                        const double diff = q - col[i];
                        row[i] += diff * diff;
                    }
                }
            }
        }
    }

    [[nodiscard]] double next_wealth(double a, std::size_t k) const noexcept {
        return wealth_ * ((1.0 - a) * bank_ + a * growth_[k]);
    }

    void operator()(double a, std::vector<double>& out) {
        out.resize(growth_.size());
        if (next_->is_terminal()) {
            for (std::size_t k = 0; k < growth_.size(); ++k) out[k] = utility(next_wealth(a, k), next_->market());
            return;
        }
        const GPSurrogate& gp = *next_->gp();
        const std::size_t n_train = gp.size();
        const auto col0 = gp.scaled_column(0);
        r2_.resize(n_train);
        for (std::size_t k = 0; k < growth_.size(); ++k) {
            const double q = gp.scale_coord(0, next_wealth(a, k));
            const double* row = partial_r2_.data() + k * n_train;
            for (std::size_t i = 0; i < n_train; ++i) {
                const double diff = q - col0[i];
                r2_[i] = row[i] + diff * diff;
            }
            out[k] = gp.predict_from_r2(r2_);
        }
    }

private:
    const ValueFunction* next_;
    double wealth_;
    double bank_;
    std::vector<double> growth_;
    std::vector<double> partial_r2_;
    std::vector<double> r2_;
};

/// Nodes, atom positions and weights describing one ambiguity set.
struct AtomGrid {
    std::vector<double> nodes;
    std::vector<std::size_t> atom_nodes;
    std::vector<double> weights;

    /// Uniform nodes over the bracket merged with the (equally weighted) samples.
    static AtomGrid from_samples(std::span<const double> samples, Bracket br, int uniform_points) {
        AtomGrid g;
        for (int i = 0; i < uniform_points; ++i)
            g.nodes.push_back(br.lo + (br.hi - br.lo) * i / (uniform_points - 1));
        g.nodes.insert(g.nodes.end(), samples.begin(), samples.end());
        std::sort(g.nodes.begin(), g.nodes.end());
        g.nodes.erase(std::unique(g.nodes.begin(), g.nodes.end()), g.nodes.end());
        const double w = 1.0 / static_cast<double>(samples.size());
        for (double z : samples) {
            const auto it = std::lower_bound(g.nodes.begin(), g.nodes.end(), z);
            g.atom_nodes.push_back(static_cast<std::size_t>(it - g.nodes.begin()));
            g.weights.push_back(w);
        }
        return g;
    }

    /// A large sample carried by linear-interpolation weights on a uniform
    /// grid over its range: expectations of functions that are linear between
    /// nodes are reproduced exactly.
    static AtomGrid compress(std::span<const double> samples, int points) {
        AtomGrid g;
        const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
        const double lo = *mn, hi = *mx > *mn ? *mx : *mn + 1e-6;
        const double h = (hi - lo) / (points - 1);
        std::vector<double> mass(static_cast<std::size_t>(points), 0.0);
        const double w = 1.0 / static_cast<double>(samples.size());
        for (double z : samples) {
            const double u = (z - lo) / h;
            auto k = static_cast<std::size_t>(std::floor(u));
            k = std::min<std::size_t>(k, static_cast<std::size_t>(points - 2));
            const double frac = std::clamp(u - static_cast<double>(k), 0.0, 1.0);
            mass[k] += w * (1.0 - frac);
            mass[k + 1] += w * frac;
        }
        for (int i = 0; i < points; ++i) {
            g.nodes.push_back(lo + h * i);
            if (mass[static_cast<std::size_t>(i)] > 0.0) {
                g.atom_nodes.push_back(static_cast<std::size_t>(i));
                g.weights.push_back(mass[static_cast<std::size_t>(i)]);
            }
        }
        return g;
    }
};

// ----------------------------------------------------------------------------
// Design points
// ----------------------------------------------------------------------------

/// states[t][i] for t = 0..T and design path i.
using DesignPaths = std::vector<std::vector<AugmentedState>>;

inline DesignPaths generate_design_points(const Problem& problem, const SolverConfig& cfg, Rng rng) {
    cfg.validate();
    const int horizon = problem.market.horizon;
    const auto n = static_cast<std::size_t>(cfg.n_design_points);
    DesignPaths paths(static_cast<std::size_t>(horizon + 1));
    paths[0].assign(n, problem.initial_state());
    for (std::size_t i = 0; i < n; ++i) {
        Rng path_rng = rng.split(i);
        for (int t = 0; t < horizon; ++t) {
            const double a = cfg.design_action_override ? *cfg.design_action_override : path_rng.uniform();
            const double z = problem.model.sample(path_rng);
            const auto& y = paths[static_cast<std::size_t>(t)][i];
            paths[static_cast<std::size_t>(t + 1)].push_back(transition(t, y, a, z, problem.market));
        }
    }
    return paths;
}

// ----------------------------------------------------------------------------
// Bellman step
// ----------------------------------------------------------------------------

/// How the ambiguity set is formed at a design state.
struct AmbiguitySetup {
    Method method = Method::ar;
    int feature_moments = 4;
    // TR / SR: one frozen set for every state and stage.
    std::optional<AtomGrid> frozen_grid;
    AmbiguityRadius frozen_radius;
};


struct StageResult {
    StagePolicy policy;
    int cap_hits = 0;
};

namespace detail {

struct PointResult {
    double value = 0.0;
    double action = 0.0;
    InnerResult inner;
};

/// max over a in [0, 1]: scan {0, .25, .5, .75, 1}, then Brent's method on
/// the neighbourhood of the best scan point. Ties keep the smaller action.
template <class Objective>
PointResult maximize_action(Objective&& objective, double tol) {
    PointResult best{0.0, 0.0, objective(0.0)};
    best.value = best.inner.value;
    for (double a : {0.25, 0.5, 0.75, 1.0}) {
        const auto r = objective(a);
        if (r.value > best.value) best = {r.value, a, r};
    }
    const double lo = std::max(0.0, best.action - 0.25), hi = std::min(1.0, best.action + 0.25);
    const auto res = scalar_minimize([&](double a) { return -objective(a).value; }, lo, hi, tol);
    if (-res.fx > best.value) {
        const auto r = objective(res.x);
        best = {r.value, res.x, r};
    }
    return best;
}

inline bool same_state(const AugmentedState& a, const AugmentedState& b) {
    return a.wealth == b.wealth && a.dist == b.dist;
}

inline Eigen::MatrixXd feature_matrix(const std::vector<DesignDiagnostic>& design) {
    const auto n = static_cast<Eigen::Index>(design.size());
    const auto d = static_cast<Eigen::Index>(design.front().features.size());
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = design[static_cast<std::size_t>(i)].features[static_cast<std::size_t>(j)];
    return x;
}

}  // namespace detail

/// One backward step: robust values and actions at the design states of time
/// t, then value and policy surrogates fitted on their features.
inline StageResult bellman_step(const ValueFunction& next, std::span<const AugmentedState> states, int t,
                                const Problem& problem, const AmbiguitySetup& setup, const SolverConfig& cfg,
                                const Rng& rng) {
    detail::require(!states.empty(), "bellman_step needs at least one design state");
    const std::size_t n = states.size();
    InnerConfig inner_cfg;
    inner_cfg.tol = cfg.tol;
    inner_cfg.gamma_cap_factor = cfg.gamma_cap_factor;

    // Common random numbers: one bridge batch per stage for all AR states.
    std::optional<BridgeBatch> batch;
    const bool adaptive = setup.method == Method::ar;
    const bool t0_pinned = t == 0 && cfg.q0_override.has_value();
    if (adaptive && cfg.common_random_numbers && !cfg.quantile_override && !t0_pinned) {
        const std::size_t count = states.front().dist.count();
        detail::require(count >= 2, "adaptive radius needs at least two samples");
        Rng bridge_rng = rng.split("bridge").split(static_cast<std::uint64_t>(t));
        batch.emplace(count - 1, cfg.n_bridge_sims, bridge_rng);
    }

    auto radius_at = [&](const AugmentedState& y, std::size_t i) {
        if (!adaptive) return setup.frozen_radius;
        const std::size_t count = y.dist.count();
        if (cfg.quantile_override)
            return AmbiguityRadius::from_quantile(cfg.alpha, *cfg.quantile_override, 0, count);
        if (t0_pinned) return AmbiguityRadius::from_quantile(cfg.alpha, *cfg.q0_override, 0, count);
        if (batch) return radius_from_batch(y.dist, cfg.alpha, *batch);
        Rng own = rng.split("bridge").split(static_cast<std::uint64_t>(t)).split(i);
        return radius(y.dist, cfg.alpha, cfg.n_bridge_sims, own);
    };

    // Runs of identical states (every path at t = 0) are solved once.
    std::vector<std::size_t> unique;
    std::vector<std::size_t> rep(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && detail::same_state(states[i], states[rep[i - 1]])) {
            rep[i] = rep[i - 1];
        } else {
            rep[i] = i;
            unique.push_back(i);
        }
    }

    std::vector<DesignDiagnostic> design(n);
    parallel_for(unique.size(), cfg.threads, [&](std::size_t u, int) {
        const std::size_t i = unique[u];
        const AugmentedState& y = states[i];
        const AmbiguityRadius rad = radius_at(y, i);
        const AtomGrid grid = setup.frozen_grid ? *setup.frozen_grid
                                                : AtomGrid::from_samples(y.dist.samples(),
                                                                         z_bracket(y.dist, cfg.z_bracket_spread),
                                                                         cfg.z_grid_points);
        GridObjective objective(next, y, grid.nodes, problem.market);
        std::vector<double> g;
        auto robust = [&](double a) {
            objective(a, g);
            return grid_inner_value(grid.nodes, g, grid.atom_nodes, grid.weights, rad.radius, inner_cfg);
        };
        const auto best = detail::maximize_action(robust, cfg.tol);

        DesignDiagnostic& out = design[i];
        out.features = features(y, setup.feature_moments);
        out.value = best.value;
        out.action = best.action;
        out.gamma = best.inner.gamma;
        out.quantile = rad.quantile_value;
        out.radius = rad.radius;
        out.cap_hit = best.inner.cap_hit;
    });
    for (std::size_t i = 0; i < n; ++i)
        if (rep[i] != i) design[i] = design[rep[i]];

    StageResult result;
    result.policy.t = t;
    result.policy.feature_moments = setup.feature_moments;
    for (const auto& dp : design) result.cap_hits += dp.cap_hit ? 1 : 0;
    if (result.cap_hits > 0)
        log::warn(std::string(method_name(setup.method)) + " t=" + std::to_string(t) + ": gamma cap hit at " +
                  std::to_string(result.cap_hits) + " of " + std::to_string(n) + " design states");

    const Eigen::MatrixXd x = detail::feature_matrix(design);
    Eigen::VectorXd values(static_cast<Eigen::Index>(n)), actions(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        values[static_cast<Eigen::Index>(i)] = design[i].value;
        actions[static_cast<Eigen::Index>(i)] = design[i].action;
    }
    GPConfig value_cfg = cfg.gp, policy_cfg = cfg.gp;
    value_cfg.seed = rng.split("gp").split(static_cast<std::uint64_t>(t)).split("value").stream();
    policy_cfg.seed = rng.split("gp").split(static_cast<std::uint64_t>(t)).split("policy").stream();
    result.policy.value = std::make_shared<const GPSurrogate>(GPSurrogate::fit(x, values, value_cfg));
    result.policy.policy = std::make_shared<const GPSurrogate>(GPSurrogate::fit(x, actions, policy_cfg));
    result.policy.design = std::move(design);
    return result;
}

/// Frozen ambiguity sets for the baselines; AR needs none.
inline AmbiguitySetup make_setup(Method method, const Problem& problem, const SolverConfig& cfg, const Rng& rng) {
    AmbiguitySetup setup;
    setup.method = method;
    switch (method) {
        case Method::ar:
            setup.feature_moments = cfg.d;
            break;
        case Method::tr: {
            setup.feature_moments = 0;
            Rng sample_rng = rng.split("true-sample");
            const auto sample = problem.model.sample(sample_rng, cfg.true_sample_size);
            setup.frozen_grid = AtomGrid::compress(sample, cfg.true_grid_points);
            setup.frozen_radius = AmbiguityRadius::from_quantile(cfg.alpha, 0.0, 0, cfg.true_sample_size);
            break;
        }
        case Method::sr: {
            setup.feature_moments = 0;
            const auto& hist = problem.history;
            setup.frozen_grid = AtomGrid::from_samples(hist.samples(), z_bracket(hist, cfg.z_bracket_spread),
                                                       cfg.z_grid_points);
            if (cfg.quantile_override || cfg.q0_override) {
                const double q = cfg.quantile_override ? *cfg.quantile_override : *cfg.q0_override;
                setup.frozen_radius = AmbiguityRadius::from_quantile(cfg.alpha, q, 0, hist.count());
            } else {
                detail::require(hist.count() >= 2, "static radius needs at least two historical samples");
                if (cfg.common_random_numbers) {
                    // Same bridge batch AR uses at t = 0, so both see the same Q^H_0.
                    Rng bridge_rng = rng.split("bridge").split(std::uint64_t{0});
                    setup.frozen_radius = radius_from_batch(hist, cfg.alpha, BridgeBatch(hist.count() - 1, cfg.n_bridge_sims, bridge_rng));
                } else {
                    Rng own = rng.split("bridge").split(std::uint64_t{0}).split(std::uint64_t{0});
                    setup.frozen_radius = radius(hist, cfg.alpha, cfg.n_bridge_sims, own);
                }
            }
            break;
        }
    }
    return setup;
}

struct SolveResult {
    std::vector<StagePolicy> stages;  // index t = 0..T-1
    AmbiguitySetup setup;
    int cap_hits = 0;
};

/// Full backward recursion for one method. Design paths come from the
/// "design" substream and stage randomness from the others, so methods that
/// share a seed share design noise.
inline SolveResult solve_method(Method method, const Problem& problem, const SolverConfig& cfg, const Rng& rng) {
    cfg.validate();
    problem.market.validate();
    SolveResult out;
    out.setup = make_setup(method, problem, cfg, rng);
    const DesignPaths paths = generate_design_points(problem, cfg, rng.split("design"));

    const int horizon = problem.market.horizon;
    out.stages.resize(static_cast<std::size_t>(horizon));
    ValueFunction next = ValueFunction::terminal(problem.market);
    for (int t = horizon - 1; t >= 0; --t) {
        auto stage = bellman_step(next, paths[static_cast<std::size_t>(t)], t, problem, out.setup, cfg, rng);
        out.cap_hits += stage.cap_hits;
        out.stages[static_cast<std::size_t>(t)] = std::move(stage.policy);
        next = ValueFunction::surrogate(out.stages[static_cast<std::size_t>(t)].value, out.setup.feature_moments);
    }
    return out;
}

/// The adaptive-robust solver.
inline std::vector<StagePolicy> solve(const Problem& problem, const SolverConfig& cfg, const Rng& rng) {
    return solve_method(Method::ar, problem, cfg, rng).stages;
}

}  // namespace narc
