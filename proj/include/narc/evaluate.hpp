#pragma once

// Out-of-sample evaluation of solved policies and the two baselines:
//   TR - knows the true noise law (zero-radius ball around it),
//   SR - one fixed ball around the historical empirical law, no learning.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "narc/empirical.hpp"
#include "narc/error.hpp"
#include "narc/market.hpp"
#include "narc/parallel.hpp"
#include "narc/rng.hpp"
#include "narc/solver.hpp"

namespace narc {

struct SummaryStats {
    double mean = 0.0;
    double variance = 0.0;
    double q20 = 0.0;
    double q90 = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
};

/// Mean, unbiased variance, 20%/90% generalized-inverse quantiles, min, max.
/// Sums run over the sorted values, so the result is permutation invariant.
inline SummaryStats report_stats(std::span<const double> values) {
    detail::require(!values.empty(), "report_stats needs at least one value");
    const EmpiricalDistribution sorted(std::vector<double>(values.begin(), values.end()));
    const auto v = sorted.samples();
    SummaryStats s;
    s.n = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.variance = ss / static_cast<double>(s.n - 1);
    }
    s.q20 = sorted.quantile(0.2);
    s.q90 = sorted.quantile(0.9);
    s.min = v.front();
    s.max = v.back();
    return s;
}

struct EvaluationReport {
    std::string method;
    std::size_t n_paths = 0;
    std::vector<double> terminal_utilities;  // path order
    std::vector<double> terminal_wealth;
    SummaryStats stats;
};

/// Simulates n_paths forward from y0 under action(t, y) with noise from the
/// true model. Path i draws from rng.split(i), so two calls with the same rng
/// see identical noise whatever the policy.
template <class Policy>
    requires std::invocable<Policy&, int, const AugmentedState&>
EvaluationReport forward_evaluate(Policy&& action, const Problem& problem, std::size_t n_paths, const Rng& rng,
                                  int threads = 0, std::string method = "") {
    detail::require(n_paths >= 1, "need at least one evaluation path");
    problem.market.validate();
    EvaluationReport rep;
    rep.method = std::move(method);
    rep.n_paths = n_paths;
    rep.terminal_utilities.resize(n_paths);
    rep.terminal_wealth.resize(n_paths);
    parallel_for(n_paths, threads, [&](std::size_t i, int) {
        Rng path_rng = rng.split(i);
        AugmentedState y = problem.initial_state();
        for (int t = 0; t < problem.market.horizon; ++t) {
            const double a = std::clamp(static_cast<double>(action(t, y)), 0.0, 1.0);
            const double z = problem.model.sample(path_rng);
            y = transition(t, y, a, z, problem.market);
        }
        rep.terminal_wealth[i] = y.wealth;
        rep.terminal_utilities[i] = utility(y.wealth, problem.market);
    });
    rep.stats = report_stats(rep.terminal_utilities);
    return rep;
}

inline EvaluationReport forward_evaluate(const std::vector<StagePolicy>& policies, const Problem& problem,
                                         std::size_t n_paths, const Rng& rng, int threads = 0,
                                         std::string method = "") {
    detail::require(policies.size() == static_cast<std::size_t>(problem.market.horizon),
                    "need one stage policy per time step");
    auto act = [&](int t, const AugmentedState& y) { return policies[static_cast<std::size_t>(t)].action(y); };
    return forward_evaluate(act, problem, n_paths, rng, threads, std::move(method));
}

/// True-model baseline: zero radius around a large sample of the true law.
inline std::vector<StagePolicy> solve_tr(const Problem& problem, const SolverConfig& cfg, const Rng& rng) {
    return solve_method(Method::tr, problem, cfg, rng).stages;
}

/// Static robust baseline: the t = 0 ball (center and radius) at every stage.
inline std::vector<StagePolicy> solve_sr(const Problem& problem, const SolverConfig& cfg, const Rng& rng) {
    return solve_method(Method::sr, problem, cfg, rng).stages;
}

inline void write_summary_header(std::ostream& os) { os << "method,mean,variance,q20,q90,min,max,n_paths,seed\n"; }

inline void write_summary_row(std::ostream& os, const EvaluationReport& r, std::uint64_t seed) {
    const auto old = os.precision(std::numeric_limits<double>::max_digits10);
    const auto& s = r.stats;
    os << r.method << ',' << s.mean << ',' << s.variance << ',' << s.q20 << ',' << s.q90 << ',' << s.min << ','
       << s.max << ',' << r.n_paths << ',' << seed << '\n';
    os.precision(old);
}

inline void write_utilities(std::ostream& os, const EvaluationReport& r) {
    write_samples_csv(os, r.terminal_utilities);
}

}  // namespace narc
