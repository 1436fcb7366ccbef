#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "narc/evaluate.hpp"
#include "narc/log.hpp"

using namespace narc;
using Catch::Approx;

namespace {

Problem reference_problem(std::uint64_t seed) {
    const auto model = MixtureModel::reference();
    Rng h(seed, 99);
    return Problem{MarketParams{}, model, EmpiricalDistribution(model.sample(h, 20))};
}

}  // namespace

TEST_CASE("report_stats by hand", "[evaluate]") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    const auto s = report_stats(v);
    CHECK(s.mean == 3.0);
    CHECK(s.variance == Approx(2.5).epsilon(1e-15));
    CHECK(s.q20 == 1.0);
    CHECK(s.q90 == 5.0);
    CHECK(s.min == 1.0);
    CHECK(s.max == 5.0);
    CHECK(s.n == 5);
}

TEST_CASE("report_stats of a constant vector", "[evaluate]") {
    const std::vector<double> v(7, 2.25);
    const auto s = report_stats(v);
    CHECK(s.mean == 2.25);
    CHECK(s.variance == 0.0);
    CHECK(s.q20 == 2.25);
    CHECK(s.q90 == 2.25);
}

TEST_CASE("report_stats is permutation invariant and reproducible", "[evaluate]") {
    Rng rng(1);
    std::vector<double> v(1000);
    for (auto& x : v) x = rng.normal(60.0, 3.0);
    auto w = v;
    std::reverse(w.begin(), w.end());
    std::rotate(w.begin(), w.begin() + 137, w.end());
    const auto a = report_stats(v), b = report_stats(w), c = report_stats(v);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    CHECK(a.q20 == b.q20);
    CHECK(a.q90 == b.q90);
    CHECK(a.mean == c.mean);
    CHECK(a.variance == c.variance);
}

TEST_CASE("report_stats rejects an empty sample", "[evaluate]") {
    const std::vector<double> none;
    CHECK_THROWS_AS(report_stats(none), InvalidInput);
}

TEST_CASE("all-bank policy is deterministic", "[evaluate]") {
    const auto problem = reference_problem(2);
    const auto rep = forward_evaluate([](int, const AugmentedState&) { return 0.0; }, problem, 200, Rng(3));
    CHECK(rep.stats.mean == Approx(63.947).margin(1e-3));
    CHECK(rep.stats.variance < 1e-20);
    for (double x : rep.terminal_wealth) CHECK(x == Approx(100.0 * std::pow(1.002, 10)).epsilon(1e-14));
}

TEST_CASE("all-stock policy has the right mean terminal wealth", "[evaluate]") {
    const auto problem = reference_problem(4);
    const std::size_t paths = 100000;
    const auto rep = forward_evaluate([](int, const AugmentedState&) { return 1.0; }, problem, paths, Rng(5));
    double mean_w = 0.0;
    for (double x : rep.terminal_wealth) mean_w += x / static_cast<double>(paths);
    CHECK(mean_w == Approx(100.0 * std::pow(problem.model.mean_exp(), 10)).epsilon(0.01));
}

TEST_CASE("one path is reproducible", "[evaluate]") {
    const auto problem = reference_problem(6);
    auto pol = [](int t, const AugmentedState& y) { return 0.1 * t + 0.01 * y.dist.mean(); };
    const auto a = forward_evaluate(pol, problem, 1, Rng(7));
    const auto b = forward_evaluate(pol, problem, 1, Rng(7));
    CHECK(a.terminal_utilities == b.terminal_utilities);
    CHECK(a.stats.variance == 0.0);
}

TEST_CASE("path i draws its returns from rng.split(i)", "[evaluate]") {
    const auto problem = reference_problem(8);
    const Rng rng(9);
    for (double a : {0.5, 1.0}) {
        const auto rep = forward_evaluate([a](int, const AugmentedState&) { return a; }, problem, 50, rng);
        for (std::size_t i = 0; i < 50; ++i) {
            Rng path = rng.split(i);
            double x = 100.0;
            for (int t = 0; t < 10; ++t) x = wealth_step(x, a, problem.model.sample(path), 0.002);
            CHECK(rep.terminal_wealth[i] == x);
        }
    }
}

TEST_CASE("evaluation is independent of thread count", "[evaluate]") {
    const auto problem = reference_problem(10);
    auto pol = [](int, const AugmentedState& y) { return std::clamp(10.0 * y.dist.mean(), 0.0, 1.0); };
    const auto a = forward_evaluate(pol, problem, 500, Rng(11), 1);
    const auto b = forward_evaluate(pol, problem, 500, Rng(11), 4);
    CHECK(a.terminal_utilities == b.terminal_utilities);
}

TEST_CASE("static baseline with a large forced quantile stays in the bank", "[evaluate]") {
    log::set_quiet(true);
    const auto problem = reference_problem(12);
    SolverConfig cfg;
    cfg.n_design_points = 20;
    cfg.gp.restarts = 1;
    cfg.quantile_override = 0.2 * std::sqrt(20.0) * 10.0;
    const auto stages = solve_sr(problem, cfg, Rng(13));
    const auto rep = forward_evaluate(stages, problem, 100, Rng(14));
    log::set_quiet(false);
    CHECK(rep.stats.mean == Approx(63.947).margin(0.05));
    CHECK(rep.stats.variance < 1e-2);
}

TEST_CASE("summary row layout", "[evaluate]") {
    EvaluationReport r;
    r.method = "AR";
    r.n_paths = 5;
    r.stats = report_stats(std::vector<double>{1, 2, 3, 4, 5});
    std::ostringstream os;
    write_summary_header(os);
    write_summary_row(os, r, 42);
    CHECK(os.str() == "method,mean,variance,q20,q90,min,max,n_paths,seed\nAR,3,2.5,1,5,1,5,5,42\n");
}
