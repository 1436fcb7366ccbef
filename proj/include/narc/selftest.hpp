#pragma once

// Fast oracle-backed property checks, run by `narc selftest`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "narc/ambiguity.hpp"
#include "narc/empirical.hpp"
#include "narc/evaluate.hpp"
#include "narc/gp.hpp"
#include "narc/log.hpp"
#include "narc/market.hpp"
#include "narc/oracle.hpp"
#include "narc/rng.hpp"
#include "narc/solver.hpp"

namespace narc {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace selftest {

inline std::vector<double> random_atoms(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline CheckResult w1_exact(std::uint64_t seed) {
    Rng rng(seed, 1);
    double worst = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<std::size_t>(1 + rng() % 6), m = static_cast<std::size_t>(1 + rng() % 6);
        std::vector<std::int64_t> a(n), b(m);
        for (auto& x : a) x = static_cast<std::int64_t>(rng() % 41) - 20;
        for (auto& x : b) x = static_cast<std::int64_t>(rng() % 41) - 20;
        std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
        for (auto& x : da) x /= 8.0;
        for (auto& x : db) x /= 8.0;
        const auto exact = oracle::exact_w1_integer(a, b);
        const double got = wasserstein1(EmpiricalDistribution(da), EmpiricalDistribution(db));
        worst = std::max(worst, std::abs(got - exact.value() / 8.0));
    }
    return {"w1 matches exact assignment (300 pairs, <=6 atoms)", worst <= 1e-12,
            "max error " + std::to_string(worst)};
}

inline CheckResult w1_metric(std::uint64_t seed) {
    Rng rng(seed, 2);
    int bad = 0;
    for (int trial = 0; trial < 300; ++trial) {
        auto draw = [&] {
            return EmpiricalDistribution(random_atoms(rng, static_cast<std::size_t>(1 + rng() % 8), -1.0, 1.0));
        };
        const auto f = draw(), g = draw(), h = draw();
        const double fg = wasserstein1(f, g), gf = wasserstein1(g, f), fh = wasserstein1(f, h),
                     gh = wasserstein1(g, h);
        if (wasserstein1(f, f) != 0.0 || std::abs(fg - gf) > 1e-12 || fh > fg + gh + 1e-12 || fg < 0.0) ++bad;
    }
    return {"w1 metric axioms (300 triples)", bad == 0, std::to_string(bad) + " violations"};
}

inline CheckResult contraction(std::uint64_t seed) {
    Rng rng(seed, 3);
    int bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(2 + rng() % 10);
        const EmpiricalDistribution f(random_atoms(rng, n, -1.0, 1.0)), g(random_atoms(rng, n, -1.0, 1.0));
        const double z = rng.uniform(-2.0, 2.0), w = rng.uniform(-2.0, 2.0);
        const double lhs = wasserstein1(f.updated(z), g.updated(w));
        const double nd = static_cast<double>(n);
        const double rhs = nd / (nd + 1.0) * wasserstein1(f, g) + std::abs(z - w) / (nd + 1.0);
        if (lhs > rhs + 1e-12) ++bad;
    }
    return {"update contraction bound (1000 tuples)", bad == 0, std::to_string(bad) + " violations"};
}

inline CheckResult zero_radius(std::uint64_t seed) {
    Rng rng(seed, 4);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<std::size_t>(3 + rng() % 8);
        const auto atoms = random_atoms(rng, n, -0.3, 0.3);
        const std::vector<double> w(n, 1.0 / static_cast<double>(n));
        const double c = rng.uniform(-3.0, 3.0), s = rng.uniform(1.0, 10.0);
        auto g = [&](double z) { return std::sin(s * z + c) + z * z; };
        double mean = 0.0;
        for (double z : atoms) mean += g(z) / static_cast<double>(n);
        const auto res = inner_robust_value(g, atoms, w, 0.0, Bracket{-1.0, 1.0});
        worst = std::max(worst, std::abs(res.value - mean));
    }
    return {"zero radius gives the empirical mean (100 instances)", worst <= 1e-4,
            "max error " + std::to_string(worst)};
}

inline CheckResult duality(std::uint64_t seed) {
    Rng rng(seed, 5);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const auto n = static_cast<std::size_t>(5 + rng() % 6);
        const Bracket br{-1.0, 1.0};
        oracle::PiecewiseLinear pl;
        const int kinks = 6;
        for (int i = 0; i <= kinks; ++i) {
            pl.xs.push_back(br.lo + (br.hi - br.lo) * i / kinks);
            pl.ys.push_back(rng.uniform(-1.0, 1.0));
        }
        const auto atoms = random_atoms(rng, n, -0.8, 0.8);
        const std::vector<double> w(n, 1.0 / static_cast<double>(n));
        const double eps = rng.uniform(0.01, 0.3);
        std::vector<double> nodes;
        for (int i = 0; i <= 100; ++i) nodes.push_back(br.lo + (br.hi - br.lo) * i / 100);
        nodes.insert(nodes.end(), pl.xs.begin(), pl.xs.end());
        nodes.insert(nodes.end(), atoms.begin(), atoms.end());
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        std::vector<double> gv(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) gv[i] = pl(nodes[i]);
        const double lp = oracle::worst_case_transport_lp(nodes, gv, atoms, w, eps);
        const double dual = inner_robust_value(pl, atoms, w, eps, br).value;
        worst = std::max(worst, std::abs(lp - dual));
    }
    return {"dual value matches transport LP (5 instances)", worst <= 1e-3, "max error " + std::to_string(worst)};
}

inline CheckResult gp_interpolation(std::uint64_t seed) {
    Rng rng(seed, 6);
    Eigen::MatrixXd x(20, 1);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = i / 19.0;
        y[i] = std::sin(6.0 * x(i, 0));
    }
    GPConfig cfg;
    cfg.optimize = false;
    cfg.lengthscales = {0.3};
    cfg.nugget = 0.0;
    const auto gp = GPSurrogate::fit(x, y, cfg);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, std::abs(gp.predict(std::vector<double>{x(i, 0)}) - y[i]));
    return {"GP interpolates its training points", worst <= 1e-6, "max error " + std::to_string(worst)};
}

inline CheckResult stats_hand() {
    const std::vector<double> v{4, 2, 5, 1, 3};
    const auto s = report_stats(v);
    const bool ok = s.q20 == 1.0 && s.q90 == 5.0 && s.mean == 3.0 && std::abs(s.variance - 2.5) < 1e-15;
    return {"report_stats on {1,...,5}", ok, "q20=" + std::to_string(s.q20) + " q90=" + std::to_string(s.q90)};
}

inline CheckResult bank_utility() {
    const MarketParams p;
    const double want = (1.0 - std::exp(-p.eta * p.x0 * std::pow(1.0 + p.r, p.horizon))) / p.eta;
    const MixtureModel model = MixtureModel::reference();
    Rng rng(7);
    const Problem prob{p, model, EmpiricalDistribution(model.sample(rng, 20))};
    const auto rep = forward_evaluate([](int, const AugmentedState&) { return 0.0; }, prob, 50, Rng(8), 1);
    const bool ok = std::abs(rep.stats.mean - want) < 1e-9 && rep.stats.variance < 1e-18 &&
                    std::abs(want - 63.947) < 1e-3;
    return {"all-bank policy gives 63.947", ok, "mean " + std::to_string(rep.stats.mean)};
}

inline CheckResult radius_determinism(std::uint64_t seed) {
    const MixtureModel model = MixtureModel::reference();
    Rng h(seed, 9);
    const EmpiricalDistribution f(model.sample(h, 20));
    Rng a(seed, 10), b(seed, 10);
    const auto ra = radius(f, 0.1, 500, a), rb = radius(f, 0.1, 500, b);
    return {"radius is deterministic for a fixed seed", ra == rb, "radius " + std::to_string(ra.radius)};
}

}  // namespace selftest

inline std::vector<CheckResult> run_selftest(std::uint64_t seed = 20240501) {
    log::set_quiet(true);
    std::vector<CheckResult> out;
    const std::vector<std::function<CheckResult()>> checks{
        [&] { return selftest::w1_exact(seed); },         [&] { return selftest::w1_metric(seed); },
        [&] { return selftest::contraction(seed); },      [&] { return selftest::zero_radius(seed); },
        [&] { return selftest::duality(seed); },          [&] { return selftest::gp_interpolation(seed); },
        [] { return selftest::stats_hand(); },            [] { return selftest::bank_utility(); },
        [&] { return selftest::radius_determinism(seed); }};
    for (const auto& c : checks) {
        try {
            out.push_back(c());
        } catch (const std::exception& e) {
            out.push_back({"check threw", false, e.what()});
        }
    }
    log::set_quiet(false);
    return out;
}

inline bool print_selftest(std::ostream& os, const std::vector<CheckResult>& results) {
    bool all = true;
    for (const auto& r : results) {
        os << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail << ")\n";
        all = all && r.passed;
    }
    os << (all ? "selftest passed\n" : "selftest FAILED\n");
    return all;
}

}  // namespace narc
