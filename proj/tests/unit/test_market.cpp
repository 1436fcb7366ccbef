#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "narc/error.hpp"
#include "narc/market.hpp"

using narc::AugmentedState;
using narc::EmpiricalDistribution;
using Catch::Approx;

TEST_CASE("wealth step examples", "[market]") {
    CHECK(narc::wealth_step(100.0, 0.0, 0.37, 0.002) == Approx(100.2));
    CHECK(narc::wealth_step(100.0, 1.0, 0.0, 0.05) == Approx(100.0));
    CHECK(narc::wealth_step(100.0, 0.5, std::log(1.002), 0.002) == Approx(100.2));
    CHECK_THROWS_AS(narc::wealth_step(100.0, -0.01, 0.0, 0.002), narc::InvalidInput);
    CHECK_THROWS_AS(narc::wealth_step(100.0, 1.01, 0.0, 0.002), narc::InvalidInput);
}

TEST_CASE("wealth step is linear in x and increasing in z", "[market]") {
    CHECK(narc::wealth_step(250.0, 0.3, 0.1, 0.002) == Approx(2.5 * narc::wealth_step(100.0, 0.3, 0.1, 0.002)));
    CHECK(narc::wealth_step(100.0, 0.3, 0.11, 0.002) > narc::wealth_step(100.0, 0.3, 0.1, 0.002));
}

TEST_CASE("transition is componentwise", "[market]") {
    const narc::MarketParams p;
    narc::Rng rng(3);
    for (int k = 0; k < 3; ++k) {
        const AugmentedState y{rng.uniform(50.0, 150.0), EmpiricalDistribution({rng.normal(), rng.normal()})};
        const double a = rng.uniform(), z = rng.normal(0.0, 0.1);
        const auto next = narc::transition(k, y, a, z, p);
        CHECK(next.wealth == narc::wealth_step(y.wealth, a, z, p.r));
        CHECK(next.dist == narc::update_empirical(y.dist, z));
        CHECK(next.dist.count() == y.dist.count() + 1);
    }
}

TEST_CASE("all-bank transitions compound at the bank rate", "[market]") {
    const narc::MarketParams p;
    AugmentedState y{p.x0, EmpiricalDistribution({0.0})};
    narc::Rng rng(4);
    for (int t = 0; t < p.horizon; ++t) y = narc::transition(t, y, 0.0, rng.normal(), p);
    CHECK(y.wealth == Approx(p.x0 * std::pow(1.0 + p.r, p.horizon)).epsilon(1e-14));
    CHECK(y.dist.count() == static_cast<std::size_t>(p.horizon + 1));
}

TEST_CASE("reference mixture moments", "[market]") {
    const auto m = narc::MixtureModel::reference();
    // 0.4 * 0.006 + 0.6 * 0.016
    CHECK(m.mean() == Approx(0.012).epsilon(1e-12));
    // 0.4 (0.016 + 0.006^2) + 0.6 (0.00625 + 0.016^2) - 0.012^2
    CHECK(m.variance() == Approx(0.010174).epsilon(1e-10));
}

TEST_CASE("mixture sampler matches closed-form moments", "[market]") {
    const auto m = narc::MixtureModel::reference();
    narc::Rng rng(5);
    const int n = 1000000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = narc::sample_mixture(m, rng);
        s += z;
        s2 += z * z;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 0.012) < 0.001);
    CHECK(std::abs(var - 0.010174) < 0.0005);
}

TEST_CASE("single-component mixture is a plain Gaussian", "[market]") {
    const narc::MixtureModel m({{1.0, 0.5, 2.0}});
    narc::Rng rng(6);
    const int n = 200000;
    double s = 0.0, s2 = 0.0, below = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = m.sample(rng);
        s += z;
        s2 += z * z;
        if (z < 0.5 - 2.0) below += 1.0;
    }
    CHECK(std::abs(s / n - 0.5) < 0.02);
    CHECK(std::abs(s2 / n - 0.25 - 4.0) < 0.05);
    CHECK(std::abs(below / n - 0.158655) < 0.005);
}

TEST_CASE("mixture validation", "[market]") {
    CHECK_THROWS_AS(narc::MixtureModel({{0.5, 0.0, 1.0}}), narc::InvalidInput);
    CHECK_THROWS_AS(narc::MixtureModel({{1.0, 0.0, 0.0}}), narc::InvalidInput);
    CHECK_THROWS_AS(narc::MixtureModel({}), narc::InvalidInput);
}

TEST_CASE("utility values", "[market]") {
    CHECK(narc::utility(102.0181, 0.01) == Approx(63.947).margin(1e-3));
    CHECK(narc::utility(0.0, 0.01) == 0.0);
    CHECK(narc::utility(100.0, 0.01) == Approx(63.21206).margin(1e-5));
}

TEST_CASE("utility is increasing and bounded by 1/eta", "[market]") {
    double prev = -INFINITY;
    for (double x = 0.0; x <= 2000.0; x += 7.5) {
        const double u = narc::utility(x, 0.01);
        CHECK(u > prev);
        CHECK(u < 100.0);
        prev = u;
    }
}

TEST_CASE("power utility", "[market]") {
    CHECK(narc::utility(1.0, 0.5, narc::UtilityKind::power) == Approx(0.0));
    CHECK(narc::utility(4.0, 0.5, narc::UtilityKind::power) == Approx(2.0));
}
