#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "narc/error.hpp"
#include "narc/gp.hpp"
#include "narc/rng.hpp"

using narc::GPConfig;
using narc::GPSurrogate;
using Catch::Approx;

namespace {
double predict1(const GPSurrogate& gp, double x) { return gp.predict(std::span<const double>(&x, 1)); }

GPConfig fixed_config(std::vector<double> ls, double s2, double nugget, bool normalize) {
    GPConfig c;
    c.optimize = false;
    c.normalize = normalize;
    c.lengthscales = std::move(ls);
    c.signal_variance = s2;
    c.nugget = nugget;
    return c;
}
}  // namespace

TEST_CASE("matern 5/2 values", "[gp]") {
    const std::vector<double> u{0.3, -1.2}, v{1.1, 0.4}, ls{0.7, 2.0}, one{1.0};
    CHECK(narc::matern52(u, u, ls, 2.5) == 2.5);
    CHECK(narc::matern52(u, v, ls, 1.3) == narc::matern52(v, u, ls, 1.3));
    const std::vector<double> a{0.0}, b{1.0};
    CHECK(narc::matern52(a, b, one, 1.0) == Approx(0.5239941088318203).epsilon(1e-12));
    const std::vector<double> bad{0.0};
    CHECK_THROWS_AS(narc::matern52(a, b, bad, 1.0), narc::InvalidInput);
    CHECK_THROWS_AS(narc::matern52(a, b, one, 0.0), narc::InvalidInput);
}

TEST_CASE("two-point hand-solved system", "[gp]") {
    Eigen::MatrixXd x(2, 1);
    x << 0.0, 1.0;
    Eigen::VectorXd y(2);
    y << 0.0, 1.0;
    const auto gp = GPSurrogate::fit(x, y, fixed_config({1.0}, 1.0, 0.0, false));
    // Weights of [[1, k1], [k1, 1]] w = (0, 1) with k1 = m(1); prediction k(0.5) (w1 + w2).
    CHECK(std::abs(gp.weights()[0] - (-0.722321910057682)) < 1e-10);
    CHECK(std::abs(gp.weights()[1] - 1.378492425550374) < 1e-10);
    CHECK(std::abs(predict1(gp, 0.5) - 0.5437351349430778) < 1e-10);
}

TEST_CASE("interpolation at training points", "[gp]") {
    narc::Rng rng(1);
    Eigen::MatrixXd x(25, 2);
    Eigen::VectorXd y(25);
    for (int i = 0; i < 25; ++i) {
        x(i, 0) = rng.uniform(0.0, 3.0);
        x(i, 1) = rng.uniform(-1.0, 1.0);
        y[i] = std::sin(x(i, 0)) * std::cos(2.0 * x(i, 1));
    }
    const auto gp = GPSurrogate::fit(x, y, fixed_config({0.8, 0.8}, 1.0, 0.0, true));
    for (int i = 0; i < 25; ++i) {
        const std::vector<double> q{x(i, 0), x(i, 1)};
        CHECK(std::abs(gp.predict(q) - y[i]) < 1e-6);
    }
}

TEST_CASE("cholesky factor reproduces the covariance", "[gp]") {
    narc::Rng rng(2);
    Eigen::MatrixXd x(30, 3);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
        y[i] = x.row(i).sum();
    }
    GPConfig cfg;
    cfg.seed = 3;
    const auto gp = GPSurrogate::fit(x, y, cfg);
    const Eigen::MatrixXd k = gp.covariance();
    const Eigen::MatrixXd l = gp.chol_factor();
    CHECK((l * l.transpose() - k).norm() <= 1e-8 * k.norm());
    CHECK((k * gp.weights() - (y.array() - gp.output_mean()).matrix()).norm() < 1e-6 * (1.0 + y.norm()));
}

TEST_CASE("prediction matches a direct dense solve", "[gp]") {
    narc::Rng rng(4);
    const int n = 15;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.uniform(0.0, 2.0);
        x(i, 1) = rng.uniform(0.0, 5.0);
        y[i] = x(i, 0) * x(i, 0) - x(i, 1);
    }
    const std::vector<double> ls{0.6, 1.5};
    const auto gp = GPSurrogate::fit(x, y, fixed_config(ls, 2.0, 1e-6, false));
    Eigen::MatrixXd k(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const std::vector<double> a{x(i, 0), x(i, 1)}, b{x(j, 0), x(j, 1)};
            k(i, j) = narc::matern52(a, b, ls, 2.0) + (i == j ? 1e-6 : 0.0);
        }
    const Eigen::VectorXd w = k.fullPivLu().solve(y);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> q{rng.uniform(0.0, 2.0), rng.uniform(0.0, 5.0)};
        double want = 0.0;
        for (int i = 0; i < n; ++i) {
            const std::vector<double> a{x(i, 0), x(i, 1)};
            want += narc::matern52(q, a, ls, 2.0) * w[i];
        }
        CHECK(gp.predict(q) == Approx(want).margin(1e-8));
    }
}

TEST_CASE("noisy sine recovery", "[gp]") {
    narc::Rng rng(5);
    const int n = 50;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 2.0 * std::numbers::pi * rng.uniform();
        y[i] = std::sin(x(i, 0)) + rng.normal(0.0, 0.1);
    }
    GPConfig cfg;
    cfg.seed = 6;
    const auto gp = GPSurrogate::fit(x, y, cfg);
    double ss = 0.0;
    const int m = 200;
    for (int k = 0; k < m; ++k) {
        const double q = 2.0 * std::numbers::pi * (k + 0.5) / m;
        const double e = predict1(gp, q) - std::sin(q);
        ss += e * e;
    }
    CHECK(std::sqrt(ss / m) < 0.1);
}

TEST_CASE("fitted likelihood beats every restart's start", "[gp]") {
    narc::Rng rng(7);
    Eigen::MatrixXd x(40, 2);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = rng.uniform(0.0, 4.0);
        x(i, 1) = rng.uniform(0.0, 1.0);
        y[i] = std::exp(-x(i, 0)) + x(i, 1) + rng.normal(0.0, 0.01);
    }
    GPConfig cfg;
    cfg.seed = 8;
    const auto gp = GPSurrogate::fit(x, y, cfg);
    REQUIRE(gp.report().initial_lml.size() == 5);
    for (double l0 : gp.report().initial_lml) CHECK(gp.report().final_lml >= l0);
    const double ratio = gp.nugget() / gp.signal_variance();
    CHECK(ratio >= 1e-8 * (1.0 - 1e-9));
    CHECK(ratio <= 1e-2 * (1.0 + 1e-9));
}

TEST_CASE("fitting is deterministic", "[gp]") {
    narc::Rng rng(9);
    Eigen::MatrixXd x(20, 1);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = rng.uniform();
        y[i] = std::cos(5.0 * x(i, 0));
    }
    GPConfig cfg;
    cfg.seed = 10;
    const auto a = GPSurrogate::fit(x, y, cfg), b = GPSurrogate::fit(x, y, cfg);
    CHECK(a.lengthscales() == b.lengthscales());
    CHECK(a.nugget() == b.nugget());
    CHECK(predict1(a, 0.37) == predict1(b, 0.37));
}

TEST_CASE("constant targets give constant predictions", "[gp]") {
    Eigen::MatrixXd x(5, 2);
    x << 0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.5;
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(5, 3.25);
    const auto gp = GPSurrogate::fit(x, y);
    CHECK(gp.is_constant());
    for (double a : {-10.0, 0.2, 7.0}) {
        const std::vector<double> q{a, -a};
        CHECK(std::abs(gp.predict(q) - 3.25) < 1e-6);
    }
}

TEST_CASE("far queries revert to the prior mean", "[gp]") {
    Eigen::MatrixXd x(10, 1);
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = i;
        y[i] = std::sin(static_cast<double>(i));
    }
    const auto gp = GPSurrogate::fit(x, y, fixed_config({0.5}, 1.0, 1e-8, true));
    CHECK(std::abs(predict1(gp, 1e4) - y.mean()) < 1e-3);
}

TEST_CASE("batch predict equals pointwise predict", "[gp]") {
    narc::Rng rng(11);
    Eigen::MatrixXd x(12, 2), q(7, 2);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = x(i, 0) - 2.0 * x(i, 1);
    }
    for (int i = 0; i < 7; ++i) q.row(i) << rng.normal(), rng.normal();
    GPConfig cfg;
    cfg.seed = 12;
    const auto gp = GPSurrogate::fit(x, y, cfg);
    const Eigen::VectorXd batch = gp.predict(q);
    for (int i = 0; i < 7; ++i) {
        const std::vector<double> row{q(i, 0), q(i, 1)};
        CHECK(batch[i] == gp.predict(row));
    }
}

TEST_CASE("save and load round-trip", "[gp]") {
    narc::Rng rng(13);
    Eigen::MatrixXd x(15, 3);
    Eigen::VectorXd y(15);
    for (int i = 0; i < 15; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-2.0, 2.0);
        y[i] = x(i, 0) * x(i, 1) + x(i, 2);
    }
    GPConfig cfg;
    cfg.seed = 14;
    const auto gp = GPSurrogate::fit(x, y, cfg);
    std::stringstream ss;
    gp.save(ss);
    const auto back = GPSurrogate::load(ss);
    for (int k = 0; k < 10; ++k) {
        const std::vector<double> q{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
        CHECK(back.predict(q) == Approx(gp.predict(q)).margin(1e-10));
    }
    std::stringstream bad("narc-gp 2\n");
    CHECK_THROWS_AS(GPSurrogate::load(bad), narc::InvalidInput);
}

TEST_CASE("duplicate inputs are handled by the nugget", "[gp]") {
    Eigen::MatrixXd x(6, 1);
    x << 0.0, 0.0, 1.0, 1.0, 2.0, 2.0;
    Eigen::VectorXd y(6);
    y << 0.0, 0.1, 1.0, 0.9, 0.0, 0.05;
    const auto gp = GPSurrogate::fit(x, y);
    CHECK(std::isfinite(predict1(gp, 0.5)));
    CHECK(gp.nugget() > 0.0);
}
