#include <catch_amalgamated.hpp>

#include <sstream>
#include <string>

#include "narc/config.hpp"
#include "test_helpers.hpp"

using namespace narc;
using Catch::Matchers::ContainsSubstring;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("reference config file loads", "[config]") {
    const auto c = load_config(std::string(NARC_CONFIG_DIR) + "/paper_table1.cfg");
    CHECK(c.market.r == 0.002);
    CHECK(c.market.eta == 0.01);
    CHECK(c.market.horizon == 10);
    CHECK(c.market.x0 == 100.0);
    CHECK(c.t0 == 20);
    CHECK(c.mixture_weights == std::vector<double>{0.4, 0.6});
    CHECK(c.mixture_means == std::vector<double>{0.006, 0.016});
    CHECK(c.mixture_variances == std::vector<double>{0.016, 0.00625});
    CHECK(c.solver.alpha == 0.1);
    CHECK(c.solver.d == 4);
    CHECK(c.n_design_ar == 1000);
    CHECK(c.n_design_other == 200);
    CHECK(c.solver.n_bridge_sims == 1000);
    REQUIRE(c.solver.q0_override);
    CHECK(*c.solver.q0_override == 0.199165);
    CHECK(c.n_eval_paths == 1000);
    CHECK(c.methods == std::vector<Method>{Method::ar, Method::tr, Method::sr});
    CHECK(c.seed == 1);
}

TEST_CASE("mixture built from a config has the right moments", "[config]") {
    const auto c = parse(testing::reference_market_cfg());
    const auto m = c.mixture();
    CHECK(m.mean() == Catch::Approx(0.012).epsilon(1e-12));
    CHECK(m.variance() == Catch::Approx(0.010174).epsilon(1e-9));
}

TEST_CASE("defaults apply when optional keys are absent", "[config]") {
    const auto c = parse(testing::reference_market_cfg());
    CHECK(c.solver.alpha == 0.1);
    CHECK(c.solver.d == 4);
    CHECK(c.seed == 1);
    CHECK(c.methods.size() == 3);
    CHECK_FALSE(c.solver.q0_override);
}

TEST_CASE("missing required keys are listed together", "[config]") {
    const auto msg = error_of("# nothing here\n");
    for (const char* k : {"r", "eta", "T", "x0", "t0", "mixture.weights", "mixture.means", "mixture.variances"})
        CHECK_THAT(msg, ContainsSubstring(k));
}

TEST_CASE("out-of-range value names the key and line", "[config]") {
    const auto msg = error_of(std::string(testing::reference_market_cfg()) + "alpha = 1.5\n");
    CHECK_THAT(msg, ContainsSubstring("alpha"));
    CHECK_THAT(msg, ContainsSubstring("test.cfg:9"));
    CHECK_THAT(msg, ContainsSubstring("range"));
}

TEST_CASE("unknown key is rejected with its line", "[config]") {
    const auto msg = error_of(std::string("r = 0.002\nbogus = 3\n"));
    CHECK_THAT(msg, ContainsSubstring("bogus"));
    CHECK_THAT(msg, ContainsSubstring("test.cfg:2"));
}

TEST_CASE("duplicate key is rejected", "[config]") {
    const auto msg = error_of(std::string(testing::reference_market_cfg()) + "r = 0.003\n");
    CHECK_THAT(msg, ContainsSubstring("'r'"));
    CHECK_THAT(msg, ContainsSubstring("repeats line 1"));
}

TEST_CASE("malformed values are rejected", "[config]") {
    const std::string base = testing::reference_market_cfg();
    CHECK_THAT(error_of(base + "d = four\n"), ContainsSubstring("'d'"));
    CHECK_THAT(error_of(base + "seed = -1\n"), ContainsSubstring("'seed'"));
    CHECK_THAT(error_of(base + "common_random_numbers = maybe\n"), ContainsSubstring("common_random_numbers"));
    CHECK_THAT(error_of(base + "methods = ar, xx\n"), ContainsSubstring("xx"));
    CHECK_THAT(error_of("r = 0.002\nthis line has no equals\n"), ContainsSubstring("test.cfg:2"));
    CHECK_THAT(error_of("r = \n"), ContainsSubstring("no value"));
}

TEST_CASE("mixture lists must be consistent", "[config]") {
    const std::string text = "r = 0.002\neta = 0.01\nT = 10\nx0 = 100\nt0 = 20\n"
                             "mixture.weights = 0.5, 0.6\nmixture.means = 0.0, 0.0\nmixture.variances = 1, 1\n";
    CHECK_THAT(error_of(text), ContainsSubstring("sum to one"));
    const std::string short_means = "r = 0.002\neta = 0.01\nT = 10\nx0 = 100\nt0 = 20\n"
                                    "mixture.weights = 0.4, 0.6\nmixture.means = 0.0\nmixture.variances = 1, 1\n";
    CHECK_THAT(error_of(short_means), ContainsSubstring("mixture.means"));
}

TEST_CASE("comments and whitespace are ignored", "[config]") {
    const auto c = parse(std::string(testing::reference_market_cfg()) + "  seed=7   # trailing\n\n# full line\n");
    CHECK(c.seed == 7);
}

TEST_CASE("method lists", "[config]") {
    CHECK(parse_methods("ar,tr,sr") == std::vector<Method>{Method::ar, Method::tr, Method::sr});
    CHECK(parse_methods(" SR , ar ") == std::vector<Method>{Method::sr, Method::ar});
    CHECK(parse_methods("ar,ar") == std::vector<Method>{Method::ar});
    CHECK(parse_methods("").empty());
    CHECK_THROWS_AS(parse_methods("ar,qq"), ConfigError);
    const auto c = parse(std::string(testing::reference_market_cfg()) + "methods =\n");
    CHECK(c.methods.empty());
}
