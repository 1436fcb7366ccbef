#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>
#include <string>

#include "narc/config.hpp"
#include "narc/experiment.hpp"
#include "test_helpers.hpp"

using namespace narc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const fs::path& out, const std::string& extra = "") {
    std::string text = testing::reference_market_cfg();
    text.replace(text.find("T = 10"), 6, "T = 3");
    text += "n_design_ar = 16\nn_design_other = 12\nn_bridge_sims = 100\ngp.restarts = 1\n"
            "n_eval_paths = 50\nradius_path_steps = 5\nradius_resamples = 8\n";
    text += extra;
    text += "out = " + out.string() + "\n";
    std::istringstream cfg(text);
    return parse_config(cfg, "small.cfg");
}

}  // namespace

TEST_CASE("empty method list writes only the manifest", "[experiment]") {
    const auto dir = testing::temp_dir("empty");
    const auto res = run_experiment(small_config(dir, "methods =\n"));
    CHECK(res.status == 0);
    CHECK(res.reports.empty());
    CHECK(fs::exists(dir / "run_manifest.txt"));
    CHECK_FALSE(fs::exists(dir / "summary.csv"));
    CHECK_FALSE(fs::exists(dir / "diagnostics_ar.csv"));
}

TEST_CASE("compare writes every output and a manifest with hashes", "[experiment]") {
    const auto dir = testing::temp_dir("compare");
    const auto res = run_experiment(small_config(dir));
    REQUIRE(res.status == 0);
    REQUIRE(res.reports.size() == 3);
    for (const char* m : {"ar", "tr", "sr"}) {
        for (const std::string prefix : {"report_", "utilities_", "diagnostics_"})
            CHECK(fs::exists(dir / (prefix + m + ".csv")));
        CHECK(fs::exists(dir / (std::string("policy_") + m + ".txt")));
    }
    const auto summary = testing::slurp(dir / "summary.csv");
    CHECK(summary.rfind("method,mean,variance,q20,q90,min,max,n_paths,seed\n", 0) == 0);
    CHECK(testing::slurp(dir / "radius_path.csv").rfind("t,n,quantile,radius,scaled_radius\n", 0) == 0);
    const auto diag = testing::slurp(dir / "diagnostics_ar.csv");
    CHECK(diag.rfind("method,t,index,wealth,m1,m2,m3,m4,value,action,gamma,quantile,radius,cap_hit\n", 0) == 0);
    const auto manifest = testing::slurp(dir / "run_manifest.txt");
    CHECK(manifest.find("config_hash = fnv1a64:") != std::string::npos);
    CHECK(manifest.find("file summary.csv " + file_hash(dir / "summary.csv")) != std::string::npos);
    CHECK(manifest.find("status = ok") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "FAILED"));
}

TEST_CASE("reruns and thread counts leave outputs byte-identical", "[experiment]") {
    const auto a = testing::temp_dir("rerun_a"), b = testing::temp_dir("rerun_b"), c = testing::temp_dir("rerun_c");
    REQUIRE(run_experiment(small_config(a, "threads = 1\n")).status == 0);
    REQUIRE(run_experiment(small_config(b, "threads = 1\n")).status == 0);
    REQUIRE(run_experiment(small_config(c, "threads = 3\n")).status == 0);
    for (const char* f : {"summary.csv", "utilities_ar.csv", "diagnostics_ar.csv", "diagnostics_sr.csv",
                          "radius_path.csv", "policy_ar.txt"}) {
        INFO(f);
        CHECK(testing::slurp(a / f) == testing::slurp(b / f));
        CHECK(testing::slurp(a / f) == testing::slurp(c / f));
    }
}

TEST_CASE("different seeds give different results", "[experiment]") {
    const auto a = testing::temp_dir("seed_a"), b = testing::temp_dir("seed_b");
    REQUIRE(run_experiment(small_config(a, "methods = ar\nseed = 1\n")).status == 0);
    REQUIRE(run_experiment(small_config(b, "methods = ar\nseed = 2\n")).status == 0);
    CHECK(testing::slurp(a / "utilities_ar.csv") != testing::slurp(b / "utilities_ar.csv"));
}

TEST_CASE("saved policies evaluate to the same report", "[experiment]") {
    const auto dir = testing::temp_dir("policies"), eval = testing::temp_dir("policies_eval");
    const auto solved = run_experiment(small_config(dir, "methods = ar, sr\n"));
    REQUIRE(solved.status == 0);
    const auto evaluated = run_evaluation(small_config(eval, "methods = ar, sr\n"), dir);
    REQUIRE(evaluated.status == 0);
    CHECK(testing::slurp(dir / "summary.csv") == testing::slurp(eval / "summary.csv"));
    CHECK(testing::slurp(dir / "utilities_ar.csv") == testing::slurp(eval / "utilities_ar.csv"));
}

TEST_CASE("a failed run leaves a FAILED marker", "[experiment]") {
    const auto dir = testing::temp_dir("failed");
    const auto res = run_evaluation(small_config(dir, "methods = ar\n"), dir / "no_such_dir");
    CHECK(res.status != 0);
    CHECK(fs::exists(dir / "FAILED"));
    CHECK(testing::slurp(dir / "run_manifest.txt").find("status = failed") != std::string::npos);
    // A later successful run clears the marker.
    REQUIRE(run_experiment(small_config(dir, "methods =\n")).status == 0);
    CHECK_FALSE(fs::exists(dir / "FAILED"));
}

TEST_CASE("radius simulation outputs", "[experiment]") {
    const auto dir = testing::temp_dir("radius");
    const auto res = run_radius_sim(small_config(dir), true, true);
    REQUIRE(res.status == 0);
    CHECK(res.sim.h_values.size() == 100);
    CHECK(res.sim.resampled_quantiles.size() == 8);
    CHECK(res.sim.h_quantile > 0.0);
    const auto summary = testing::slurp(dir / "radius_sim_summary.csv");
    CHECK(summary.rfind("mode,count,mean,quantile,alpha\nfixed,100,", 0) == 0);
    CHECK(summary.find("\nresample,8,") != std::string::npos);
}

TEST_CASE("config hash ignores threads and output directory", "[experiment]") {
    const auto a = small_config("x", "threads = 1\n"), b = small_config("y", "threads = 4\n");
    CHECK(canonical_config(a) == canonical_config(b));
    const auto c = small_config("x", "seed = 9\n");
    CHECK(canonical_config(a) != canonical_config(c));
}
