// narc: command-line front end for the adaptive robust portfolio study.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "narc/config.hpp"
#include "narc/experiment.hpp"
#include "narc/selftest.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    std::optional<std::string> methods;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_methods) {
    cmd->add_option("--config", f.config, "experiment config file (key = value)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
    cmd->add_option("--out", f.out, "output directory (overrides the config)");
    cmd->add_option("--threads", f.threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
    if (with_methods) cmd->add_option("--methods", f.methods, "comma-separated subset of ar,tr,sr");
}

narc::ExperimentConfig resolve(const CommonFlags& f) {
    auto cfg = narc::load_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.out_dir = *f.out;
    if (f.threads) cfg.solver.threads = *f.threads;
    if (f.methods) cfg.methods = narc::parse_methods(*f.methods);
    return cfg;
}

void print_reports(const narc::RunResult& r) {
    if (r.reports.empty()) return;
    std::ifstream summary(r.out_dir / "summary.csv");
    if (summary) std::cout << summary.rdbuf();
}

int finish(const narc::RunResult& r) {
    if (r.status != 0) {
        std::cerr << "narc: run failed: " << r.error << " (see " << (r.out_dir / "FAILED").string() << ")\n";
        return r.status;
    }
    print_reports(r);
    std::cerr << "narc: outputs in " << r.out_dir.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive robust portfolio control with Wasserstein ambiguity sets"};
    app.require_subcommand(1);

    CommonFlags solve_f, eval_f, radius_f, compare_f;
    auto* solve = app.add_subcommand("solve", "solve the requested methods and write diagnostics and policies");
    add_common(solve, solve_f, true);

    auto* evaluate = app.add_subcommand("evaluate", "evaluate saved policies on out-of-sample paths");
    add_common(evaluate, eval_f, true);
    std::string policy_dir;
    evaluate->add_option("--policies", policy_dir, "directory holding policy_<method>.txt (default: --out)");

    auto* radius = app.add_subcommand("radius-sim", "simulate the bridge quantile behind the ball radius");
    add_common(radius, radius_f, false);
    std::string mode = "both";
    radius->add_option("--mode", mode, "fixed (one history), resample (re-drawn histories) or both")
        ->check(CLI::IsMember({"fixed", "resample", "both"}));

    auto* compare = app.add_subcommand("compare", "solve and evaluate every requested method on common noise");
    add_common(compare, compare_f, true);

    auto* selftest = app.add_subcommand("selftest", "run the oracle-based property checks");
    std::uint64_t selftest_seed = 20240501;
    selftest->add_option("--seed", selftest_seed, "seed for the random instances");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return finish(narc::run_experiment(resolve(solve_f), narc::RunMode::solve));
        if (compare->parsed()) return finish(narc::run_experiment(resolve(compare_f), narc::RunMode::compare));
        if (evaluate->parsed()) {
            const auto cfg = resolve(eval_f);
            const std::filesystem::path dir = policy_dir.empty() ? std::filesystem::path(cfg.out_dir) : std::filesystem::path(policy_dir);
            return finish(narc::run_evaluation(cfg, dir));
        }
        if (radius->parsed()) {
            const auto cfg = resolve(radius_f);
            const auto res = narc::run_radius_sim(cfg, mode != "resample", mode != "fixed");
            if (res.status != 0) {
                std::cerr << "narc: radius-sim failed: " << res.error << '\n';
                return res.status;
            }
            std::ifstream summary(std::filesystem::path(cfg.out_dir) / "radius_sim_summary.csv");
            std::cout << summary.rdbuf();
            return 0;
        }
        if (selftest->parsed()) {
            const auto results = narc::run_selftest(selftest_seed);
            return narc::print_selftest(std::cout, results) ? 0 : 1;
        }
    } catch (const narc::ConfigError& e) {
        std::cerr << "narc: config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "narc: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
