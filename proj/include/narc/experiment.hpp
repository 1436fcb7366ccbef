#pragma once

// Experiment orchestration: shared historical sample, per-method solve and
// evaluation, CSV artifacts and a hashed run manifest.
//
// Seed fan-out from the master seed:
//   "history"      historical sample F_0
//   "solve"        design paths, bridge batches, GP restarts, true-model sample
//   "evaluation"   out-of-sample paths (or eval_seed when given)
//   "radius-path"  the radius path and radius-sim resamples

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "narc/ambiguity.hpp"
#include "narc/config.hpp"
#include "narc/empirical.hpp"
#include "narc/evaluate.hpp"
#include "narc/gp.hpp"
#include "narc/log.hpp"
#include "narc/market.hpp"
#include "narc/rng.hpp"
#include "narc/solver.hpp"

namespace narc {

enum class RunMode { solve, compare };

inline std::string method_tag(Method m) {
    std::string s = method_name(m);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline Rng master_rng(const ExperimentConfig& c) { return Rng(c.seed); }

inline Problem make_problem(const ExperimentConfig& c) {
    const MixtureModel model = c.mixture();
    Rng hist = master_rng(c).split("history");
    return Problem{c.market, model, EmpiricalDistribution(model.sample(hist, static_cast<std::size_t>(c.t0)))};
}

inline Rng evaluation_rng(const ExperimentConfig& c) {
    return c.eval_seed ? Rng(*c.eval_seed).split("evaluation") : master_rng(c).split("evaluation");
}

inline SolverConfig solver_config_for(const ExperimentConfig& c, Method m) {
    SolverConfig s = c.solver;
    s.n_design_points = m == Method::ar ? c.n_design_ar : c.n_design_other;
    s.seed = c.seed;
    return s;
}

/// Canonical `key = value` dump of everything that affects results (thread
/// count and output directory excluded). Its hash goes into the manifest.
inline std::string canonical_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    auto list = [&](const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << '\n';
    };
    const auto& s = c.solver;
    os << "r = " << c.market.r << "\neta = " << c.market.eta << "\nT = " << c.market.horizon
       << "\nx0 = " << c.market.x0 << "\nt0 = " << c.t0 << "\nutility = "
       << (c.market.utility == UtilityKind::power ? "power" : "exponential") << '\n';
    os << "mixture.weights = ";
    list(c.mixture_weights);
    os << "mixture.means = ";
    list(c.mixture_means);
    os << "mixture.variances = ";
    list(c.mixture_variances);
    os << "n_design_ar = " << c.n_design_ar << "\nn_design_other = " << c.n_design_other << "\nd = " << s.d
       << "\nalpha = " << s.alpha << "\nn_bridge_sims = " << s.n_bridge_sims << "\ntol = " << s.tol
       << "\ngamma_cap_factor = " << s.gamma_cap_factor << "\nz_bracket_spread = " << s.z_bracket_spread
       << "\nz_grid_points = " << s.z_grid_points << "\ntrue_grid_points = " << s.true_grid_points
       << "\ntrue_sample_size = " << s.true_sample_size
       << "\ncommon_random_numbers = " << (s.common_random_numbers ? "true" : "false") << '\n';
    if (s.q0_override) os << "q0_override = " << *s.q0_override << '\n';
    if (s.quantile_override) os << "quantile_override = " << *s.quantile_override << '\n';
    os << "gp.restarts = " << s.gp.restarts << "\ngp.max_iter = " << s.gp.max_iter
       << "\ngp.max_likelihood_points = " << s.gp.max_likelihood_points << "\nn_eval_paths = " << c.n_eval_paths
       << '\n';
    if (c.eval_seed) os << "eval_seed = " << *c.eval_seed << '\n';
    os << "radius_path_steps = " << c.radius_path_steps << "\nradius_resamples = " << c.radius_resamples
       << "\nmethods = ";
    for (std::size_t i = 0; i < c.methods.size(); ++i) os << (i ? "," : "") << method_tag(c.methods[i]);
    os << "\nseed = " << c.seed << '\n';
    return os.str();
}

inline std::string hex64(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline std::string file_hash(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return "fnv1a64:" + hex64(detail::fnv1a64(buf.str()));
}

// ----------------------------------------------------------------------------
// Artifact writers
// ----------------------------------------------------------------------------

inline void write_diagnostics(std::ostream& os, Method m, const std::vector<StagePolicy>& stages) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    const int d = stages.empty() ? 0 : stages.front().feature_moments;
    os << "method,t,index,wealth";
    for (int k = 1; k <= d; ++k) os << ",m" << k;
    os << ",value,action,gamma,quantile,radius,cap_hit\n";
    for (const auto& st : stages) {
        for (std::size_t i = 0; i < st.design.size(); ++i) {
            const auto& dd = st.design[i];
            os << method_name(m) << ',' << st.t << ',' << i;
            for (double f : dd.features) os << ',' << f;
            os << ',' << dd.value << ',' << dd.action << ',' << dd.gamma << ',' << dd.quantile << ',' << dd.radius
               << ',' << (dd.cap_hit ? 1 : 0) << '\n';
        }
    }
}

inline void save_policies(std::ostream& os, Method m, const std::vector<StagePolicy>& stages) {
    os << "narc-policy 1\nmethod " << method_name(m) << "\nstages " << stages.size() << "\nfeature_moments "
       << (stages.empty() ? 0 : stages.front().feature_moments) << '\n';
    for (const auto& st : stages) {
        os << "stage " << st.t << '\n';
        st.policy->save(os);
    }
}

/// Policy surrogates only; value surrogates and design diagnostics are not stored.
inline std::vector<StagePolicy> load_policies(std::istream& is) {
    auto expect = [&](const std::string& key) {
        std::string got;
        if (!(is >> got) || got != key) throw InvalidInput("policy file: expected '" + key + "'");
    };
    expect("narc-policy");
    int version = 0;
    is >> version;
    if (version != 1) throw InvalidInput("policy file: unsupported version");
    std::string method;
    std::size_t n = 0;
    int d = 0;
    expect("method");
    is >> method;
    expect("stages");
    is >> n;
    expect("feature_moments");
    is >> d;
    if (!is) throw InvalidInput("policy file: malformed header");
    std::vector<StagePolicy> out(n);
    for (std::size_t t = 0; t < n; ++t) {
        expect("stage");
        is >> out[t].t;
        out[t].feature_moments = d;
        out[t].policy = std::make_shared<const GPSurrogate>(GPSurrogate::load(is));
    }
    return out;
}

struct RadiusPathPoint {
    int t = 0;
    AmbiguityRadius radius;
};

/// Extends the history with fresh draws from the true law and records the
/// radius after each observation (bridge batch per t from its own substream).
inline std::vector<RadiusPathPoint> radius_path(const Problem& problem, const SolverConfig& cfg, int steps,
                                                const Rng& rng) {
    std::vector<RadiusPathPoint> out;
    Rng obs = rng.split("observations");
    EmpiricalDistribution f = problem.history;
    for (int t = 0; t <= steps; ++t) {
        if (t > 0) f = f.updated(problem.model.sample(obs));
        Rng b = rng.split("bridge").split(static_cast<std::uint64_t>(t));
        out.push_back({t, radius(f, cfg.alpha, cfg.n_bridge_sims, b)});
    }
    return out;
}

inline void write_radius_path(std::ostream& os, const std::vector<RadiusPathPoint>& path) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "t,n,quantile,radius,scaled_radius\n";
    for (const auto& p : path)
        os << p.t << ',' << p.radius.t0_plus_t << ',' << p.radius.quantile_value << ',' << p.radius.radius << ','
           << p.radius.radius * std::sqrt(static_cast<double>(p.radius.t0_plus_t)) << '\n';
}

/// Mode (a): H-values for one fixed history. Mode (b): the (1 - alpha)
/// quantile across re-drawn histories of the same size.
struct RadiusSimulation {
    std::vector<double> h_values;
    double h_quantile = 0.0;
    std::vector<double> resampled_quantiles;
};

inline RadiusSimulation simulate_radius(const ExperimentConfig& c, bool fixed, bool resample) {
    RadiusSimulation out;
    const Problem problem = make_problem(c);
    const Rng base = master_rng(c).split("radius-path");
    if (fixed) {
        Rng b = base.split("fixed");
        const BridgeBatch batch(problem.history.count() - 1, c.solver.n_bridge_sims, b);
        out.h_values = batch.functionals(problem.history);
        out.h_quantile = EmpiricalDistribution(out.h_values).quantile(1.0 - c.solver.alpha);
    }
    if (resample) {
        const Rng hist_rng = base.split("histories");
        const Rng bridge_rng = base.split("resample-bridge");
        out.resampled_quantiles.resize(static_cast<std::size_t>(c.radius_resamples));
        parallel_for(out.resampled_quantiles.size(), c.solver.threads, [&](std::size_t i, int) {
            Rng h = hist_rng.split(i);
            const EmpiricalDistribution f(problem.model.sample(h, static_cast<std::size_t>(c.t0)));
            Rng b = bridge_rng.split(i);
            out.resampled_quantiles[i] = radius(f, c.solver.alpha, c.solver.n_bridge_sims, b).quantile_value;
        });
    }
    return out;
}

// ----------------------------------------------------------------------------
// Run bookkeeping
// ----------------------------------------------------------------------------

class RunDirectory {
public:
    RunDirectory(const ExperimentConfig& c, std::string command) : cfg_(c), command_(std::move(command)) {
        dir_ = c.out_dir;
        std::filesystem::create_directories(dir_);
        std::filesystem::remove(dir_ / "FAILED");
        log_.open(dir_ / "run.log", std::ios::trunc);
        log::set_sink([this](const std::string& line) {
            log_ << line << '\n';
            log_.flush();
        });
        const std::string canon = canonical_config(c);
        config_hash_ = "fnv1a64:" + hex64(detail::fnv1a64(canon));
        write("effective_config.cfg", [&](std::ostream& os) { os << canon; });
    }

    ~RunDirectory() { log::set_sink({}); }

    RunDirectory(const RunDirectory&) = delete;
    RunDirectory& operator=(const RunDirectory&) = delete;

    template <class Fn>
    void write(const std::string& name, Fn&& fn) {
        std::ofstream os(dir_ / name, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
        fn(os);
        if (!os) throw std::runtime_error("write failed for " + (dir_ / name).string());
        if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    }

    void finish(bool ok, const std::string& error = "") {
        log::set_sink({});
        log_.close();
        if (!ok) {
            std::ofstream f(dir_ / "FAILED", std::ios::trunc);
            f << error << '\n';
        }
        std::ofstream m(dir_ / "run_manifest.txt", std::ios::trunc);
        m << "command = " << command_ << "\nstatus = " << (ok ? "ok" : "failed") << "\nseed = " << cfg_.seed
          << "\nhistory_seed = master/history\nsolve_seed = master/solve\nevaluation_seed = "
          << (cfg_.eval_seed ? std::to_string(*cfg_.eval_seed) + "/evaluation" : std::string("master/evaluation"))
          << "\nradius_seed = master/radius-path\nthreads = " << resolve_threads(cfg_.solver.threads)
          << "\nconfig_hash = " << config_hash_ << '\n';
        if (!ok) m << "error = " << error << '\n';
        std::vector<std::string> names = files_;
        names.push_back("run.log");
        if (!ok) names.push_back("FAILED");
        for (const auto& n : names)
            if (std::filesystem::exists(dir_ / n)) m << "file " << n << ' ' << file_hash(dir_ / n) << '\n';
    }

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return dir_; }

private:
    ExperimentConfig cfg_;
    std::string command_;
    std::filesystem::path dir_;
    std::ofstream log_;
    std::string config_hash_;
    std::vector<std::string> files_;
};

struct RunResult {
    int status = 0;
    std::string error;
    std::vector<EvaluationReport> reports;
    std::filesystem::path out_dir;
};

/// `solve` writes diagnostics and policies; `compare` also evaluates every
/// method on common out-of-sample noise and writes reports and the radius path.
inline RunResult run_experiment(const ExperimentConfig& c, RunMode mode = RunMode::compare) {
    RunResult res;
    res.out_dir = c.out_dir;
    RunDirectory run(c, mode == RunMode::compare ? "compare" : "solve");
    try {
        if (c.methods.empty()) {
            log::info("no methods requested");
            run.finish(true);
            return res;
        }
        const Problem problem = make_problem(c);
        const Rng solve_rng = master_rng(c).split("solve");
        log::info("history: n=" + std::to_string(problem.history.count()) + " mean=" +
                  std::to_string(problem.history.mean()) + " sd=" + std::to_string(problem.history.stddev()));
        for (Method m : c.methods) {
            const SolverConfig scfg = solver_config_for(c, m);
            log::info("solving " + std::string(method_name(m)) + " with " + std::to_string(scfg.n_design_points) +
                      " design points");
            const SolveResult sol = solve_method(m, problem, scfg, solve_rng);
            if (m != Method::ar)
                log::info(std::string(method_name(m)) + " radius " + std::to_string(sol.setup.frozen_radius.radius) +
                          " (quantile " + std::to_string(sol.setup.frozen_radius.quantile_value) + ")");
            log::info(std::string(method_name(m)) + " gamma cap hits: " + std::to_string(sol.cap_hits));
            const std::string tag = method_tag(m);
            run.write("diagnostics_" + tag + ".csv", [&](std::ostream& os) { write_diagnostics(os, m, sol.stages); });
            run.write("policy_" + tag + ".txt", [&](std::ostream& os) { save_policies(os, m, sol.stages); });
            if (mode == RunMode::compare) {
                auto rep = forward_evaluate(sol.stages, problem, c.n_eval_paths, evaluation_rng(c), scfg.threads,
                                            method_name(m));
                run.write("report_" + tag + ".csv", [&](std::ostream& os) {
                    write_summary_header(os);
                    write_summary_row(os, rep, c.seed);
                });
                run.write("utilities_" + tag + ".csv", [&](std::ostream& os) { write_utilities(os, rep); });
                res.reports.push_back(std::move(rep));
            }
        }
        if (mode == RunMode::compare) {
            run.write("summary.csv", [&](std::ostream& os) {
                write_summary_header(os);
                for (const auto& r : res.reports) write_summary_row(os, r, c.seed);
            });
            const auto path = radius_path(problem, c.solver, c.radius_path_steps, master_rng(c).split("radius-path"));
            run.write("radius_path.csv", [&](std::ostream& os) { write_radius_path(os, path); });
        }
        run.finish(true);
    } catch (const std::exception& e) {
        res.status = 1;
        res.error = e.what();
        run.finish(false, e.what());
    }
    return res;
}

/// Evaluates saved policy files (policy_<method>.txt in policy_dir).
inline RunResult run_evaluation(const ExperimentConfig& c, const std::filesystem::path& policy_dir) {
    RunResult res;
    res.out_dir = c.out_dir;
    RunDirectory run(c, "evaluate");
    try {
        const Problem problem = make_problem(c);
        for (Method m : c.methods) {
            const auto file = policy_dir / ("policy_" + method_tag(m) + ".txt");
            std::ifstream in(file);
            if (!in) throw std::runtime_error("cannot open " + file.string());
            const auto stages = load_policies(in);
            auto rep =
                forward_evaluate(stages, problem, c.n_eval_paths, evaluation_rng(c), c.solver.threads, method_name(m));
            const std::string tag = method_tag(m);
            run.write("report_" + tag + ".csv", [&](std::ostream& os) {
                write_summary_header(os);
                write_summary_row(os, rep, c.seed);
            });
            run.write("utilities_" + tag + ".csv", [&](std::ostream& os) { write_utilities(os, rep); });
            res.reports.push_back(std::move(rep));
        }
        if (!res.reports.empty())
            run.write("summary.csv", [&](std::ostream& os) {
                write_summary_header(os);
                for (const auto& r : res.reports) write_summary_row(os, r, c.seed);
            });
        run.finish(true);
    } catch (const std::exception& e) {
        res.status = 1;
        res.error = e.what();
        run.finish(false, e.what());
    }
    return res;
}

struct RadiusSimResult {
    int status = 0;
    std::string error;
    RadiusSimulation sim;
};

inline RadiusSimResult run_radius_sim(const ExperimentConfig& c, bool fixed, bool resample) {
    RadiusSimResult res;
    RunDirectory run(c, "radius-sim");
    try {
        res.sim = simulate_radius(c, fixed, resample);
        const double alpha = c.solver.alpha;
        auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        if (fixed) run.write("radius_sim_h.csv", [&](std::ostream& os) { write_samples_csv(os, res.sim.h_values); });
        if (resample)
            run.write("radius_sim_quantiles.csv",
                      [&](std::ostream& os) { write_samples_csv(os, res.sim.resampled_quantiles); });
        run.write("radius_sim_summary.csv", [&](std::ostream& os) {
            os << std::setprecision(std::numeric_limits<double>::max_digits10);
            os << "mode,count,mean,quantile,alpha\n";
            if (fixed)
                os << "fixed," << res.sim.h_values.size() << ',' << mean(res.sim.h_values) << ','
                   << res.sim.h_quantile << ',' << alpha << '\n';
            if (resample)
                os << "resample," << res.sim.resampled_quantiles.size() << ',' << mean(res.sim.resampled_quantiles)
                   << ',' << EmpiricalDistribution(res.sim.resampled_quantiles).quantile(1.0 - alpha) << ','
                   << alpha << '\n';
        });
        const Problem problem = make_problem(c);
        const auto path = radius_path(problem, c.solver, c.radius_path_steps, master_rng(c).split("radius-path"));
        run.write("radius_path.csv", [&](std::ostream& os) { write_radius_path(os, path); });
        run.finish(true);
    } catch (const std::exception& e) {
        res.status = 1;
        res.error = e.what();
        run.finish(false, e.what());
    }
    return res;
}

}  // namespace narc
