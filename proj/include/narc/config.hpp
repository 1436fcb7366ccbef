#pragma once

// Flat experiment configuration: one `key = value` per line, `#` starts a
// comment. Unknown keys, duplicates, malformed values and out-of-range values
// raise ConfigError naming the key and the line.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "narc/error.hpp"
#include "narc/market.hpp"
#include "narc/solver.hpp"

namespace narc {

struct ExperimentConfig {
    MarketParams market;
    int t0 = 20;
    std::vector<double> mixture_weights;
    std::vector<double> mixture_means;
    std::vector<double> mixture_variances;

    SolverConfig solver;
    int n_design_ar = 1000;
    int n_design_other = 200;

    std::size_t n_eval_paths = 1000;
    std::optional<std::uint64_t> eval_seed;

    // radius_path.csv: one fresh path of this many observations past t0.
    int radius_path_steps = 200;
    // radius-sim across re-drawn histories.
    int radius_resamples = 200;

    std::vector<Method> methods{Method::ar, Method::tr, Method::sr};
    std::string out_dir = "out";
    std::uint64_t seed = 1;

    [[nodiscard]] MixtureModel mixture() const {
        std::vector<MixtureComponent> comps;
        for (std::size_t i = 0; i < mixture_weights.size(); ++i)
            comps.push_back({mixture_weights[i], mixture_means[i], std::sqrt(mixture_variances[i])});
        return MixtureModel(std::move(comps));
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

struct Entry {
    std::string value;
    int line = 0;
};

class ConfigReader {
public:
    ConfigReader(std::map<std::string, Entry> entries, std::string source)
        : entries_(std::move(entries)), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        const auto it = entries_.find(key);
        std::string where = source_;
        if (it != entries_.end()) where += ":" + std::to_string(it->second.line);
        throw ConfigError(where + ": key '" + key + "': " + what);
    }

    [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }

    double real(const std::string& key, std::function<bool(double)> ok = {}, const char* range = "") const {
        const std::string& s = entries_.at(key).value;
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
            fail(key, "expected a real number, got '" + s + "'");
        if (ok && !ok(v)) fail(key, std::string("out of range: ") + range);
        return v;
    }

    long long integer(const std::string& key, long long lo, long long hi) const {
        const std::string& s = entries_.at(key).value;
        long long v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) fail(key, "expected an integer, got '" + s + "'");
        if (v < lo || v > hi)
            fail(key, "out of range: must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return v;
    }

    std::uint64_t unsigned64(const std::string& key) const {
        const std::string& s = entries_.at(key).value;
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size())
            fail(key, "expected an unsigned integer, got '" + s + "'");
        return v;
    }

    bool boolean(const std::string& key) const {
        const std::string& s = entries_.at(key).value;
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        fail(key, "expected true or false, got '" + s + "'");
    }

    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split_list(entries_.at(key).value)) {
            double v = 0.0;
            const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            if (item.empty() || ec != std::errc{} || p != item.data() + item.size() || !std::isfinite(v))
                fail(key, "expected a comma-separated list of reals, got '" + entries_.at(key).value + "'");
            out.push_back(v);
        }
        return out;
    }

    const std::string& text(const std::string& key) const { return entries_.at(key).value; }

private:
    std::map<std::string, Entry> entries_;
    std::string source_;
};

inline const std::vector<std::string>& required_keys() {
    static const std::vector<std::string> keys{"r",  "eta", "T", "x0", "t0", "mixture.weights", "mixture.means",
                                               "mixture.variances"};
    return keys;
}

inline const std::set<std::string>& optional_keys() {
    static const std::set<std::string> keys{
        "utility",          "n_design_ar",     "n_design_other",   "d",
        "alpha",            "n_bridge_sims",   "tol",              "gamma_cap_factor",
        "z_bracket_spread", "z_grid_points",   "true_grid_points", "true_sample_size",
        "common_random_numbers", "q0_override", "quantile_override", "gp.restarts",
        "gp.max_iter",      "gp.max_likelihood_points", "n_eval_paths", "eval_seed",
        "radius_path_steps", "radius_resamples", "methods",         "out",
        "seed",             "threads"};
    return keys;
}

}  // namespace detail

inline std::vector<Method> parse_methods(const std::string& list) {
    std::vector<Method> out;
    for (auto item : detail::split_list(list)) {
        std::transform(item.begin(), item.end(), item.begin(), [](unsigned char c) { return std::tolower(c); });
        if (item.empty()) continue;
        Method m;
        if (item == "ar")
            m = Method::ar;
        else if (item == "tr")
            m = Method::tr;
        else if (item == "sr")
            m = Method::sr;
        else
            throw ConfigError("unknown method '" + item + "' (expected ar, tr or sr)");
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    return out;
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    std::map<std::string, detail::Entry> entries;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
        const auto& req = detail::required_keys();
        if (std::find(req.begin(), req.end(), key) == req.end() && !detail::optional_keys().count(key))
            throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (entries.count(key))
            throw ConfigError(source + ":" + std::to_string(line_no) + ": key '" + key + "' repeats line " +
                              std::to_string(entries[key].line));
        if (value.empty() && key != "methods")
            throw ConfigError(source + ":" + std::to_string(line_no) + ": key '" + key + "' has no value");
        entries[key] = {value, line_no};
    }

    std::vector<std::string> missing;
    for (const auto& k : detail::required_keys())
        if (!entries.count(k)) missing.push_back(k);
    if (!missing.empty()) {
        std::string msg = source + ": missing required key(s):";
        for (const auto& k : missing) msg += " " + k;
        throw ConfigError(msg);
    }

    const detail::ConfigReader rd(std::move(entries), source);
    ExperimentConfig c;
    auto positive = [](double v) { return v > 0.0; };

    c.market.r = rd.real("r", [](double v) { return v > -1.0; }, "r > -1");
    c.market.eta = rd.real("eta", positive, "eta > 0");
    c.market.horizon = static_cast<int>(rd.integer("T", 1, 100000));
    c.market.x0 = rd.real("x0", positive, "x0 > 0");
    c.t0 = static_cast<int>(rd.integer("t0", 2, 10000000));
    if (rd.has("utility")) {
        const auto& u = rd.text("utility");
        if (u == "exponential")
            c.market.utility = UtilityKind::exponential;
        else if (u == "power")
            c.market.utility = UtilityKind::power;
        else
            rd.fail("utility", "expected exponential or power, got '" + u + "'");
        if (c.market.utility == UtilityKind::power && c.market.eta == 1.0)
            rd.fail("utility", "power utility needs eta != 1");
    }

    c.mixture_weights = rd.reals("mixture.weights");
    c.mixture_means = rd.reals("mixture.means");
    c.mixture_variances = rd.reals("mixture.variances");
    if (c.mixture_means.size() != c.mixture_weights.size())
        rd.fail("mixture.means", "needs one entry per weight");
    if (c.mixture_variances.size() != c.mixture_weights.size())
        rd.fail("mixture.variances", "needs one entry per weight");
    double total = 0.0;
    for (double w : c.mixture_weights) {
        if (!(w > 0.0)) rd.fail("mixture.weights", "weights must be positive");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) rd.fail("mixture.weights", "weights must sum to one");
    for (double v : c.mixture_variances)
        if (!(v > 0.0)) rd.fail("mixture.variances", "variances must be positive");

    auto& s = c.solver;
    if (rd.has("n_design_ar")) c.n_design_ar = static_cast<int>(rd.integer("n_design_ar", 1, 10000000));
    if (rd.has("n_design_other")) c.n_design_other = static_cast<int>(rd.integer("n_design_other", 1, 10000000));
    if (rd.has("d")) s.d = static_cast<int>(rd.integer("d", 1, 64));
    if (rd.has("alpha")) s.alpha = rd.real("alpha", [](double v) { return v > 0.0 && v < 1.0; }, "0 < alpha < 1");
    if (rd.has("n_bridge_sims")) s.n_bridge_sims = static_cast<int>(rd.integer("n_bridge_sims", 1, 100000000));
    if (rd.has("tol")) s.tol = rd.real("tol", positive, "tol > 0");
    if (rd.has("gamma_cap_factor"))
        s.gamma_cap_factor = rd.real("gamma_cap_factor", positive, "gamma_cap_factor > 0");
    if (rd.has("z_bracket_spread"))
        s.z_bracket_spread = rd.real("z_bracket_spread", positive, "z_bracket_spread > 0");
    if (rd.has("z_grid_points")) s.z_grid_points = static_cast<int>(rd.integer("z_grid_points", 2, 1000000));
    if (rd.has("true_grid_points"))
        s.true_grid_points = static_cast<int>(rd.integer("true_grid_points", 2, 1000000));
    if (rd.has("true_sample_size"))
        s.true_sample_size = static_cast<std::size_t>(rd.integer("true_sample_size", 2, 100000000));
    if (rd.has("common_random_numbers")) s.common_random_numbers = rd.boolean("common_random_numbers");
    auto nonneg = [](double v) { return v >= 0.0; };
    if (rd.has("q0_override")) s.q0_override = rd.real("q0_override", nonneg, "q0_override >= 0");
    if (rd.has("quantile_override"))
        s.quantile_override = rd.real("quantile_override", nonneg, "quantile_override >= 0");
    if (rd.has("gp.restarts")) s.gp.restarts = static_cast<int>(rd.integer("gp.restarts", 1, 1000));
    if (rd.has("gp.max_iter")) s.gp.max_iter = static_cast<int>(rd.integer("gp.max_iter", 1, 1000000));
    if (rd.has("gp.max_likelihood_points"))
        s.gp.max_likelihood_points = static_cast<std::size_t>(rd.integer("gp.max_likelihood_points", 2, 1000000));

    if (rd.has("n_eval_paths")) c.n_eval_paths = static_cast<std::size_t>(rd.integer("n_eval_paths", 1, 100000000));
    if (rd.has("eval_seed")) c.eval_seed = rd.unsigned64("eval_seed");
    if (rd.has("radius_path_steps")) c.radius_path_steps = static_cast<int>(rd.integer("radius_path_steps", 0, 1000000));
    if (rd.has("radius_resamples")) c.radius_resamples = static_cast<int>(rd.integer("radius_resamples", 1, 1000000));
    if (rd.has("methods")) {
        try {
            c.methods = parse_methods(rd.text("methods"));
        } catch (const ConfigError& e) {
            rd.fail("methods", e.what());
        }
    }
    if (rd.has("out")) c.out_dir = rd.text("out");
    if (rd.has("seed")) c.seed = rd.unsigned64("seed");
    if (rd.has("threads")) s.threads = static_cast<int>(rd.integer("threads", 0, 4096));
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, path);
}

}  // namespace narc
