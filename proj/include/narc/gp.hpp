#pragma once

// Gaussian-process regression with an anisotropic Matern-5/2 kernel.
//
// Inputs are standardized per dimension and targets centered; the posterior
// mean is
//     m(q) = out_mean + k(q, X) [K + nugget I]^{-1} (y - out_mean).
// Hyperparameters (lengthscales and a noise-to-signal ratio) maximize the
// exact log-marginal likelihood with the signal variance profiled out, using
// Nelder-Mead restarted from a jittered log-space Latin grid.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "narc/error.hpp"
#include "narc/optimize.hpp"
#include "narc/rng.hpp"

namespace narc {

inline double matern52_r2(double rho2, double signal_variance) noexcept {
    const double s = std::sqrt(5.0 * rho2);
    return signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

/// sigma^2 (1 + sqrt5 rho + 5 rho^2 / 3) e^{-sqrt5 rho}, rho the scaled distance.
inline double matern52(std::span<const double> u, std::span<const double> v, std::span<const double> lengthscales,
                       double signal_variance) {
    detail::require(u.size() == v.size() && u.size() == lengthscales.size(), "matern52 dimension mismatch");
    detail::require(signal_variance > 0.0, "signal variance must be positive");
    double rho2 = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        detail::require(lengthscales[i] > 0.0, "lengthscales must be positive");
        const double d = (u[i] - v[i]) / lengthscales[i];
        rho2 += d * d;
    }
    return matern52_r2(rho2, signal_variance);
}

struct GPConfig {
    bool optimize = true;
    bool normalize = true;
    int restarts = 5;
    int max_iter = 200;
    // Hyperparameter search runs on at most this many training points.
    std::size_t max_likelihood_points = 200;
    double nugget_ratio_min = 1e-8;
    double nugget_ratio_max = 1e-2;
    double lengthscale_min = 0.05;
    double lengthscale_max = 50.0;
    std::uint64_t seed = 0;

    // Used as-is when optimize == false (lengthscales in standardized units).
    std::vector<double> lengthscales;
    double signal_variance = 1.0;
    double nugget = 0.0;
};

struct GPFitReport {
    std::vector<double> initial_lml;  // one per restart, on the likelihood subset
    double final_lml = -std::numeric_limits<double>::infinity();
    int nugget_escalations = 0;
};

class GPSurrogate {
public:
    GPSurrogate() = default;

    /// inputs: N x D, one row per training point.
    static GPSurrogate fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const GPConfig& cfg = {}) {
        detail::require(inputs.rows() >= 1 && inputs.rows() == targets.size(), "training set size mismatch");
        detail::require(inputs.cols() >= 1, "training inputs need at least one dimension");
        detail::require(inputs.allFinite() && targets.allFinite(), "training data must be finite");

        GPSurrogate gp;
        gp.raw_inputs_ = inputs;
        gp.targets_ = targets;
        gp.set_scalers(cfg.normalize);
        const Eigen::VectorXd yc = gp.centered_targets();
        const auto d = static_cast<std::size_t>(inputs.cols());

        const double spread = yc.cwiseAbs().maxCoeff();
        if (spread <= 1e-14 * (1.0 + std::abs(gp.out_mean_))) {
            gp.lengthscales_.assign(d, 1.0);
            gp.signal_variance_ = 1.0;
            gp.nugget_ = 0.0;
            gp.constant_ = true;
            gp.weights_ = Eigen::VectorXd::Zero(inputs.rows());
            gp.build_scaled_inputs();
            return gp;
        }

        if (cfg.optimize) {
            gp.optimize_hyperparameters(yc, cfg);
        } else {
            detail::require(cfg.lengthscales.size() == d, "fixed lengthscales must match input dimension");
            detail::require(cfg.signal_variance > 0.0, "signal variance must be positive");
            detail::require(cfg.nugget >= 0.0, "nugget must be nonnegative");
            gp.lengthscales_ = cfg.lengthscales;
            gp.signal_variance_ = cfg.signal_variance;
            gp.nugget_ = cfg.nugget;
        }
        gp.factorize(cfg.nugget_ratio_max);
        return gp;
    }

    [[nodiscard]] std::size_t dims() const noexcept { return static_cast<std::size_t>(raw_inputs_.cols()); }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(raw_inputs_.rows()); }
    [[nodiscard]] const std::vector<double>& lengthscales() const noexcept { return lengthscales_; }
    [[nodiscard]] double signal_variance() const noexcept { return signal_variance_; }
    [[nodiscard]] double nugget() const noexcept { return nugget_; }
    [[nodiscard]] double output_mean() const noexcept { return out_mean_; }
    [[nodiscard]] bool is_constant() const noexcept { return constant_; }
    [[nodiscard]] const Eigen::VectorXd& weights() const noexcept { return weights_; }
    [[nodiscard]] const Eigen::MatrixXd& chol_factor() const noexcept { return chol_; }
    [[nodiscard]] const Eigen::MatrixXd& train_inputs() const noexcept { return raw_inputs_; }
    [[nodiscard]] const Eigen::VectorXd& train_targets() const noexcept { return targets_; }
    [[nodiscard]] const GPFitReport& report() const noexcept { return report_; }

    /// K + nugget I at the fitted hyperparameters.
    [[nodiscard]] Eigen::MatrixXd covariance() const {
        Eigen::MatrixXd k = kernel_matrix(scaled_rows(), signal_variance_);
        k.diagonal().array() += nugget_;
        return k;
    }

    /// Query mapped into the standardized, lengthscale-divided coordinates.
    [[nodiscard]] std::vector<double> scaled_query(std::span<const double> q) const {
        detail::require(q.size() == dims(), "query dimension mismatch");
        std::vector<double> s(q.size());
        for (std::size_t j = 0; j < q.size(); ++j) s[j] = scale_coord(j, q[j]);
        return s;
    }

    [[nodiscard]] double scale_coord(std::size_t j, double v) const noexcept {
        return (v - in_mean_[j]) / in_scale_[j] / lengthscales_[j];
    }

    /// Column j of the scaled training inputs.
    [[nodiscard]] std::span<const double> scaled_column(std::size_t j) const noexcept { return scaled_cols_[j]; }

    /// Posterior mean from a precomputed squared scaled distance to every
    /// training point.
    [[nodiscard]] double predict_from_r2(std::span<const double> rho2) const noexcept {
        if (constant_) return out_mean_;
        double acc = 0.0;
        for (std::size_t k = 0; k < rho2.size(); ++k) acc += matern52_r2(rho2[k], signal_variance_) * weights_[static_cast<Eigen::Index>(k)];
        return out_mean_ + acc;
    }

    [[nodiscard]] double predict(std::span<const double> query) const {
        const auto s = scaled_query(query);
        if (constant_) return out_mean_;
        double acc = 0.0;
        for (std::size_t k = 0; k < size(); ++k) {
            double r2 = 0.0;
            for (std::size_t j = 0; j < s.size(); ++j) {
                const double diff = s[j] - scaled_cols_[j][k];
                r2 += diff * diff;
            }
            acc += matern52_r2(r2, signal_variance_) * weights_[static_cast<Eigen::Index>(k)];
        }
        return out_mean_ + acc;
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& queries) const {
        Eigen::VectorXd out(queries.rows());
        std::vector<double> q(dims());
        for (Eigen::Index i = 0; i < queries.rows(); ++i) {
            for (std::size_t j = 0; j < dims(); ++j) q[j] = queries(i, static_cast<Eigen::Index>(j));
            out[i] = predict(q);
        }
        return out;
    }

    /// Concentrated log-marginal likelihood for standardized lengthscales and
    /// a noise-to-signal ratio, evaluated on the given rows. Returns -inf when
    /// the system is not positive definite.
    [[nodiscard]] double profile_lml(const std::vector<double>& lengthscales, double nugget_ratio,
                                     std::span<const Eigen::Index> rows) const {
        const auto n = static_cast<Eigen::Index>(rows.size());
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dims()));
        Eigen::VectorXd y(n);
        const Eigen::VectorXd yc = centered_targets();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < dims(); ++j)
                x(i, static_cast<Eigen::Index>(j)) =
                    (raw_inputs_(rows[static_cast<std::size_t>(i)], static_cast<Eigen::Index>(j)) - in_mean_[j]) /
                    in_scale_[j] / lengthscales[j];
            y[i] = yc[rows[static_cast<std::size_t>(i)]];
        }
        Eigen::MatrixXd k = kernel_matrix(x, 1.0);
        k.diagonal().array() += nugget_ratio;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
        const Eigen::VectorXd alpha = llt.solve(y);
        const double sigma2 = y.dot(alpha) / static_cast<double>(n);
        if (!(sigma2 > 0.0)) return -std::numeric_limits<double>::infinity();
        const Eigen::MatrixXd l = llt.matrixL();
        const double log_det_half = l.diagonal().array().log().sum();
        const double nd = static_cast<double>(n);
        return -0.5 * nd * std::log(sigma2) - log_det_half - 0.5 * nd * (std::log(2.0 * std::numbers::pi) + 1.0);
    }

    // Text format: header, hyperparameters, scalers, then the raw training set.
    void save(std::ostream& os) const {
        const auto old = os.precision(std::numeric_limits<double>::max_digits10);
        os << "narc-gp 1\n";
        os << "dims " << dims() << "\nsize " << size() << "\nconstant " << (constant_ ? 1 : 0) << '\n';
        os << "signal_variance " << signal_variance_ << "\nnugget " << nugget_ << "\nout_mean " << out_mean_ << '\n';
        auto row = [&](const char* name, const std::vector<double>& v) {
            os << name;
            for (double x : v) os << ' ' << x;
            os << '\n';
        };
        row("lengthscales", lengthscales_);
        row("in_mean", in_mean_);
        row("in_scale", in_scale_);
        os << "train\n";
        for (Eigen::Index i = 0; i < raw_inputs_.rows(); ++i) {
            for (Eigen::Index j = 0; j < raw_inputs_.cols(); ++j) os << raw_inputs_(i, j) << ',';
            os << targets_[i] << '\n';
        }
        os.precision(old);
    }

    static GPSurrogate load(std::istream& is) {
        auto expect = [&](const std::string& key) {
            std::string got;
            if (!(is >> got) || got != key) throw InvalidInput("surrogate file: expected '" + key + "'");
        };
        auto read_double = [&]() {
            std::string tok;
            if (!(is >> tok)) throw InvalidInput("surrogate file: truncated");
            return std::stod(tok);
        };
        expect("narc-gp");
        int version = 0;
        is >> version;
        if (version != 1) throw InvalidInput("surrogate file: unsupported version");
        std::size_t d = 0, n = 0;
        int constant = 0;
        expect("dims");
        is >> d;
        expect("size");
        is >> n;
        expect("constant");
        is >> constant;
        GPSurrogate gp;
        expect("signal_variance");
        gp.signal_variance_ = read_double();
        expect("nugget");
        gp.nugget_ = read_double();
        expect("out_mean");
        gp.out_mean_ = read_double();
        auto read_row = [&](const char* name, std::vector<double>& v) {
            expect(name);
            v.resize(d);
            for (auto& x : v) x = read_double();
        };
        read_row("lengthscales", gp.lengthscales_);
        read_row("in_mean", gp.in_mean_);
        read_row("in_scale", gp.in_scale_);
        expect("train");
        gp.raw_inputs_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        gp.targets_.resize(static_cast<Eigen::Index>(n));
        std::string line;
        std::getline(is, line);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::getline(is, line)) throw InvalidInput("surrogate file: truncated training set");
            std::size_t pos = 0;
            for (std::size_t j = 0; j <= d; ++j) {
                const auto next = line.find(',', pos);
                const double v = std::stod(line.substr(pos, next - pos));
                if (j < d)
                    gp.raw_inputs_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
                else
                    gp.targets_[static_cast<Eigen::Index>(i)] = v;
                pos = next + 1;
            }
        }
        gp.constant_ = constant != 0;
        if (gp.constant_) {
            gp.weights_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
            gp.build_scaled_inputs();
        } else {
            gp.factorize(std::numeric_limits<double>::infinity());
        }
        return gp;
    }

private:
    void set_scalers(bool normalize) {
        const auto d = static_cast<std::size_t>(raw_inputs_.cols());
        const double n = static_cast<double>(raw_inputs_.rows());
        in_mean_.assign(d, 0.0);
        in_scale_.assign(d, 1.0);
        if (normalize) {
            for (std::size_t j = 0; j < d; ++j) {
                const auto col = raw_inputs_.col(static_cast<Eigen::Index>(j));
                const double mu = col.mean();
                const double var = (col.array() - mu).square().sum() / n;
                in_mean_[j] = mu;
                const double sd = std::sqrt(var);
                in_scale_[j] = sd > 1e-12 * (1.0 + std::abs(mu)) ? sd : 1.0;
            }
            out_mean_ = targets_.mean();
        } else {
            out_mean_ = 0.0;
        }
    }

    [[nodiscard]] Eigen::VectorXd centered_targets() const {
        return (targets_.array() - out_mean_).matrix();
    }

    [[nodiscard]] Eigen::MatrixXd scaled_rows() const {
        Eigen::MatrixXd x(raw_inputs_.rows(), raw_inputs_.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = scaled_cols_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        return x;
    }

    static Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x, double signal_variance) {
        const Eigen::Index n = x.rows();
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k(i, i) = signal_variance;
            for (Eigen::Index j = 0; j < i; ++j) {
                const double r2 = (x.row(i) - x.row(j)).squaredNorm();
                k(i, j) = k(j, i) = matern52_r2(r2, signal_variance);
            }
        }
        return k;
    }

    void build_scaled_inputs() {
        const auto d = dims();
        scaled_cols_.assign(d, std::vector<double>(size()));
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < size(); ++i)
                scaled_cols_[j][i] = scale_coord(j, raw_inputs_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }

    void optimize_hyperparameters(const Eigen::VectorXd& yc, const GPConfig& cfg) {
        const std::size_t d = dims();
        const std::size_t n = size();
        Rng rng = Rng(cfg.seed).split("gp-restarts");

        // Likelihood subset: a seeded partial shuffle when the set is large.
        std::vector<Eigen::Index> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<Eigen::Index>(i);
        if (n > cfg.max_likelihood_points) {
            for (std::size_t i = 0; i < cfg.max_likelihood_points; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - i));
                std::swap(rows[i], rows[std::min(j, n - 1)]);
            }
            rows.resize(cfg.max_likelihood_points);
            std::sort(rows.begin(), rows.end());
        }

        std::vector<double> lower(d + 1), upper(d + 1);
        for (std::size_t j = 0; j < d; ++j) {
            lower[j] = std::log(cfg.lengthscale_min);
            upper[j] = std::log(cfg.lengthscale_max);
        }
        lower[d] = std::log(cfg.nugget_ratio_min);
        upper[d] = std::log(cfg.nugget_ratio_max);

        auto unpack = [&](const std::vector<double>& theta, std::vector<double>& ls) {
            ls.resize(d);
            for (std::size_t j = 0; j < d; ++j) ls[j] = std::exp(theta[j]);
            return std::exp(theta[d]);
        };
        std::vector<double> ls_buf;
        auto objective = [&](const std::vector<double>& theta) {
            const double ratio = unpack(theta, ls_buf);
            const double lml = profile_lml(ls_buf, ratio, rows);
            return std::isfinite(lml) ? -lml : 1e300;
        };

        // Jittered Latin grid over the central part of the log box.
        const int restarts = std::max(1, cfg.restarts);
        std::vector<std::vector<int>> strata(d + 1);
        for (auto& s : strata) {
            s.resize(static_cast<std::size_t>(restarts));
            for (int r = 0; r < restarts; ++r) s[static_cast<std::size_t>(r)] = r;
            for (int r = restarts - 1; r > 0; --r)
                std::swap(s[static_cast<std::size_t>(r)],
                          s[static_cast<std::size_t>(rng.uniform() * static_cast<double>(r + 1))]);
        }

        report_ = {};
        std::vector<double> best_theta;
        double best_f = std::numeric_limits<double>::infinity();
        for (int r = 0; r < restarts; ++r) {
            std::vector<double> start(d + 1);
            for (std::size_t j = 0; j <= d; ++j) {
                const double u = (strata[j][static_cast<std::size_t>(r)] + rng.uniform()) / restarts;
                const double lo = lower[j] + 0.15 * (upper[j] - lower[j]);
                const double hi = upper[j] - 0.35 * (upper[j] - lower[j]);
                start[j] = lo + u * (hi - lo);
            }
            const double f0 = objective(start);
            report_.initial_lml.push_back(f0 >= 1e300 ? -std::numeric_limits<double>::infinity() : -f0);
            auto res = nelder_mead(objective, start, lower, upper, cfg.max_iter, 1.0);
            if (res.fx < best_f) {
                best_f = res.fx;
                best_theta = res.x;
            }
        }
        if (best_f >= 1e300) throw FitError("no hyperparameter setting gave a positive definite kernel matrix");
        report_.final_lml = -best_f;

        const double ratio = unpack(best_theta, lengthscales_);
        // Profile estimate of the signal variance on the full training set.
        signal_variance_ = profiled_signal_variance(ratio, yc);
        nugget_ = ratio * signal_variance_;
    }

    [[nodiscard]] double profiled_signal_variance(double ratio, const Eigen::VectorXd& yc) {
        build_scaled_inputs();
        Eigen::MatrixXd k = kernel_matrix(scaled_rows(), 1.0);
        double jitter = ratio;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd kk = k;
            kk.diagonal().array() += jitter;
            Eigen::LLT<Eigen::MatrixXd> llt(kk);
            if (llt.info() == Eigen::Success) {
                const double s2 = yc.dot(llt.solve(yc)) / static_cast<double>(yc.size());
                if (s2 > 0.0 && std::isfinite(s2)) return s2;
            }
            jitter = std::max(jitter * 10.0, 1e-10);
        }
        return yc.squaredNorm() / static_cast<double>(yc.size());
    }

    void factorize(double max_ratio) {
        build_scaled_inputs();
        Eigen::MatrixXd k = kernel_matrix(scaled_rows(), signal_variance_);
        double nugget = nugget_;
        for (int attempt = 0;; ++attempt) {
            Eigen::MatrixXd kk = k;
            kk.diagonal().array() += nugget;
            Eigen::LLT<Eigen::MatrixXd> llt(kk);
            if (llt.info() == Eigen::Success) {
                chol_ = llt.matrixL();
                weights_ = llt.solve(centered_targets());
                nugget_ = nugget;
                report_.nugget_escalations = attempt;
                return;
            }
            nugget = std::max(nugget * 10.0, signal_variance_ * 1e-10);
            if (nugget > signal_variance_ * max_ratio)
                throw FitError("Cholesky factorization failed: kernel matrix is ill-conditioned even with nugget " +
                               std::to_string(nugget));
        }
    }

    Eigen::MatrixXd raw_inputs_;
    Eigen::VectorXd targets_;
    std::vector<double> in_mean_, in_scale_;
    double out_mean_ = 0.0;
    std::vector<double> lengthscales_;
    double signal_variance_ = 1.0;
    double nugget_ = 0.0;
    bool constant_ = false;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd weights_;
    std::vector<std::vector<double>> scaled_cols_;
    GPFitReport report_;
};

}  // namespace narc
