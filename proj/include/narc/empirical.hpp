#pragma once

// Empirical distributions of scalar log-returns.
//
// An EmpiricalDistribution is an immutable sorted multiset of samples. Its
// CDF is the right-continuous step function #{samples <= z} / n; quantiles use
// the generalized inverse inf{z : CDF(z) >= p}. All operations are pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "narc/error.hpp"

namespace narc {

class EmpiricalDistribution {
public:
    /// Builds from an arbitrary-order sample; throws InvalidInput on an empty
    /// or non-finite sample.
    explicit EmpiricalDistribution(std::vector<double> samples) : samples_(std::move(samples)) {
        detail::require(!samples_.empty(), "empirical distribution needs at least one sample");
        for (double z : samples_)
            detail::require(std::isfinite(z), "empirical distribution sample is not finite");
        std::sort(samples_.begin(), samples_.end());
    }

    [[nodiscard]] std::size_t count() const noexcept { return samples_.size(); }
    [[nodiscard]] std::span<const double> samples() const noexcept { return samples_; }
    [[nodiscard]] double min() const noexcept { return samples_.front(); }
    [[nodiscard]] double max() const noexcept { return samples_.back(); }

    [[nodiscard]] double cdf(double z) const noexcept {
        const auto it = std::upper_bound(samples_.begin(), samples_.end(), z);
        return static_cast<double>(it - samples_.begin()) / static_cast<double>(count());
    }

    [[nodiscard]] double quantile(double p) const {
        detail::require(p > 0.0 && p <= 1.0, "quantile level must lie in (0, 1]");
        const double n = static_cast<double>(count());
        // The relative guard keeps p * n from rounding just above an integer.
        auto k = static_cast<std::size_t>(std::ceil(p * n * (1.0 - 1e-12)));
        k = std::clamp<std::size_t>(k, 1, count());
        return samples_[k - 1];
    }

    /// Raw moments m^1..m^d, summed left to right over the sorted samples.
    [[nodiscard]] std::vector<double> moments(int d) const {
        detail::require(d >= 1, "moment count must be positive");
        std::vector<double> m(static_cast<std::size_t>(d), 0.0);
        for (double z : samples_) {
            double pw = 1.0;
            for (int k = 0; k < d; ++k) {
                pw *= z;
                m[static_cast<std::size_t>(k)] += pw;
            }
        }
        for (double& v : m) v /= static_cast<double>(count());
        return m;
    }

    [[nodiscard]] double mean() const noexcept {
        double s = 0.0;
        for (double z : samples_) s += z;
        return s / static_cast<double>(count());
    }

    /// Population standard deviation (divides by n).
    [[nodiscard]] double stddev() const noexcept {
        const double mu = mean();
        double s = 0.0;
        for (double z : samples_) s += (z - mu) * (z - mu);
        return std::sqrt(s / static_cast<double>(count()));
    }

    /// The recursion F_{t+1} = (n F_t + 1{z < .}) / (n + 1).
    [[nodiscard]] EmpiricalDistribution updated(double z) const {
        detail::require(std::isfinite(z), "observation is not finite");
        EmpiricalDistribution out;
        out.samples_.reserve(samples_.size() + 1);
        const auto pos = std::upper_bound(samples_.begin(), samples_.end(), z);
        out.samples_.insert(out.samples_.end(), samples_.begin(), pos);
        out.samples_.push_back(z);
        out.samples_.insert(out.samples_.end(), pos, samples_.end());
        return out;
    }

    friend bool operator==(const EmpiricalDistribution&, const EmpiricalDistribution&) = default;

private:
    EmpiricalDistribution() = default;

    std::vector<double> samples_;
};

inline EmpiricalDistribution update_empirical(const EmpiricalDistribution& f, double z) {
    return f.updated(z);
}

inline double quantile(const EmpiricalDistribution& f, double p) { return f.quantile(p); }

inline std::vector<double> moments(const EmpiricalDistribution& f, int d) { return f.moments(d); }

namespace detail {

/// Exact integral of |F - G| over the merged breakpoints.
inline double w1_cdf_integral(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double total = 0.0;
    double prev = std::min(a.front(), b.front());
    while (i < a.size() || j < b.size()) {
        double next;
        if (j == b.size() || (i < a.size() && a[i] <= b[j]))
            next = a[i];
        else
            next = b[j];
        // CDFs are constant on [prev, next).
        const double fa = static_cast<double>(i) / n;
        const double fb = static_cast<double>(j) / m;
        total += std::abs(fa - fb) * (next - prev);
        while (i < a.size() && a[i] == next) ++i;
        while (j < b.size() && b[j] == next) ++j;
        prev = next;
    }
    return total;
}

/// (1/n) sum |a_(i) - b_(i)|; valid only for equal sample counts.
inline double w1_sorted_matching(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "sorted matching needs equal sample counts");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

}  // namespace detail

/// Wasserstein-1 distance between two empirical measures.
inline double wasserstein1(const EmpiricalDistribution& f, const EmpiricalDistribution& g) {
    if (f.count() == g.count()) return detail::w1_sorted_matching(f.samples(), g.samples());
    return detail::w1_cdf_integral(f.samples(), g.samples());
}

/// One value per line, full round-trip precision.
inline void write_samples_csv(std::ostream& os, std::span<const double> samples) {
    const auto old = os.precision(std::numeric_limits<double>::max_digits10);
    for (double z : samples) os << z << '\n';
    os.precision(old);
}

inline std::vector<double> read_samples_csv(std::istream& is) {
    std::vector<double> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            throw InvalidInput("cannot parse sample line: " + line);
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace narc
