#pragma once

#include <stdexcept>
#include <string>

namespace narc {

/// Raised when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Gaussian-process fit could not produce a positive definite system.
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scalar search hit a non-finite objective value.
class SearchError : public std::runtime_error {
public:
    SearchError(const std::string& what, double abscissa)
        : std::runtime_error(what + " at x=" + std::to_string(abscissa)), abscissa_(abscissa) {}

    [[nodiscard]] double abscissa() const noexcept { return abscissa_; }

private:
    double abscissa_;
};

/// Config file problem; the message names the key (and line when known).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidInput(msg);
}

}  // namespace detail
}  // namespace narc
