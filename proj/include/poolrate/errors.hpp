#ifndef POOLRATE_ERRORS_HPP
#define POOLRATE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace poolrate {

// Malformed inputs: bad distributions, alphabet mismatches, schema violations.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Query outside the valid domain (distortion range, probability range, support).
struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Iterative solver failed to reach its tolerance.
struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& msg, double gap)
        : std::runtime_error(msg), last_gap(gap) {}
    double last_gap;
};

// Enumeration would exceed the configured budget.
struct BudgetError : std::runtime_error {
    BudgetError(const std::string& msg, double required)
        : std::runtime_error(msg), required_budget(required) {}
    double required_budget;
};

} // namespace poolrate

#endif
