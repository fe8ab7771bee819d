#ifndef MUPOST_ERRORS_HPP
#define MUPOST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mupost {

/// Bad user input: unreadable files, malformed lines, invalid options.
/// The CLI maps this family to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated domain preconditions (bounds, dimensions, constraints).
/// Also exit code 2 at the CLI boundary.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Runtime numerical failures: NaN losses, diverged optimizers, chains
/// that cannot make progress. Exit code 3 at the CLI boundary.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rejection sampling gave up below the minimum acceptance rate.
class LowAcceptanceError : public NumericError {
public:
    LowAcceptanceError(const std::string& msg, double fraction)
        : NumericError(msg), accepted_fraction(fraction) {}
    double accepted_fraction;
};

} // namespace mupost

#endif
