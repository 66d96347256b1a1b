#pragma once

#include <stdexcept>
#include <string>

namespace overflow {

// Invalid configuration or inconsistent inputs. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Action violates the feasibility constraints for the given state.
class InfeasibleActionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Solver failed to converge, non-finite values, divergence. Maps to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace overflow
