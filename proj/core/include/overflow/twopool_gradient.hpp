#pragma once

#include <array>

#include "overflow/system.hpp"

namespace overflow {

// Gradient of E_{f ~ pi_theta}[A(s,f)] for the symmetric two-pool midnight model
// with logistic overflow probability kappa = sigmoid(theta0 + theta1 x1 + theta2 x2)
// and quadratic value approximation beta1 (x1 + x2) + beta3 (x1^2 + x2^2).
// Class-1 customers may overflow even to a full pool; departures act on all customers.
struct QuadraticValue {
    double beta1 = 0.0;
    double beta3 = 0.0;
};

double logistic_overflow_prob(const std::array<double, 3>& theta, int x1, int x2);

// Throws ConfigError unless cfg is a symmetric two-pool, one-epoch instance with routes both ways.
std::array<double, 3> twopool_gradient_oracle(const std::array<double, 3>& theta, int x1, int x2,
                                              const QuadraticValue& value, const SystemConfig& cfg);

}  // namespace overflow
