#include "overflow/twopool_gradient.hpp"

#include <cmath>

#include "overflow/errors.hpp"

namespace overflow {

double logistic_overflow_prob(const std::array<double, 3>& theta, int x1, int x2) {
    double z = theta[0] + theta[1] * x1 + theta[2] * x2;
    return 1.0 / (1.0 + std::exp(-z));
}

std::array<double, 3> twopool_gradient_oracle(const std::array<double, 3>& theta, int x1, int x2,
                                              const QuadraticValue& value, const SystemConfig& cfg) {
    require_valid(cfg);
    if (cfg.num_pools != 2 || cfg.epochs_per_day != 1) throw ConfigError("gradient oracle needs J = 2 and m = 1");
    const double b12 = cfg.route_cost(0, 1);
    const double b21 = cfg.route_cost(1, 0);
    if (cfg.servers[0] != cfg.servers[1] || cfg.discharge_prob[0] != cfg.discharge_prob[1] ||
        cfg.daily_arrivals(0) != cfg.daily_arrivals(1) || cfg.holding_cost[0] != cfg.holding_cost[1] || b12 < 0.0 ||
        b12 != b21)
        throw ConfigError("gradient oracle needs a symmetric instance");

    const int N = cfg.servers[0];
    const double mu = cfg.discharge_prob[0];
    const double C = cfg.holding_cost[0];
    const int q1 = x1 > N ? x1 - N : 0;
    const double k = logistic_overflow_prob(theta, x1, x2);
    const double g0 = q1 * k * (1.0 - k) *
                      (2.0 * value.beta3 * (1.0 - mu) * (1.0 - mu) * (2.0 * (q1 - 1) * k + x2 - x1 + 1) + b12 - C);
    return {g0, g0 * x1, g0 * x2};
}

}  // namespace overflow
