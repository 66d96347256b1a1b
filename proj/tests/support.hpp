#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "overflow/policy.hpp"
#include "overflow/presets.hpp"
#include "overflow/rng.hpp"
#include "overflow/system.hpp"

namespace testing_support {

using namespace overflow;

// Symmetric-routes two-pool instance with a uniform within-day discharge CDF.
inline SystemConfig two_pool(int m, std::vector<int> servers = {28, 32}, double daily = 6.25, double mu = 0.25,
                             double C = 6.0, double B = 30.0) {
    SystemConfig cfg;
    cfg.name = "test-two";
    cfg.num_pools = 2;
    cfg.epochs_per_day = m;
    cfg.servers = servers;
    cfg.arrivals.assign(2, std::vector<double>(m, daily / m));
    cfg.discharge_prob.assign(2, mu);
    std::vector<double> F(m + 1, 0.0);
    if (m == 1) {
        F = {0.0, 1.0};
    } else {
        for (int k = 1; k <= m; ++k) F[k] = static_cast<double>(k - 1) / (m - 1);
    }
    cfg.discharge_cdf.assign(2, F);
    cfg.routes = {{{1, B}}, {{0, B}}};
    cfg.holding_cost.assign(2, C);
    return cfg;
}

// Three pools, every class may overflow to both other pools.
inline SystemConfig three_pool(int m, std::vector<int> servers = {6, 7, 8}) {
    SystemConfig cfg;
    cfg.name = "test-three";
    cfg.num_pools = 3;
    cfg.epochs_per_day = m;
    cfg.servers = servers;
    cfg.arrivals = {std::vector<double>(m, 2.0 / m), std::vector<double>(m, 1.5 / m), std::vector<double>(m, 2.5 / m)};
    cfg.discharge_prob = {0.3, 0.25, 0.35};
    std::vector<double> F(m + 1, 0.0);
    if (m == 1) {
        F = {0.0, 1.0};
    } else {
        for (int k = 1; k <= m; ++k) F[k] = static_cast<double>(k - 1) / (m - 1);
    }
    cfg.discharge_cdf.assign(3, F);
    cfg.routes = {{{1, 10.0}, {2, 12.0}}, {{2, 9.0}, {0, 14.0}}, {{0, 11.0}, {1, 13.0}}};
    cfg.holding_cost = {4.0, 5.0, 6.0};
    return cfg;
}

// Random valid state with x_j in [0, N_j + extra].
inline State random_state(const SystemConfig& cfg, Rng& rng, int extra = 4) {
    State s = State::empty(cfg.num_pools, static_cast<int>(rng() % cfg.epochs_per_day));
    for (int j = 0; j < cfg.num_pools; ++j) {
        s.x[j] = static_cast<int>(rng() % (cfg.servers[j] + extra + 1));
        const int cap = std::min(s.x[j], cfg.servers[j]);
        s.y[j] = cfg.epochs_per_day == 1 ? 0 : static_cast<int>(rng() % (cap + 1));
    }
    return s;
}

// Random kappa with positive mass exactly on feasible_pools(s, i).
inline AtomicDistribution random_kappa(const State& s, const SystemConfig& cfg, Rng& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    AtomicDistribution k(cfg.num_pools);
    for (int i = 0; i < cfg.num_pools; ++i) {
        auto pools = feasible_pools(s, i, cfg);
        double total = 0.0;
        for (int j : pools) total += (k(i, j) = g(rng) + 1e-3);
        for (int j : pools) k(i, j) /= total;
    }
    return k;
}

// Multinomial-law instance: J in {2, 3}, total queue in [1, max_queue], and every pool
// with idle beds has at least the total queue of idle beds.
struct MultinomialInstance {
    SystemConfig cfg;
    State s;
    AtomicDistribution kappa;
};

inline MultinomialInstance random_multinomial_instance(Rng& rng, int max_queue = 8) {
    MultinomialInstance out;
    const int J = 2 + static_cast<int>(rng() % 2);
    out.cfg = J == 2 ? two_pool(1, {10, 12}) : three_pool(1, {10, 11, 12});
    if (J == 3 && rng() % 2) out.cfg.routes[2] = {{0, 11.0}};
    const int total = 1 + static_cast<int>(rng() % max_queue);
    std::vector<int> q(J, 0);
    // At least one pool stays below capacity so there is somewhere to go.
    const int open = static_cast<int>(rng() % J);
    for (int n = 0; n < total; ++n) {
        int i = static_cast<int>(rng() % J);
        if (i == open) i = (i + 1) % J;
        q[i] += 1;
    }
    out.s = State::empty(J);
    for (int j = 0; j < J; ++j) {
        if (q[j] > 0) {
            out.s.x[j] = out.cfg.servers[j] + q[j];
        } else {
            const int slack = total + static_cast<int>(rng() % 2);
            out.s.x[j] = std::max(0, out.cfg.servers[j] - slack - static_cast<int>(rng() % 3));
        }
    }
    out.kappa = random_kappa(out.s, out.cfg, rng);
    return out;
}

// Least-squares y ~ slope * x + intercept.
struct AffineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double mse = 0.0;
};

inline AffineFit affine_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    AffineFit f;
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = y[k] - f.slope * x[k] - f.intercept;
        sse += e * e;
    }
    f.mse = sse / n;
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    return f;
}

}  // namespace testing_support
