#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "overflow/rng.hpp"

namespace overflow {

struct Route {
    int to = 0;
    double cost = 0.0;
};

// A J-class / J-pool periodic instance. Class i's primary pool is pool i.
struct SystemConfig {
    std::string name;
    int num_pools = 0;        // J
    int epochs_per_day = 1;   // m
    std::vector<int> servers;                       // N_j
    std::vector<std::vector<double>> arrivals;      // [j][h] mean arrivals in epoch h
    std::vector<double> discharge_prob;             // mu_j, daily
    std::vector<std::vector<double>> discharge_cdf; // [j][k], k = 0..m, F_j at epoch boundaries
    std::vector<std::vector<Route>> routes;         // [i] overflow pools, preferred first
    std::vector<double> holding_cost;               // C_j

    double daily_arrivals(int j) const;
    // Overflow cost B_{i,j}, or a negative value if j is not a route of class i.
    double route_cost(int i, int j) const;
    bool has_route(int i, int j) const { return route_cost(i, j) >= 0.0; }
};

struct Violation {
    std::string path;
    std::string message;
};

std::vector<Violation> validate_config(const SystemConfig& cfg);
// Throws ConfigError listing every violation.
void require_valid(const SystemConfig& cfg);

struct State {
    std::vector<int> x;
    std::vector<int> y;
    int epoch = 0;

    static State empty(int pools, int epoch = 0);
    bool operator==(const State&) const = default;
};

inline int queue_length(const State& s, const SystemConfig& cfg, int j) {
    int q = s.x[j] - cfg.servers[j];
    return q > 0 ? q : 0;
}

inline int idle_beds(const State& s, const SystemConfig& cfg, int j) {
    int idle = cfg.servers[j] - s.x[j];
    return idle > 0 ? idle : 0;
}

// J x J assignment counts, row = class, column = pool. f(i,i) = customers left waiting.
class SystemAction {
public:
    SystemAction() = default;
    explicit SystemAction(int pools) : pools_(pools), f_(static_cast<std::size_t>(pools) * pools, 0) {}

    int pools() const { return pools_; }
    int& operator()(int i, int j) { return f_[static_cast<std::size_t>(i) * pools_ + j]; }
    int operator()(int i, int j) const { return f_[static_cast<std::size_t>(i) * pools_ + j]; }
    const std::vector<int>& data() const { return f_; }

    // All waiting customers stay in their own queue.
    static SystemAction all_wait(const State& s, const SystemConfig& cfg);
    bool operator==(const SystemAction&) const = default;

private:
    int pools_ = 0;
    std::vector<int> f_;
};

struct ExogenousDraw {
    std::vector<int> a;
    std::vector<int> d;
    std::vector<int> b;
};

bool is_valid_state(const State& s, const SystemConfig& cfg);

// Empty string when feasible, otherwise the first violated constraint.
std::string feasibility_violation(const State& s, const SystemAction& f, const SystemConfig& cfg);
void require_feasible(const State& s, const SystemAction& f, const SystemConfig& cfg);

double discharge_prob(const SystemConfig& cfg, int j, int h);

ExogenousDraw sample_exogenous(const SystemConfig& cfg, const State& post, Rng& rng);

State apply_action(const State& s, const SystemAction& f, const SystemConfig& cfg);

// One exogenous step from a post-action state. With m = 1 the customers chosen to
// leave at midnight also depart within the same (single-epoch) day, so y' = 0.
State advance(const State& post, const ExogenousDraw& draw, const SystemConfig& cfg);

double cost(const State& s, const SystemAction& f, const SystemConfig& cfg);

std::vector<int> feasible_pools(const State& s, int i, const SystemConfig& cfg);

}  // namespace overflow
