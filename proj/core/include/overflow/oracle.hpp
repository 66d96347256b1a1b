#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "overflow/policy.hpp"
#include "overflow/system.hpp"

namespace overflow {

// Every feasible action at s. Guarded to J <= 3 and total queue <= 12.
std::vector<SystemAction> enumerate_feasible_actions(const State& s, const SystemConfig& cfg);

// Sum over all ordered atomic sequences (class-ascending customers, each drawing
// from its kappa row) whose aggregate equals f. Guarded to total queue <= 8.
double brute_force_action_prob(const AtomicDistribution& kappa, const State& s, const SystemAction& f,
                               const SystemConfig& cfg);

// One-epoch-per-day model on counts only (J <= 2), states x_j in [0, x_max],
// with mass beyond x_max lumped onto the boundary.
class TruncatedMDP {
public:
    TruncatedMDP(const SystemConfig& cfg, int x_max);

    const SystemConfig& config() const { return cfg_; }
    int x_max() const { return x_max_; }
    int pools() const { return cfg_.num_pools; }
    int num_states() const { return num_states_; }
    int index(const std::vector<int>& x) const;
    State state(int idx) const;

    // Feasible actions at a state (overflow to full pools disallowed).
    std::vector<SystemAction> actions(int idx) const;

    // P_j(x' | x+) for one pool, row-major (x_max+1)^2.
    const std::vector<double>& kernel(int j) const { return kernels_[j]; }

    // out(s+) = E[v(s') | s+] for every post-action state.
    void expected_next(const std::vector<double>& v, std::vector<double>& out) const;

private:
    SystemConfig cfg_;
    int x_max_;
    int num_states_;
    std::vector<std::vector<double>> kernels_;
};

struct MidnightSolution {
    double gamma = 0.0;
    std::vector<double> v;
    std::vector<SystemAction> policy;
    int iterations = 0;
    double span = 0.0;
};

MidnightSolution value_iteration_midnight(const SystemConfig& cfg, int x_max = 60, double tol = 1e-9,
                                          int max_iterations = 200000);

using ActionDistribution = std::vector<std::pair<SystemAction, double>>;
using StochasticPolicy = std::function<ActionDistribution(const State&)>;

// Exact distribution of the batched sampler (including capacity resampling), J <= 2.
ActionDistribution sampling_distribution(const PolicySpec& policy, const State& s, const SystemConfig& cfg);

struct PolicyEvaluation {
    double gamma = 0.0;
    std::vector<double> v;
    double residual = 0.0;
    int iterations = 0;
};

// Solves v = g - gamma + P v with v(0) = 0. Throws NumericalError when some state
// cannot reach the empty state or the iteration cap is hit.
PolicyEvaluation exact_policy_eval(const StochasticPolicy& policy, const TruncatedMDP& mdp, double tol = 1e-9,
                                   int max_iterations = 200000);
PolicyEvaluation exact_policy_eval(const PolicySpec& policy, const TruncatedMDP& mdp, double tol = 1e-9,
                                   int max_iterations = 200000);

}  // namespace overflow
