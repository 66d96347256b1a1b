#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "overflow/rng.hpp"
#include "overflow/system.hpp"

namespace overflow {

class NetworkParams;

// Row i is kappa(.|s,i): where one waiting class-i customer is sent.
class AtomicDistribution {
public:
    AtomicDistribution() = default;
    explicit AtomicDistribution(int pools)
        : pools_(pools), k_(static_cast<std::size_t>(pools) * pools, 0.0) {}

    static AtomicDistribution identity(int pools);

    int pools() const { return pools_; }
    double& operator()(int i, int j) { return k_[static_cast<std::size_t>(i) * pools_ + j]; }
    double operator()(int i, int j) const { return k_[static_cast<std::size_t>(i) * pools_ + j]; }
    const double* row(int i) const { return k_.data() + static_cast<std::size_t>(i) * pools_; }
    const std::vector<double>& data() const { return k_; }

private:
    int pools_ = 0;
    std::vector<double> k_;
};

struct NoOverflow {};
struct CompleteOverflow {};
struct MidnightOverflow {};
struct EmpiricalOverflow {
    std::vector<int> night_epochs;
};
// Each waiting customer overflows with probability p when any route has idle
// beds, split evenly over those routes. Used as a simple randomized benchmark.
struct RandomizedOverflow {
    double probability = 0.5;
};
struct NetworkPolicy {
    std::shared_ptr<const NetworkParams> params;
};

using PolicySpec =
    std::variant<NoOverflow, CompleteOverflow, MidnightOverflow, EmpiricalOverflow, RandomizedOverflow, NetworkPolicy>;

std::string policy_name(const PolicySpec& policy);

// Night window {0,1,7} for the eight-epoch grid (epoch k covers hours [3k, 3k+3)).
std::vector<int> default_night_epochs(int epochs_per_day);

// The deterministic fill used by CompleteOverflow: classes ascending, routes in listed order.
SystemAction complete_overflow_action(const State& s, const SystemConfig& cfg);

// For deterministic benchmarks the rows are the realized assignment fractions.
AtomicDistribution atomic_distribution(const PolicySpec& policy, const State& s, const SystemConfig& cfg);

// Batched sampling: every customer of a decision epoch draws from kappa at the
// pre-action state; pools that run out of idle beds within the batch are masked
// and the draw repeated.
SystemAction sample_batched(const AtomicDistribution& kappa, const State& s, const SystemConfig& cfg, Rng& rng);

// One customer's routing decision in sequential mode.
struct AtomicStep {
    std::vector<int> x;  // system counts when the decision was made
    int cls = 0;
    int pool = 0;
    double kappa = 1.0;  // probability of the realized pool
};

struct SampledAction {
    SystemAction action;
    AtomicDistribution kappa;         // at the pre-action state
    std::vector<AtomicStep> steps;    // sequential mode only
};

enum class DecisionMode { Batched, Sequential };

// Sequential mode recomputes kappa after every atomic action (network policies
// only; benchmarks behave identically in both modes).
SampledAction sample_action(const PolicySpec& policy, const State& s, const SystemConfig& cfg, Rng& rng,
                            DecisionMode mode = DecisionMode::Batched);

// log pi(f|s) under the product-of-multinomials form. Returns -inf if f uses a
// zero-probability assignment and, when given, fills *diagnostic.
double action_log_prob(const AtomicDistribution& kappa, const State& s, const SystemAction& f,
                       const SystemConfig& cfg, std::string* diagnostic = nullptr);

double prob_ratio(const AtomicDistribution& kappa_new, const AtomicDistribution& kappa_old, const State& s,
                  const SystemAction& f, const SystemConfig& cfg);

}  // namespace overflow
