#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "overflow/network.hpp"
#include "overflow/policy.hpp"
#include "overflow/system.hpp"
#include "overflow/trajectory.hpp"

namespace overflow {

struct TrainConfig {
    int iterations = 15;        // R
    int days_per_actor = 500;   // T
    int actors = 4;             // K
    int epochs = 15;            // E, passes over the data per iteration
    ClipSchedule clip;
    double tolerance = 0.1;     // delta on consecutive training costs (per day)
    int reuse = 3;              // W previous iterations merged into the fit and the surrogate
    int burn_in_days = 50;
    std::uint64_t seed = 1;
    int evaluation_days = 2000;
    int minibatch = 1024;
    double learning_rate = 1e-3;
    int max_halvings = 6;
    bool use_vd_basis = true;
    DecisionMode mode = DecisionMode::Batched;
    double divergence_factor = 10.0;
    int threads = 0;            // rollout workers, 0 = hardware concurrency
};

std::vector<std::string> validate_train_config(const TrainConfig& cfg);

struct IterationReport {
    int iteration = 0;
    double train_cost = 0.0;       // mean daily cost of the fresh rollouts
    double eval_cost = 0.0;
    double eval_half_width = 0.0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double clip = 0.0;
    double learning_rate = 0.0;    // last rate used after any halving
    double seconds = 0.0;
    double value_gamma = 0.0;      // per-epoch average cost used for advantages
    int samples = 0;
};

// Simulates burn_in + days days from an empty system; only post-burn-in epochs are recorded.
Trajectory rollout(const PolicySpec& policy, const SystemConfig& cfg, int days, std::uint64_t seed,
                   int burn_in_days = 50, DecisionMode mode = DecisionMode::Batched, bool record_contexts = true);

// K rollouts with seeds derive_seed(base, k), returned in actor order.
std::vector<Trajectory> parallel_rollouts(const PolicySpec& policy, const SystemConfig& cfg, int days, int actors,
                                          std::uint64_t base_seed, int burn_in_days, DecisionMode mode,
                                          int threads = 0);

struct Evaluation {
    double mean = 0.0;          // mean daily cost
    double half_width = 0.0;    // 95% batch-means half-width, 20 batches
    double overflow_fraction = 0.0;  // overflowed / (overflowed + admitted-from-queue decisions)
    double mean_queue = 0.0;         // mean total queue at decision epochs
    int days = 0;
};

Evaluation evaluate(const PolicySpec& policy, const SystemConfig& cfg, int days, std::uint64_t seed,
                    int burn_in_days = 50);

// Fit the network to a benchmark policy by cross-entropy on states visited by that policy.
void warm_start_network(NetworkParams& net, const PolicySpec& target, const SystemConfig& cfg, int days,
                        std::uint64_t seed, int passes = 200, double lr = 1e-2);

struct TrainState {
    NetworkParams params;
    OptimizerState optimizer;
    int iteration = 0;                      // completed iterations
    double initial_eval = 0.0;
    std::optional<double> last_train_cost;
    std::vector<IterationReport> reports;
    std::vector<std::pair<int, std::vector<double>>> snapshots;  // params that generated reusable data
    bool converged = false;
};

using ReportCallback = std::function<void(const IterationReport&, const TrainState&)>;

TrainState initial_train_state(const NetworkParams& net, const TrainConfig& cfg);

// Runs iterations until R or convergence. Resuming from a saved TrainState is
// bit-identical to an uninterrupted run: reused data is regenerated from snapshots.
TrainState train(const TrainConfig& cfg, const SystemConfig& system, TrainState state,
                 const ReportCallback& on_iteration = {});

}  // namespace overflow
