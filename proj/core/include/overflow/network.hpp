#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "overflow/policy.hpp"
#include "overflow/rng.hpp"
#include "overflow/system.hpp"

namespace overflow {

enum class NetStructure { FullyConnected, FullySeparate, PartiallyShared };

std::string structure_name(NetStructure s);
NetStructure parse_structure(const std::string& name);

// Dense layer stored row-major (out x in) at `offset`, biases right after.
struct Layer {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;
    std::size_t weight(int r, int c) const { return offset + static_cast<std::size_t>(r) * in + c; }
    std::size_t bias(int r) const { return offset + static_cast<std::size_t>(out) * in + r; }
    std::size_t size() const { return static_cast<std::size_t>(out) * (in + 1); }
};

// Flat parameter vector plus the layer layout for each epoch's forward path.
// FullyConnected: one path shared by all epochs, input carries a one-hot epoch.
// FullySeparate: m disjoint paths. PartiallyShared: shared hidden stack, one output layer per epoch.
class NetworkParams {
public:
    NetworkParams() = default;
    NetworkParams(NetStructure structure, int pools, int epochs, std::vector<int> hidden);

    NetStructure structure() const { return structure_; }
    int pools() const { return pools_; }
    int epochs() const { return epochs_; }
    const std::vector<int>& hidden() const { return hidden_; }
    int input_size() const;
    int output_size() const { return pools_ * pools_; }
    const std::vector<Layer>& path(int h) const { return paths_[h]; }
    std::size_t size() const { return values.size(); }
    bool is_output_layer(const Layer& l) const;

    // Hidden weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); output layers and all biases zero.
    void initialize(Rng& rng);

    std::vector<double> values;

private:
    NetStructure structure_ = NetStructure::PartiallyShared;
    int pools_ = 0;
    int epochs_ = 0;
    std::vector<int> hidden_;
    std::vector<std::vector<Layer>> paths_;
};

std::vector<double> input_encoding(const State& s, NetStructure structure, const SystemConfig& cfg);

struct ForwardCache {
    int epoch = 0;
    std::vector<std::vector<double>> activations;  // activations[0] = input, last = logits
};

std::vector<double> network_logits(const NetworkParams& params, const std::vector<double>& input, int epoch,
                                   ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
void backprop_logits(const NetworkParams& params, const ForwardCache& cache, const std::vector<double>& dlogits,
                     std::vector<double>& grad);

// Masked softmax over feasible_pools(s,i) for each row.
AtomicDistribution forward(const NetworkParams& params, const State& s, const SystemConfig& cfg);

// Per-row log-probabilities of the masked softmax; infeasible entries are -inf.
std::vector<double> masked_log_softmax(const std::vector<double>& logits, const State& s, const SystemConfig& cfg);

// Realized assignments at one decision state, with the generating policy's
// probability of each. Batched samples have one context; sequential samples one
// per customer.
struct AssignmentTerm {
    int cls = 0;
    int pool = 0;
    int count = 0;
    double kappa_old = 1.0;
};

struct DecisionContext {
    State state;
    std::vector<AssignmentTerm> terms;
};

struct PpoSample {
    std::span<const DecisionContext> contexts;
    double advantage = 0.0;
};

std::vector<DecisionContext> batched_contexts(const State& s, const SystemAction& f, const AtomicDistribution& kappa);
std::vector<DecisionContext> sequential_contexts(const State& s, const std::vector<AtomicStep>& steps);

double log_ratio(const NetworkParams& params, std::span<const DecisionContext> contexts, const SystemConfig& cfg);

// Mean over samples of max(r A, clip(r, 1-eps, 1+eps) A).
double ppo_loss(const NetworkParams& params, std::span<const PpoSample> batch, double eps, const SystemConfig& cfg);

// Same value as ppo_loss; writes the exact gradient into grad (resized and zeroed).
double ppo_loss_grad(const NetworkParams& params, std::span<const PpoSample> batch, double eps,
                     const SystemConfig& cfg, std::vector<double>& grad);

// Cross-entropy to target rows, used to warm-start a network to a benchmark policy.
struct ImitationSample {
    State state;
    AtomicDistribution target;
};

double imitation_loss_grad(const NetworkParams& params, std::span<const ImitationSample> batch,
                           const SystemConfig& cfg, std::vector<double>* grad);

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static OptimizerState for_params(const NetworkParams& params, double lr = 1e-3);
};

void adam_step(std::vector<double>& params, const std::vector<double>& grad, OptimizerState& opt);

struct ClipSchedule {
    double initial = 0.5;
    double later = 0.2;
    int switch_after = 6;  // iterations 1..switch_after use `initial`
    bool constant = false;

    double at(int iteration) const;
};

}  // namespace overflow
