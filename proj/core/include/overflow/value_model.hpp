#pragma once

#include <span>
#include <vector>

#include "overflow/pool_model.hpp"
#include "overflow/system.hpp"

namespace overflow {

// Feature vector [1, V_d, then per pool x, x^2, y, y^2, x y]. With no pool models
// the V_d entry is dropped (polynomial-only basis).
std::size_t feature_count(const SystemConfig& cfg, std::span<const PoolModel> pools);

std::vector<double> features(const State& s, std::span<const PoolModel> pools, const SystemConfig& cfg);

// Exact expectation of features(s') one exogenous step after applying f.
std::vector<double> expected_features(const State& s, const SystemAction& f, const SystemConfig& cfg,
                                      std::span<const PoolModel> pools);

struct FitSample {
    std::vector<double> phi;
    double cost = 0.0;
    int epoch = 0;
};

// Consecutive decision epochs of one simulated stream; TD pairs never cross segments.
using FitSegment = std::vector<FitSample>;

struct EpochValueModel {
    int epochs = 0;
    int dim = 0;
    std::vector<std::vector<double>> beta;  // beta[h]
    double gamma = 0.0;                     // per-epoch average cost
    std::vector<double> advantage_offset;   // per-epoch mean removed during normalization

    double value(int epoch, const std::vector<double>& phi) const;
};

// Joint LSTD over the periodic block features with ridge on the standardized system.
EpochValueModel fit_epoch_models(std::span<const FitSegment> segments, int epochs, double ridge = 1e-6);

// g - gamma + E[v^{h+1}(s')] - v^h(s).
double advantage(double cost, const std::vector<double>& phi, const std::vector<double>& expected_phi_next, int epoch,
                 const EpochValueModel& model);

// Subtracts each epoch's sample mean in place; returns the offsets.
std::vector<double> normalize_advantages(std::vector<double>& adv, const std::vector<int>& epochs, int num_epochs);

}  // namespace overflow
