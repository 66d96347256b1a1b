#pragma once

#include <cstdint>
#include <vector>

#include "overflow/network.hpp"
#include "overflow/policy.hpp"
#include "overflow/system.hpp"

namespace overflow {

struct StepRecord {
    State state;
    SystemAction action;
    double cost = 0.0;
    AtomicDistribution kappa;               // policy rows at the pre-action state
    std::vector<DecisionContext> contexts;  // realized assignments with generating probabilities
    int day = 0;
};

struct Trajectory {
    std::vector<StepRecord> steps;
    int iteration = 0;
    int actor = 0;
    std::uint64_t seed = 0;
};

}  // namespace overflow
