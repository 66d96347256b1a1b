#pragma once

#include <string>
#include <vector>

#include "overflow/network.hpp"
#include "overflow/system.hpp"
#include "overflow/trainer.hpp"

namespace overflow {

struct Preset {
    std::string name;
    std::string description;
    SystemConfig system;
    TrainConfig train;        // full-budget defaults
    TrainConfig quick;        // desk-scale profile
    NetStructure structure = NetStructure::PartiallyShared;
    std::vector<int> hidden;
    std::string initial_policy;  // benchmark the network is warm-started to, empty = none
    // Quick runs start from the uniform network: a warm start to a deterministic
    // benchmark saturates the softmax and 10 short iterations cannot undo it.
    std::string quick_initial_policy;
};

std::vector<std::string> preset_names();
// Throws ConfigError for unknown names.
Preset make_preset(const std::string& name);

// Eight-epoch synthetic shapes (epoch k covers hours [3k, 3k+3)).
// Arrival weights put 40% of the daily mass in epochs 3-4; discharge CDF puts
// 70% of the within-day mass in epochs 4-5 (12:00-18:00).
std::vector<double> default_arrival_shape();
std::vector<double> default_discharge_cdf();

}  // namespace overflow
