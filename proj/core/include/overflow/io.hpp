#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "overflow/network.hpp"
#include "overflow/policy.hpp"
#include "overflow/system.hpp"
#include "overflow/trainer.hpp"
#include "overflow/value_model.hpp"

namespace overflow {

inline constexpr int kSchemaVersion = 1;

// System config documents. Parsing throws ConfigError on malformed JSON, a wrong
// schema version or missing fields; semantic checks are left to validate_config.
SystemConfig parse_system(const std::string& json_text);
SystemConfig load_system(const std::filesystem::path& path);
std::string system_to_json(const SystemConfig& cfg);
void save_system(const SystemConfig& cfg, const std::filesystem::path& path);

// Weights file: structure tag, dims and the flat parameter vector.
std::string weights_to_json(const NetworkParams& params);
NetworkParams parse_weights(const std::string& json_text);
NetworkParams load_weights(const std::filesystem::path& path);
void save_weights(const NetworkParams& params, const std::filesystem::path& path);
// Throws ConfigError if the network does not fit the instance.
void check_weights(const NetworkParams& params, const SystemConfig& cfg);

// Policy specs as {"type": ..., ...}. Network policies reference a weights file,
// resolved relative to base_dir.
PolicySpec parse_policy(const std::string& json_text, const SystemConfig& cfg,
                        const std::filesystem::path& base_dir = {});
std::string policy_to_json(const PolicySpec& policy, const std::string& weights_path = {});

// Short CLI names: no-overflow, complete, midnight, empirical, randomized[:p],
// or a path to a weights file.
PolicySpec policy_from_name(const std::string& name, const SystemConfig& cfg);

// Train config overrides; absent keys keep the values of `base`.
TrainConfig parse_train_config(const std::string& json_text, const TrainConfig& base = {});
std::string train_config_to_json(const TrainConfig& cfg);

std::string report_to_json_line(const IterationReport& rep);
void write_reports_csv(const std::vector<IterationReport>& reports, const std::filesystem::path& path);

// Checkpoint: parameters, Adam state, reports and the reuse snapshots. Doubles
// round-trip exactly, so resuming reproduces an uninterrupted run.
void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path, TrainConfig* cfg = nullptr);

// Fitted value model as JSON; pool tables go to a raw little-endian double sidecar.
void save_value_model(const EpochValueModel& model, std::span<const PoolModel> pools,
                      const std::filesystem::path& json_path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace overflow
