#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"

#include "dpuconfig/agent.hpp"
#include "dpuconfig/controller.hpp"
#include "dpuconfig/corpus.hpp"
#include "dpuconfig/env.hpp"
#include "dpuconfig/reward.hpp"

namespace dpuconfig {

/// Everything a CLI run depends on. Loaded from one JSON file; flags override fields.
struct RunConfig {
    /// Seeds corpus noise and training.
    std::uint64_t seed = 1;
    double fps_constraint = 30.0;
    /// Replay this CSV instead of generating a corpus.
    std::optional<std::filesystem::path> corpus_csv;
    /// JSON model manifest; the built-in 33-variant set when absent.
    std::optional<std::filesystem::path> model_manifest;
    CalibrationParams calibration;
    RewardParams reward;
    PpoHyperparams ppo;
    std::uint64_t episodes = 200000;
    std::vector<WorkloadState> train_workloads{WorkloadState::N, WorkloadState::C, WorkloadState::M};
    std::vector<WorkloadState> eval_workloads{WorkloadState::C, WorkloadState::M};
    OverheadProfile overheads;
    std::filesystem::path output_dir = "runs";

    /// Reward parameters with the bandwidth reference taken from the calibration.
    RewardParams resolved_reward() const;
    NormalizationParams normalization() const;
    /// Calibration with rng_seed taken from seed.
    CalibrationParams resolved_calibration() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);

/// Missing fields keep their defaults; unknown fields are errors. Relative
/// paths are resolved against base_dir. Throws std::invalid_argument listing
/// every problem found.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

RunConfig load_run_config(const std::filesystem::path& path);

/// Throws std::invalid_argument enumerating every violated field, including
/// unresolvable paths.
void validate_run_config(const RunConfig& config);

}  // namespace dpuconfig
