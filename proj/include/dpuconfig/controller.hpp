#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpuconfig/agent.hpp"
#include "dpuconfig/corpus.hpp"
#include "dpuconfig/env.hpp"

namespace dpuconfig {

/// Durations of the decision-loop phases, milliseconds.
struct OverheadProfile {
    double telemetry_ms = 88.0;
    double rl_inference_ms = 20.0;
    double reconfigure_ms = 384.0;
    double instruction_load_ms = 507.0;

    friend bool operator==(const OverheadProfile&, const OverheadProfile&) = default;
};

/// Throws std::invalid_argument listing every negative or non-finite field.
void validate_overheads(const OverheadProfile& overheads);

enum class Phase { Telemetry, Decide, Reconfigure, LoadInstructions, Inference };

const char* to_string(Phase phase);

/// What is currently loaded on the fabric.
struct Deployment {
    DpuConfiguration config;
    std::string model;
};

/// Overhead phases needed to go from current to next, in execution order.
/// Telemetry and decide always run; reconfigure when the configuration
/// changes; load_instructions when the (model, configuration) pair changes.
std::vector<Phase> decide_transition(const std::optional<Deployment>& current, const Deployment& next);

double phase_duration(Phase phase, const OverheadProfile& overheads);

struct Arrival {
    double time_ms = 0.0;
    /// Variant id, e.g. "ResNet152_PR0".
    std::string model;
    WorkloadState workload = WorkloadState::N;
    double fps_constraint = 30.0;
    /// How long the model runs once deployed.
    double duration_ms = 60000.0;
};

struct TimelineEvent {
    double start_ms = 0.0;
    double duration_ms = 0.0;
    Phase phase = Phase::Telemetry;
    std::string detail;
};

struct ArrivalOutcome {
    std::string model;
    WorkloadState workload = WorkloadState::N;
    DpuConfiguration config;
    double fps = 0.0;
    double ppw = 0.0;
    double oracle_ppw = 0.0;
    double overhead_ms = 0.0;
    bool reconfigured = false;
};

struct ScenarioSummary {
    std::size_t arrivals = 0;
    std::size_t reconfigurations = 0;
    double total_overhead_ms = 0.0;
    double total_inference_ms = 0.0;
    /// overhead / (overhead + inference)
    double overhead_fraction = 0.0;
    double mean_ppw = 0.0;
    double mean_oracle_ppw = 0.0;
    /// Mean of per-arrival ppw / oracle ppw.
    double mean_normalized_ppw = 0.0;
};

struct ScenarioResult {
    std::vector<TimelineEvent> events;
    std::vector<ArrivalOutcome> outcomes;
    ScenarioSummary summary;
};

/// Picks an action for a model in a workload state under an fps constraint.
using DecisionFn = std::function<std::size_t(const ModelProfile&, WorkloadState, double)>;

/// Greedy agent decisions on the pre-action state. params is borrowed and must
/// outlive the returned function.
DecisionFn agent_decisions(const PolicyParameters& params, const CalibrationParams& calibration,
                           const NormalizationParams& norm = {});

/// Replays arrivals in order without preemption: each one starts at the later
/// of its arrival time and the end of the previous inference. Throws
/// std::invalid_argument for unsorted arrivals or unknown models, and
/// std::out_of_range for table misses.
ScenarioResult run_scenario(const std::vector<Arrival>& arrivals, const DecisionFn& decide,
                            const MeasurementTable& table, const std::vector<ModelProfile>& models,
                            const OverheadProfile& overheads = {});

/// Scenario file: {"arrivals": [{"time_ms", "model", "workload", "fps_constraint", "duration_ms"}]}.
std::vector<Arrival> read_scenario(const std::filesystem::path& path);

/// start_ms,duration_ms,phase,detail
void write_timeline_csv(const std::vector<TimelineEvent>& events, const std::filesystem::path& path);
void write_timeline_plot(const ScenarioResult& result, const std::filesystem::path& path);
void write_scenario_summary(const ScenarioResult& result, const std::filesystem::path& path);

}  // namespace dpuconfig
