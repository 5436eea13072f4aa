#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpuconfig/agent.hpp"
#include "dpuconfig/corpus.hpp"
#include "dpuconfig/env.hpp"

namespace dpuconfig {

struct OracleChoice {
    std::size_t action = 0;
    DpuConfiguration config;
    double fps = 0.0;
    double ppw = 0.0;
    /// False when no configuration meets the constraint; config is then the max-PPW one.
    bool feasible = false;
};

/// Best PPW among records meeting the constraint. Ties go to fewer instances,
/// then the smaller architecture. records holds one entry per action in
/// action order.
OracleChoice oracle_best(std::span<const MeasurementRecord* const> records, double fps_constraint);

/// Throws std::out_of_range when any of the 26 records is missing.
OracleChoice oracle_best(const MeasurementTable& table, const ModelProfile& model, WorkloadState workload,
                         double fps_constraint);

enum class BaselineKind { MaxFps, MinPower };

const char* to_string(BaselineKind kind);

/// Unconstrained argmax fps or argmin p_fpga; ties go to the lower action index.
std::size_t baseline_action(std::span<const MeasurementRecord* const> records, BaselineKind kind);

DpuConfiguration baseline_policy(const MeasurementTable& table, const ModelProfile& model, WorkloadState workload,
                                 BaselineKind kind);

struct EvaluationRow {
    std::string policy;
    std::string variant;
    WorkloadState workload = WorkloadState::N;
    DpuConfiguration chosen;
    double chosen_fps = 0.0;
    double chosen_ppw = 0.0;
    bool constraint_satisfied = false;
    DpuConfiguration oracle;
    double oracle_ppw = 0.0;
    bool oracle_feasible = false;
    /// chosen / oracle PPW; 0 when the choice misses a constraint some
    /// configuration could have met.
    double normalized_ppw = 0.0;
};

struct PolicySummary {
    std::string policy;
    WorkloadState workload = WorkloadState::N;
    std::size_t rows = 0;
    double mean_normalized_ppw = 0.0;
    double constraint_rate = 0.0;
};

struct EvaluationReport {
    double fps_constraint = 0.0;
    /// Rows grouped by policy (agent, max_fps, min_power), then model, then workload.
    std::vector<EvaluationRow> rows;
    std::vector<PolicySummary> summaries;

    const PolicySummary& summary(const std::string& policy, WorkloadState workload) const;
    std::vector<EvaluationRow> rows_for(const std::string& policy) const;
};

/// Chooses an action index for a (model, workload) pair.
using Chooser = std::function<std::size_t(const ModelProfile&, WorkloadState)>;

/// Scores the chooser (reported under policy_name) and both fixed baselines on
/// every (model, workload) pair.
EvaluationReport evaluate_chooser(const Chooser& chooser, const std::string& policy_name,
                                  const MeasurementTable& table, const std::vector<ModelProfile>& models,
                                  std::span<const WorkloadState> workloads, double fps_constraint);

/// Greedy agent on the pre-action state of each pair.
EvaluationReport evaluate(const PolicyParameters& params, const MeasurementTable& table,
                          const std::vector<ModelProfile>& models, std::span<const WorkloadState> workloads,
                          double fps_constraint, const CalibrationParams& calibration,
                          const NormalizationParams& norm = {});

/// Default evaluation states.
inline constexpr std::array<WorkloadState, 2> kEvaluationWorkloads{WorkloadState::C, WorkloadState::M};

void write_report_csv(const EvaluationReport& report, const std::filesystem::path& path);
void write_summary_csv(const EvaluationReport& report, const std::filesystem::path& path);
/// Normalized PPW per model grouped by workload, one series per policy.
void write_plot_data(const EvaluationReport& report, const std::filesystem::path& path);

struct OracleRow {
    std::string variant;
    WorkloadState workload = WorkloadState::N;
    OracleChoice choice;
};

/// Oracle for every (model, workload) pair, models outermost.
std::vector<OracleRow> oracle_table(const MeasurementTable& table, const std::vector<ModelProfile>& models,
                                    std::span<const WorkloadState> workloads, double fps_constraint);
void write_oracle_csv(const std::vector<OracleRow>& rows, const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_number(double v);

}  // namespace dpuconfig
