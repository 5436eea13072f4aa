#pragma once

#include <array>
#include <optional>
#include <utility>

#include "dpuconfig/corpus.hpp"
#include "dpuconfig/reward.hpp"

namespace dpuconfig {

inline constexpr std::size_t kStateSize = 22;

/// cpu[0..3], memr[0..4], memw[0..4], p_fpga, p_arm, gmac, ldfm, ldwb, stfm, params, c_perf
using StateVector = std::array<double, kStateSize>;

namespace slot {
inline constexpr std::size_t kCpu = 0;
inline constexpr std::size_t kMemRead = 4;
inline constexpr std::size_t kMemWrite = 9;
inline constexpr std::size_t kPFpga = 14;
inline constexpr std::size_t kPArm = 15;
inline constexpr std::size_t kGmac = 16;
inline constexpr std::size_t kLdfm = 17;
inline constexpr std::size_t kLdwb = 18;
inline constexpr std::size_t kStfm = 19;
inline constexpr std::size_t kParams = 20;
inline constexpr std::size_t kConstraint = 21;
}  // namespace slot

/// Fixed divisors applied by encode_state.
struct NormalizationParams {
    /// Bandwidth slots are MB/s divided by this value expressed in MB/s.
    double max_bandwidth = 6.5e9;
    double power_w = 30.0;
    double gmac = 15.0;
    double bytes = 200e6;
    double params = 70e6;
    double fps = 60.0;

    friend bool operator==(const NormalizationParams&, const NormalizationParams&) = default;
};

/// Throws std::invalid_argument on non-finite inputs or a non-positive constraint.
StateVector encode_state(const Telemetry& telemetry, const ModelProfile& model, double fps_constraint,
                         const NormalizationParams& norm = {});

struct EpisodeOutcome {
    MeasurementRecord record;
    double ppw = 0.0;
    double reward = 0.0;
};

/// Single-step environment replaying a measurement table. The table and the
/// baseline store are borrowed and must outlive the environment.
class Environment {
  public:
    Environment(const MeasurementTable& table, const CalibrationParams& calibration, ContextBaselineStore& store,
                NormalizationParams norm = {});

    /// Pre-action observation: idle telemetry of the workload state plus model
    /// statics and constraint. Throws std::out_of_range for a model missing from the table.
    StateVector reset(const ModelProfile& model, WorkloadState workload, double fps_constraint);

    /// Replays action_space()[action] and scores it. The episode ends here:
    /// the returned flag is always true and the next step needs a new reset.
    std::pair<EpisodeOutcome, bool> step(std::size_t action);

    const NormalizationParams& normalization() const { return norm_; }

  private:
    const MeasurementTable& table_;
    CalibrationParams calibration_;
    ContextBaselineStore& store_;
    NormalizationParams norm_;
    std::optional<ModelProfile> model_;
    WorkloadState workload_ = WorkloadState::N;
    double constraint_ = 0.0;
};

}  // namespace dpuconfig
