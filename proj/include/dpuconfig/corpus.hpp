#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpuconfig/core_model.hpp"

namespace dpuconfig {

/// Per-state value lookup indexed by WorkloadState.
template <typename T>
struct PerWorkload {
    T n{};
    T c{};
    T m{};

    T& operator[](WorkloadState w) { return w == WorkloadState::N ? n : (w == WorkloadState::C ? c : m); }
    const T& operator[](WorkloadState w) const {
        return w == WorkloadState::N ? n : (w == WorkloadState::C ? c : m);
    }
    friend bool operator==(const PerWorkload&, const PerWorkload&) = default;
};

/// Dynamic system features. CPU utilisations are fractions, bandwidths MB/s,
/// powers watts.
struct Telemetry {
    std::array<double, 4> cpu{};
    std::array<double, 5> mem_read{};
    std::array<double, 5> mem_write{};
    double p_fpga = 0.0;
    double p_arm = 0.0;

    double mean_cpu() const;
    /// Sum of all read and write port bandwidths, MB/s.
    double total_bandwidth_mbps() const;

    friend bool operator==(const Telemetry&, const Telemetry&) = default;
};

/// Background load a workload state puts on the host: per-core CPU mean and
/// total memory bandwidth as a fraction of max_bandwidth.
struct WorkloadProfile {
    double cpu_mean = 0.0;
    double mem_fraction = 0.0;
    friend bool operator==(const WorkloadProfile&, const WorkloadProfile&) = default;
};

struct CalibrationParams {
    double clock_hz = 300e6;
    /// Shared DDR bandwidth reachable by the DPUs, bytes/s.
    double max_bandwidth = 6.5e9;
    PerWorkload<double> bw_factor{1.0, 0.9, 0.5};
    /// Host dispatch cost per inference, seconds.
    PerWorkload<double> host_overhead{0.2e-3, 1.0e-3, 0.6e-3};
    /// Exponent of the utilisation-saturation term; see effective_efficiency().
    double efficiency_exponent = 0.45;
    double p_static = 0.5;
    /// Fixed power of one instantiated DPU regardless of activity.
    double p_instance = 1.5;
    /// Watts per (MAC/cycle) per instance at full activity.
    double p_per_mac = 2.0e-3;
    PerWorkload<double> p_arm_base{1.2, 3.0, 2.2};
    /// ARM power per frame/s of dispatch.
    double p_arm_per_fps = 1.0e-3;
    PerWorkload<WorkloadProfile> workload_profile{{0.05, 0.04}, {0.95, 0.08}, {0.35, 0.55}};
    /// Share of background bandwidth on read ports; the rest is writes.
    double read_share = 0.65;
    /// Telemetry noise standard deviation as a fraction of the mean.
    double noise_fraction = 0.05;
    std::uint64_t rng_seed = 1;

    friend bool operator==(const CalibrationParams&, const CalibrationParams&) = default;
};

/// Throws std::invalid_argument listing every violated field.
void validate_calibration(const CalibrationParams& params);

struct MeasurementRecord {
    std::string model;
    double pruning_ratio = 0.0;
    DpuConfiguration config;
    WorkloadState workload = WorkloadState::N;
    /// Aggregate frames/s across all instances.
    double fps = 0.0;
    Telemetry telemetry;

    std::string variant_id() const { return make_variant_id(model, pruning_ratio); }

    friend bool operator==(const MeasurementRecord&, const MeasurementRecord&) = default;
};

/// Throws std::invalid_argument on a violated record invariant.
void validate_record(const MeasurementRecord& record);

/// Fraction of peak MACs the model sustains on the given architecture.
/// Equals base_dpu_efficiency on B4096 and approaches 1 as the array shrinks:
/// eff = base ^ ((peak / peak_B4096) ^ exponent).
double effective_efficiency(const ModelProfile& model, const DpuArchitecture& arch,
                            const CalibrationParams& params);

struct LatencyBreakdown {
    double compute_s = 0.0;
    double memory_s = 0.0;
    double host_s = 0.0;
    /// max(compute, memory) + host
    double total_s = 0.0;
};

LatencyBreakdown latency_breakdown(const ModelProfile& model, const DpuConfiguration& config,
                                   WorkloadState workload, const CalibrationParams& params);

/// Seconds per inference on one instance.
double simulate_latency(const ModelProfile& model, const DpuConfiguration& config,
                        WorkloadState workload, const CalibrationParams& params);

struct PowerDraw {
    double p_fpga = 0.0;
    double p_arm = 0.0;
};

/// FPGA power: p_static + n * (p_instance + p_per_mac * peak * activity) with
/// activity = compute time / total latency. ARM power: state base plus a
/// dispatch term proportional to the aggregate inference rate.
PowerDraw simulate_power(const ModelProfile& model, const DpuConfiguration& config,
                         WorkloadState workload, const CalibrationParams& params);

/// Power for a hypothetical instance count, including 0 (no DPU loaded).
double fpga_power(const DpuArchitecture& arch, int instances, double activity,
                  const CalibrationParams& params);

/// Noise-free telemetry of a workload state with no DPU running.
Telemetry idle_telemetry(WorkloadState workload, const CalibrationParams& params);

/// Measurement table with O(1) lookup by (variant, configuration, workload).
class MeasurementTable {
  public:
    MeasurementTable() = default;
    explicit MeasurementTable(std::vector<MeasurementRecord> records);

    const std::vector<MeasurementRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    /// nullptr when absent.
    const MeasurementRecord* find(const std::string& variant_id, const DpuConfiguration& config,
                                  WorkloadState workload) const;
    /// Throws std::out_of_range naming the missing key.
    const MeasurementRecord& at(const std::string& variant_id, const DpuConfiguration& config,
                                WorkloadState workload) const;

    /// The 26 action-space records for (variant, workload), in action order.
    /// Throws std::out_of_range if any is missing.
    std::vector<const MeasurementRecord*> action_records(const std::string& variant_id,
                                                         WorkloadState workload) const;

    friend bool operator==(const MeasurementTable& a, const MeasurementTable& b) {
        return a.records_ == b.records_;
    }

  private:
    static std::string key(const std::string& variant_id, const DpuConfiguration& config,
                           WorkloadState workload);
    std::vector<MeasurementRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// One record per (model, action-space config, workload), models outermost,
/// then workload N, C, M, then action order. Deterministic in params.rng_seed;
/// each record draws from its own generator seeded by (rng_seed, index).
MeasurementTable generate_corpus(const std::vector<ModelProfile>& models,
                                 const CalibrationParams& params);

/// Absolute accuracy drop (fraction) for each supported pruning ratio.
struct AccuracyDropTable {
    double drop_25 = 0.1184;
    double drop_50 = 0.25;
};

/// Scales gmac, ldfm, ldwb, stfm and params by (1 - ratio) and lowers the
/// accuracy metadata. ratio must be 0, 0.25 or 0.5.
ModelProfile prune_variant(const ModelProfile& model, double ratio,
                           const AccuracyDropTable& drops = {});

/// The eleven unpruned reference models.
std::vector<ModelProfile> reference_models();

/// Each reference model followed by its 25% and 50% pruned variants (33 total).
std::vector<ModelProfile> default_model_set();

/// Error raised by CSV ingestion. row is the 1-based line number in the file
/// (header is line 1), or 0 for file-level errors.
class CorpusError : public std::runtime_error {
  public:
    CorpusError(std::size_t row, const std::string& message);
    std::size_t row() const { return row_; }

  private:
    std::size_t row_;
};

/// Header of the corpus CSV.
const std::vector<std::string>& corpus_columns();

void write_csv(const MeasurementTable& table, const std::filesystem::path& path);
void write_csv(const MeasurementTable& table, std::ostream& out);

MeasurementTable ingest_csv(const std::filesystem::path& path);
MeasurementTable ingest_csv(std::istream& in);

/// Model manifest: JSON array of model profiles.
void write_manifest(const std::vector<ModelProfile>& models, const std::filesystem::path& path);
std::vector<ModelProfile> read_manifest(const std::filesystem::path& path);

struct TrainTestSplit {
    std::vector<ModelProfile> train;
    std::vector<ModelProfile> test;
    /// Final cluster centroids, ascending GMAC.
    std::array<double, 3> centroids{};
    /// Base names chosen as test representatives, one per cluster, ascending GMAC.
    std::array<std::string, 3> representatives;
};

/// 1-D k-means (k = 3) over unpruned GMAC values. Lloyd iterations start from
/// centroids spaced evenly over [min, max]. The model nearest each centroid
/// (ties by name) goes to test with all its pruned variants.
TrainTestSplit split_train_test(const std::vector<ModelProfile>& models);

}  // namespace dpuconfig
