#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>

#include "json.hpp"

#include "dpuconfig/corpus.hpp"

namespace dpuconfig {

struct RewardParams {
    /// Weight of the global mean in the blended baseline.
    double lambda = 0.3;
    /// Reward temperature; larger values flatten the tanh.
    double alpha = 0.5;
    double cpu_bin_width = 0.25;
    /// Width of a memory bin as a fraction of max_bandwidth.
    double mem_bin_width = 0.25;
    /// Bandwidth that mem_bin_width is relative to, bytes/s.
    double max_bandwidth = 6.5e9;
    /// GMAC bin edges: below the first, between (inclusive), above the second.
    std::array<double, 2> gmac_edges{2.0, 8.0};
    /// Model data (ldfm + ldwb + stfm) bin edges in bytes.
    std::array<double, 2> data_edges{20e6, 80e6};

    friend bool operator==(const RewardParams&, const RewardParams&) = default;
};

/// Throws std::invalid_argument listing every violated field.
void validate_reward_params(const RewardParams& params);

struct ContextKey {
    int cpu_bin = 0;
    int mem_bin = 0;
    int gmac_bin = 0;
    int data_bin = 0;

    static constexpr int kCount = 4 * 4 * 3 * 3;

    /// Dense index in [0, 144).
    int index() const { return ((cpu_bin * 4 + mem_bin) * 3 + gmac_bin) * 3 + data_bin; }
    static ContextKey from_index(int index);

    friend bool operator==(const ContextKey&, const ContextKey&) = default;
};

ContextKey bucket_key(const Telemetry& telemetry, const ModelProfile& model, const RewardParams& params);
ContextKey bucket_key(const MeasurementRecord& record, const ModelProfile& model, const RewardParams& params);

struct RunningMean {
    double mean = 0.0;
    std::uint64_t count = 0;

    void add(double x) {
        ++count;
        mean += (x - mean) / static_cast<double>(count);
    }
    friend bool operator==(const RunningMean&, const RunningMean&) = default;
};

/// Per-context and global running PPW means. reward() reads the baseline and
/// updates the means under one lock, so concurrent environments may share a store.
class ContextBaselineStore {
  public:
    explicit ContextBaselineStore(RewardParams params = {});
    ContextBaselineStore(const ContextBaselineStore& other);
    ContextBaselineStore& operator=(const ContextBaselineStore& other);

    const RewardParams& params() const { return params_; }

    /// Blended baseline for a key; falls back to ppw when the store is empty.
    double baseline(const ContextKey& key, double ppw) const;

    /// Reward after the constraint gate: returns the squashed reward
    /// for ppw and then records it.
    double score_and_update(const ContextKey& key, double ppw);

    /// Incremental mean update of the bucket and the global aggregate.
    void update_means(const ContextKey& key, double ppw);

    /// Bucket state; count 0 when the bucket is empty.
    RunningMean bucket(const ContextKey& key) const;
    RunningMean global() const;
    std::size_t bucket_count() const;

    nlohmann::json snapshot() const;
    static ContextBaselineStore from_snapshot(const nlohmann::json& j);

    friend bool operator==(const ContextBaselineStore& a, const ContextBaselineStore& b);

  private:
    double baseline_unlocked(const ContextKey& key, double ppw) const;

    RewardParams params_;
    std::map<int, RunningMean> buckets_;
    RunningMean global_;
    mutable std::mutex mutex_;
};

/// tanh((ppw - baseline) / (alpha * max(1, |baseline|)))
double squash_reward(double ppw, double baseline, double alpha);

/// Returns -1 without touching the store when record.fps < fps_constraint;
/// otherwise scores ppw = fps / p_fpga against the blended baseline and
/// updates the store. Throws std::invalid_argument for non-positive p_fpga.
double calculate_reward(const MeasurementRecord& record, const ModelProfile& model, double fps_constraint,
                        ContextBaselineStore& store);

}  // namespace dpuconfig
