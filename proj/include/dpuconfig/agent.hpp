#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "dpuconfig/env.hpp"
#include "dpuconfig/reward.hpp"

namespace dpuconfig {

inline constexpr std::size_t kHidden = 64;

/// Flat parameter layout: W1 (64x22), b1, W2 (64x64), b2, Wp (26x64), bp, wv (64), bv.
/// Matrices are row-major with one row per output unit.
namespace layout {
inline constexpr std::size_t kW1 = 0;
inline constexpr std::size_t kB1 = kW1 + kHidden * kStateSize;
inline constexpr std::size_t kW2 = kB1 + kHidden;
inline constexpr std::size_t kB2 = kW2 + kHidden * kHidden;
inline constexpr std::size_t kWp = kB2 + kHidden;
inline constexpr std::size_t kBp = kWp + kActionCount * kHidden;
inline constexpr std::size_t kWv = kBp + kActionCount;
inline constexpr std::size_t kBv = kWv + kHidden;
inline constexpr std::size_t kCount = kBv + 1;
}  // namespace layout

struct PpoHyperparams {
    double learning_rate = 3e-4;
    double clip_epsilon = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    std::size_t batch_size = 256;
    std::size_t epochs = 4;
    std::size_t minibatch_size = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    friend bool operator==(const PpoHyperparams&, const PpoHyperparams&) = default;
};

/// Throws std::invalid_argument listing every violated field.
void validate_hyperparams(const PpoHyperparams& hyper);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct PolicyParameters {
    std::vector<double> theta;
    AdamState adam;

    /// Every weight zero: uniform policy, zero value.
    static PolicyParameters zeros();
    /// Trunk weights drawn from N(0, 1/fan_in), biases and both heads zero.
    static PolicyParameters initialize(std::uint64_t seed);

    friend bool operator==(const PolicyParameters&, const PolicyParameters&) = default;
};

using ActionVector = std::array<double, kActionCount>;

struct PolicyOutput {
    ActionVector probs{};
    ActionVector log_probs{};
    double value = 0.0;
};

/// Throws std::invalid_argument for a wrong parameter count or non-finite state.
PolicyOutput policy_forward(std::span<const double> theta, const StateVector& state);
PolicyOutput policy_forward(const PolicyParameters& params, const StateVector& state);

/// Shannon entropy in nats.
double entropy(const ActionVector& probs);

struct SampledAction {
    std::size_t action = 0;
    double log_prob = 0.0;
};

/// Inverse-CDF draw using the top 53 bits of one generator output. Throws
/// std::invalid_argument for negative, non-finite or all-zero probabilities.
SampledAction sample_action(const ActionVector& probs, std::mt19937_64& rng);

/// Argmax of the policy; ties go to the lowest index.
std::size_t act_greedy(const PolicyParameters& params, const StateVector& state);

struct EpisodeSample {
    StateVector state{};
    std::size_t action = 0;
    double log_prob = 0.0;
    double reward = 0.0;
    double value_estimate = 0.0;
};

struct LossBreakdown {
    /// policy + value_coef * value - entropy_coef * entropy
    double total = 0.0;
    /// -mean(min(rho * A, clip(rho) * A))
    double policy = 0.0;
    /// mean((V - r)^2)
    double value = 0.0;
    double entropy = 0.0;
    /// mean(old_log_prob - new_log_prob)
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
};

/// PPO loss to minimise over a batch, with A = reward - value_estimate. When
/// grad is non-null it is resized to theta's length and filled with dLoss/dtheta.
LossBreakdown ppo_loss(std::span<const double> theta, std::span<const EpisodeSample> batch,
                       const PpoHyperparams& hyper, std::vector<double>* grad);

/// Epochs of shuffled minibatch Adam steps on ppo_loss. Returns the loss terms
/// averaged over every minibatch. Throws std::runtime_error naming the first
/// non-finite gradient entry, leaving params untouched for that minibatch.
LossBreakdown ppo_update(PolicyParameters& params, std::span<const EpisodeSample> batch, const PpoHyperparams& hyper,
                         std::mt19937_64& rng);

struct TrainingLogEntry {
    std::uint64_t update = 0;
    std::uint64_t episodes = 0;
    double mean_reward = 0.0;
    /// Fraction of batch episodes that met the fps constraint.
    double constraint_rate = 0.0;
    LossBreakdown loss;
};

struct TrainingResult {
    PolicyParameters params;
    std::vector<TrainingLogEntry> log;
};

struct ScheduleEntry {
    std::size_t model = 0;
    std::size_t workload = 0;
};

/// Round-robin (model, workload) pair for a 0-based episode index: every
/// workload of model 0, then of model 1, and so on.
ScheduleEntry schedule_entry(std::uint64_t episode, std::size_t n_models, std::size_t n_workloads);

struct TrainOptions {
    std::uint64_t episodes = 200000;
    double fps_constraint = 30.0;
    std::uint64_t seed = 1;
    PpoHyperparams hyper;
    /// Called after every PPO update.
    std::function<void(const TrainingLogEntry&)> on_update;
};

/// Runs the single-step episodes against env, updating the policy every
/// batch_size episodes. A trailing partial batch still feeds the baseline store
/// but does not trigger an update. Deterministic in options.seed.
TrainingResult train(Environment& env, const std::vector<ModelProfile>& models,
                     std::span<const WorkloadState> workloads, const TrainOptions& options);

/// Same as above but continues from existing parameters.
TrainingResult train(Environment& env, const std::vector<ModelProfile>& models,
                     std::span<const WorkloadState> workloads, const TrainOptions& options,
                     PolicyParameters initial);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    PolicyParameters params;
    ContextBaselineStore store;
    nlohmann::json config;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws std::runtime_error for a missing file, malformed content or a version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dpuconfig
