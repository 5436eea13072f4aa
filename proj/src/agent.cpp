#include "dpuconfig/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dpuconfig {

namespace {

struct Activations {
    std::array<double, kHidden> h1{};
    std::array<double, kHidden> h2{};
    ActionVector probs{};
    ActionVector log_probs{};
    double value = 0.0;
};

// out[i] = b[i] + sum_j w[i * n_in + j] * x[j], four rows at a time so the
// additions of different rows overlap. Each row keeps its left-to-right order.
template <std::size_t NOut, std::size_t NIn>
void dense(const double* w, const double* b, const double* x, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= NOut; i += 4) {
        const double* w0 = w + i * NIn;
        double s0 = b[i], s1 = b[i + 1], s2 = b[i + 2], s3 = b[i + 3];
        for (std::size_t j = 0; j < NIn; ++j) {
            s0 += w0[j] * x[j];
            s1 += w0[NIn + j] * x[j];
            s2 += w0[2 * NIn + j] * x[j];
            s3 += w0[3 * NIn + j] * x[j];
        }
        out[i] = s0;
        out[i + 1] = s1;
        out[i + 2] = s2;
        out[i + 3] = s3;
    }
    if constexpr (NOut % 4 != 0) {
        for (; i < NOut; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < NIn; ++j) s += w[i * NIn + j] * x[j];
            out[i] = s;
        }
    }
}

void forward(const double* th, const StateVector& x, Activations& a) {
    dense<kHidden, kStateSize>(th + layout::kW1, th + layout::kB1, x.data(), a.h1.data());
    for (auto& h : a.h1) h = std::tanh(h);
    dense<kHidden, kHidden>(th + layout::kW2, th + layout::kB2, a.h1.data(), a.h2.data());
    for (auto& h : a.h2) h = std::tanh(h);
    ActionVector z{};
    dense<kActionCount, kHidden>(th + layout::kWp, th + layout::kBp, a.h2.data(), z.data());
    double v = th[layout::kBv];
    for (std::size_t j = 0; j < kHidden; ++j) v += th[layout::kWv + j] * a.h2[j];
    a.value = v;

    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < kActionCount; ++k) sum += std::exp(z[k] - zmax);
    const double log_norm = zmax + std::log(sum);
    for (std::size_t k = 0; k < kActionCount; ++k) {
        a.log_probs[k] = z[k] - log_norm;
        a.probs[k] = std::exp(a.log_probs[k]);
    }
}

// Accumulates dLoss/dtheta given the loss gradient at the logits and the value output.
void backward(const double* th, const StateVector& x, const Activations& a, const ActionVector& dz, double dv,
              double* g) {
    std::array<double, kHidden> dh2{};
    for (std::size_t k = 0; k < kActionCount; ++k) {
        const double* w = th + layout::kWp + k * kHidden;
        double* gw = g + layout::kWp + k * kHidden;
        for (std::size_t j = 0; j < kHidden; ++j) {
            gw[j] += dz[k] * a.h2[j];
            dh2[j] += dz[k] * w[j];
        }
        g[layout::kBp + k] += dz[k];
    }
    for (std::size_t j = 0; j < kHidden; ++j) {
        g[layout::kWv + j] += dv * a.h2[j];
        dh2[j] += dv * th[layout::kWv + j];
    }
    g[layout::kBv] += dv;

    std::array<double, kHidden> dh1{};
    for (std::size_t i = 0; i < kHidden; ++i) {
        const double da = dh2[i] * (1.0 - a.h2[i] * a.h2[i]);
        const double* w = th + layout::kW2 + i * kHidden;
        double* gw = g + layout::kW2 + i * kHidden;
        for (std::size_t j = 0; j < kHidden; ++j) {
            gw[j] += da * a.h1[j];
            dh1[j] += da * w[j];
        }
        g[layout::kB2 + i] += da;
    }
    for (std::size_t i = 0; i < kHidden; ++i) {
        const double da = dh1[i] * (1.0 - a.h1[i] * a.h1[i]);
        double* gw = g + layout::kW1 + i * kStateSize;
        for (std::size_t j = 0; j < kStateSize; ++j) gw[j] += da * x[j];
        g[layout::kB1 + i] += da;
    }
}

void require_theta(std::span<const double> theta) {
    if (theta.size() != layout::kCount) {
        throw std::invalid_argument("expected " + std::to_string(layout::kCount) + " parameters, got " +
                                    std::to_string(theta.size()));
    }
}

void require_finite_state(const StateVector& s) {
    for (double v : s) {
        if (!std::isfinite(v)) throw std::invalid_argument("state contains a non-finite value");
    }
}

void adam_step(PolicyParameters& p, const std::vector<double>& grad, const PpoHyperparams& h) {
    auto& st = p.adam;
    ++st.step;
    const double b1t = 1.0 - std::pow(h.adam_beta1, static_cast<double>(st.step));
    const double b2t = 1.0 - std::pow(h.adam_beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < p.theta.size(); ++i) {
        st.m[i] = h.adam_beta1 * st.m[i] + (1.0 - h.adam_beta1) * grad[i];
        st.v[i] = h.adam_beta2 * st.v[i] + (1.0 - h.adam_beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / b1t;
        const double vhat = st.v[i] / b2t;
        p.theta[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.adam_epsilon);
    }
}

LossBreakdown& accumulate(LossBreakdown& acc, const LossBreakdown& x) {
    acc.total += x.total;
    acc.policy += x.policy;
    acc.value += x.value;
    acc.entropy += x.entropy;
    acc.approx_kl += x.approx_kl;
    acc.clip_fraction += x.clip_fraction;
    return acc;
}

LossBreakdown scaled(LossBreakdown x, double k) {
    x.total *= k;
    x.policy *= k;
    x.value *= k;
    x.entropy *= k;
    x.approx_kl *= k;
    x.clip_fraction *= k;
    return x;
}

}  // namespace

void validate_hyperparams(const PpoHyperparams& h) {
    std::vector<std::string> errors;
    if (!(h.learning_rate > 0)) errors.emplace_back("learning_rate must be > 0");
    if (!(h.clip_epsilon >= 0 && h.clip_epsilon < 1)) errors.emplace_back("clip_epsilon must be in [0, 1)");
    if (!(h.value_coef >= 0)) errors.emplace_back("value_coef must be >= 0");
    if (!(h.entropy_coef >= 0)) errors.emplace_back("entropy_coef must be >= 0");
    if (h.batch_size == 0) errors.emplace_back("batch_size must be >= 1");
    if (h.epochs == 0) errors.emplace_back("epochs must be >= 1");
    if (h.minibatch_size == 0) errors.emplace_back("minibatch_size must be >= 1");
    if (!(h.adam_beta1 >= 0 && h.adam_beta1 < 1)) errors.emplace_back("adam_beta1 must be in [0, 1)");
    if (!(h.adam_beta2 >= 0 && h.adam_beta2 < 1)) errors.emplace_back("adam_beta2 must be in [0, 1)");
    if (!(h.adam_epsilon > 0)) errors.emplace_back("adam_epsilon must be > 0");
    if (!errors.empty()) {
        std::string msg = "invalid PPO hyperparameters:";
        for (const auto& e : errors) msg += " " + e + ";";
        throw std::invalid_argument(msg);
    }
}

PolicyParameters PolicyParameters::zeros() {
    PolicyParameters p;
    p.theta.assign(layout::kCount, 0.0);
    p.adam.m.assign(layout::kCount, 0.0);
    p.adam.v.assign(layout::kCount, 0.0);
    return p;
}

PolicyParameters PolicyParameters::initialize(std::uint64_t seed) {
    auto p = zeros();
    std::seed_seq seq{seed, std::uint64_t{0x1517}};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(static_cast<double>(kStateSize)));
    std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(static_cast<double>(kHidden)));
    for (std::size_t i = 0; i < kHidden * kStateSize; ++i) p.theta[layout::kW1 + i] = w1(rng);
    for (std::size_t i = 0; i < kHidden * kHidden; ++i) p.theta[layout::kW2 + i] = w2(rng);
    return p;
}

PolicyOutput policy_forward(std::span<const double> theta, const StateVector& state) {
    require_theta(theta);
    require_finite_state(state);
    Activations a;
    forward(theta.data(), state, a);
    return {a.probs, a.log_probs, a.value};
}

PolicyOutput policy_forward(const PolicyParameters& params, const StateVector& state) {
    return policy_forward(std::span<const double>(params.theta), state);
}

double entropy(const ActionVector& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0) h -= p * std::log(p);
    }
    return h;
}

SampledAction sample_action(const ActionVector& probs, std::mt19937_64& rng) {
    double total = 0.0;
    for (double p : probs) {
        if (!(std::isfinite(p) && p >= 0)) throw std::invalid_argument("probabilities must be finite and >= 0");
        total += p;
    }
    if (!(total > 0)) throw std::invalid_argument("degenerate distribution: all probabilities are zero");

    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (probs[k] <= 0) continue;
        last_positive = k;
        cumulative += probs[k];
        if (u < cumulative) return {k, std::log(probs[k] / total)};
    }
    return {last_positive, std::log(probs[last_positive] / total)};
}

std::size_t act_greedy(const PolicyParameters& params, const StateVector& state) {
    const auto out = policy_forward(params, state);
    return static_cast<std::size_t>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
}

LossBreakdown ppo_loss(std::span<const double> theta, std::span<const EpisodeSample> batch,
                       const PpoHyperparams& hyper, std::vector<double>* grad) {
    require_theta(theta);
    if (batch.empty()) throw std::invalid_argument("ppo_loss: empty batch");
    if (grad) grad->assign(theta.size(), 0.0);

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const double eps = hyper.clip_epsilon;
    LossBreakdown out;
    Activations a;
    for (const auto& s : batch) {
        if (s.action >= kActionCount) throw std::invalid_argument("ppo_loss: action index out of range");
        forward(theta.data(), s.state, a);

        const double adv = s.reward - s.value_estimate;
        const double log_new = a.log_probs[s.action];
        const double rho = std::exp(log_new - s.log_prob);
        const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps);
        const double unclipped_term = rho * adv;
        const double clipped_term = clipped * adv;
        const bool unclipped_active = unclipped_term <= clipped_term;
        const double h = entropy(a.probs);
        const double verr = a.value - s.reward;

        out.policy -= std::min(unclipped_term, clipped_term) * inv_n;
        out.value += verr * verr * inv_n;
        out.entropy += h * inv_n;
        out.approx_kl += (s.log_prob - log_new) * inv_n;
        if (std::abs(rho - 1.0) > eps) out.clip_fraction += inv_n;

        if (!grad) continue;
        ActionVector dz{};
        // Policy term: d(-rho*A)/dz = -rho*A * (onehot(a) - pi), zero when the clip is active.
        if (unclipped_active) {
            const double dlogp = -unclipped_term * inv_n;
            for (std::size_t k = 0; k < kActionCount; ++k) dz[k] -= dlogp * a.probs[k];
            dz[s.action] += dlogp;
        }
        // Entropy bonus: dH/dz = -pi * (log pi + H).
        for (std::size_t k = 0; k < kActionCount; ++k) {
            dz[k] += hyper.entropy_coef * inv_n * a.probs[k] * (a.log_probs[k] + h);
        }
        const double dv = 2.0 * hyper.value_coef * verr * inv_n;
        backward(theta.data(), s.state, a, dz, dv, grad->data());
    }
    out.total = out.policy + hyper.value_coef * out.value - hyper.entropy_coef * out.entropy;
    return out;
}

LossBreakdown ppo_update(PolicyParameters& params, std::span<const EpisodeSample> batch, const PpoHyperparams& hyper,
                         std::mt19937_64& rng) {
    validate_hyperparams(hyper);
    if (batch.empty()) throw std::invalid_argument("ppo_update: empty batch");
    require_theta(params.theta);

    std::vector<std::size_t> order(batch.size());
    std::vector<EpisodeSample> mini;
    std::vector<double> grad;
    LossBreakdown sum;
    std::size_t steps = 0;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        for (std::size_t start = 0; start < order.size(); start += hyper.minibatch_size) {
            const std::size_t end = std::min(order.size(), start + hyper.minibatch_size);
            mini.clear();
            for (std::size_t i = start; i < end; ++i) mini.push_back(batch[order[i]]);
            const auto loss = ppo_loss(params.theta, mini, hyper, &grad);
            for (std::size_t i = 0; i < grad.size(); ++i) {
                if (!std::isfinite(grad[i])) {
                    throw std::runtime_error("non-finite gradient at parameter " + std::to_string(i) + " (epoch " +
                                             std::to_string(epoch) + ", loss " + std::to_string(loss.total) +
                                             ", policy " + std::to_string(loss.policy) + ", value " +
                                             std::to_string(loss.value) + ")");
                }
            }
            adam_step(params, grad, hyper);
            accumulate(sum, loss);
            ++steps;
        }
    }
    return scaled(sum, 1.0 / static_cast<double>(steps));
}

ScheduleEntry schedule_entry(std::uint64_t episode, std::size_t n_models, std::size_t n_workloads) {
    const std::uint64_t pair = episode % (static_cast<std::uint64_t>(n_models) * n_workloads);
    return {static_cast<std::size_t>(pair / n_workloads), static_cast<std::size_t>(pair % n_workloads)};
}

TrainingResult train(Environment& env, const std::vector<ModelProfile>& models,
                     std::span<const WorkloadState> workloads, const TrainOptions& options) {
    return train(env, models, workloads, options, PolicyParameters::initialize(options.seed));
}

TrainingResult train(Environment& env, const std::vector<ModelProfile>& models,
                     std::span<const WorkloadState> workloads, const TrainOptions& options,
                     PolicyParameters initial) {
    validate_hyperparams(options.hyper);
    if (models.empty()) throw std::invalid_argument("train: model list is empty");
    if (workloads.empty()) throw std::invalid_argument("train: workload list is empty");

    TrainingResult result{std::move(initial), {}};
    std::seed_seq seq{options.seed, std::uint64_t{0x7a11}};
    std::mt19937_64 rng(seq);
    std::vector<EpisodeSample> batch;
    batch.reserve(options.hyper.batch_size);
    double reward_sum = 0.0;
    std::size_t satisfied = 0;

    for (std::uint64_t e = 0; e < options.episodes; ++e) {
        const auto slot = schedule_entry(e, models.size(), workloads.size());
        EpisodeSample s;
        s.state = env.reset(models[slot.model], workloads[slot.workload], options.fps_constraint);
        const auto out = policy_forward(result.params, s.state);
        const auto pick = sample_action(out.probs, rng);
        s.action = pick.action;
        s.log_prob = out.log_probs[pick.action];
        s.value_estimate = out.value;
        const auto [outcome, done] = env.step(s.action);
        s.reward = outcome.reward;
        reward_sum += s.reward;
        if (outcome.record.fps >= options.fps_constraint) ++satisfied;
        batch.push_back(s);

        if (batch.size() == options.hyper.batch_size) {
            TrainingLogEntry entry;
            entry.update = result.log.size() + 1;
            entry.episodes = e + 1;
            entry.mean_reward = reward_sum / static_cast<double>(batch.size());
            entry.constraint_rate = static_cast<double>(satisfied) / static_cast<double>(batch.size());
            entry.loss = ppo_update(result.params, batch, options.hyper, rng);
            result.log.push_back(entry);
            if (options.on_update) options.on_update(entry);
            batch.clear();
            reward_sum = 0.0;
            satisfied = 0;
        }
    }
    return result;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    const nlohmann::json j{{"format", "dpuconfig-checkpoint"},
                           {"version", kCheckpointVersion},
                           {"theta", c.params.theta},
                           {"adam", {{"m", c.params.adam.m}, {"v", c.params.adam.v}, {"step", c.params.adam.step}}},
                           {"baseline_store", c.store.snapshot()},
                           {"config", c.config}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        if (j.value("format", "") != "dpuconfig-checkpoint") {
            throw std::runtime_error("not a dpuconfig checkpoint");
        }
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
        }
        Checkpoint c{PolicyParameters{}, ContextBaselineStore::from_snapshot(j.at("baseline_store")),
                     j.at("config")};
        c.params.theta = j.at("theta").get<std::vector<double>>();
        c.params.adam.m = j.at("adam").at("m").get<std::vector<double>>();
        c.params.adam.v = j.at("adam").at("v").get<std::vector<double>>();
        c.params.adam.step = j.at("adam").at("step").get<std::uint64_t>();
        for (const auto* v : {&c.params.theta, &c.params.adam.m, &c.params.adam.v}) {
            if (v->size() != layout::kCount) throw std::runtime_error("parameter vector has the wrong length");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace dpuconfig
