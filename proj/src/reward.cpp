#include "dpuconfig/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpuconfig {

namespace {

int edge_bin(double x, const std::array<double, 2>& edges) {
    if (x < edges[0]) return 0;
    if (x <= edges[1]) return 1;
    return 2;
}

int width_bin(double x, double width) {
    const double b = std::floor(x / width);
    if (!(b > 0)) return 0;
    return static_cast<int>(std::min(b, 3.0));
}

}  // namespace

void validate_reward_params(const RewardParams& p) {
    std::vector<std::string> errors;
    if (!(p.lambda >= 0 && p.lambda <= 1)) errors.emplace_back("lambda must be in [0, 1]");
    if (!(p.alpha > 0)) errors.emplace_back("alpha must be > 0");
    if (!(p.cpu_bin_width > 0)) errors.emplace_back("cpu_bin_width must be > 0");
    if (!(p.mem_bin_width > 0)) errors.emplace_back("mem_bin_width must be > 0");
    if (!(p.max_bandwidth > 0)) errors.emplace_back("max_bandwidth must be > 0");
    if (!(p.gmac_edges[0] <= p.gmac_edges[1])) errors.emplace_back("gmac_edges must be ascending");
    if (!(p.data_edges[0] <= p.data_edges[1])) errors.emplace_back("data_edges must be ascending");
    if (!errors.empty()) {
        std::string msg = "invalid reward parameters:";
        for (const auto& e : errors) msg += " " + e + ";";
        throw std::invalid_argument(msg);
    }
}

ContextKey ContextKey::from_index(int index) {
    if (index < 0 || index >= kCount) throw std::out_of_range("context key index out of range");
    ContextKey k;
    k.data_bin = index % 3;
    index /= 3;
    k.gmac_bin = index % 3;
    index /= 3;
    k.mem_bin = index % 4;
    k.cpu_bin = index / 4;
    return k;
}

ContextKey bucket_key(const Telemetry& t, const ModelProfile& model, const RewardParams& p) {
    ContextKey k;
    k.cpu_bin = width_bin(t.mean_cpu(), p.cpu_bin_width);
    k.mem_bin = width_bin(t.total_bandwidth_mbps() / (p.max_bandwidth / 1e6), p.mem_bin_width);
    k.gmac_bin = edge_bin(model.gmac, p.gmac_edges);
    k.data_bin = edge_bin(model.total_data_bytes(), p.data_edges);
    return k;
}

ContextKey bucket_key(const MeasurementRecord& record, const ModelProfile& model, const RewardParams& p) {
    return bucket_key(record.telemetry, model, p);
}

ContextBaselineStore::ContextBaselineStore(RewardParams params) : params_(params) {
    validate_reward_params(params_);
}

ContextBaselineStore::ContextBaselineStore(const ContextBaselineStore& other) {
    std::lock_guard lock(other.mutex_);
    params_ = other.params_;
    buckets_ = other.buckets_;
    global_ = other.global_;
}

ContextBaselineStore& ContextBaselineStore::operator=(const ContextBaselineStore& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    params_ = other.params_;
    buckets_ = other.buckets_;
    global_ = other.global_;
    return *this;
}

double ContextBaselineStore::baseline_unlocked(const ContextKey& key, double ppw) const {
    const double b_global = global_.count > 0 ? global_.mean : ppw;
    const auto it = buckets_.find(key.index());
    // (1 - lambda) * b + lambda * b does not always round back to b.
    if (it == buckets_.end()) return b_global;
    return (1.0 - params_.lambda) * it->second.mean + params_.lambda * b_global;
}

double ContextBaselineStore::baseline(const ContextKey& key, double ppw) const {
    std::lock_guard lock(mutex_);
    return baseline_unlocked(key, ppw);
}

double ContextBaselineStore::score_and_update(const ContextKey& key, double ppw) {
    std::lock_guard lock(mutex_);
    const double r = squash_reward(ppw, baseline_unlocked(key, ppw), params_.alpha);
    buckets_[key.index()].add(ppw);
    global_.add(ppw);
    return r;
}

void ContextBaselineStore::update_means(const ContextKey& key, double ppw) {
    if (!(std::isfinite(ppw) && ppw > 0)) throw std::invalid_argument("ppw must be finite and > 0");
    std::lock_guard lock(mutex_);
    buckets_[key.index()].add(ppw);
    global_.add(ppw);
}

RunningMean ContextBaselineStore::bucket(const ContextKey& key) const {
    std::lock_guard lock(mutex_);
    const auto it = buckets_.find(key.index());
    return it == buckets_.end() ? RunningMean{} : it->second;
}

RunningMean ContextBaselineStore::global() const {
    std::lock_guard lock(mutex_);
    return global_;
}

std::size_t ContextBaselineStore::bucket_count() const {
    std::lock_guard lock(mutex_);
    return buckets_.size();
}

nlohmann::json ContextBaselineStore::snapshot() const {
    std::lock_guard lock(mutex_);
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& [index, m] : buckets_) {
        const auto k = ContextKey::from_index(index);
        buckets.push_back({{"cpu_bin", k.cpu_bin},
                           {"mem_bin", k.mem_bin},
                           {"gmac_bin", k.gmac_bin},
                           {"data_bin", k.data_bin},
                           {"mean", m.mean},
                           {"count", m.count}});
    }
    return {{"lambda", params_.lambda},
            {"alpha", params_.alpha},
            {"cpu_bin_width", params_.cpu_bin_width},
            {"mem_bin_width", params_.mem_bin_width},
            {"max_bandwidth", params_.max_bandwidth},
            {"gmac_edges", params_.gmac_edges},
            {"data_edges", params_.data_edges},
            {"global", {{"mean", global_.mean}, {"count", global_.count}}},
            {"buckets", buckets}};
}

ContextBaselineStore ContextBaselineStore::from_snapshot(const nlohmann::json& j) {
    RewardParams p;
    p.lambda = j.at("lambda").get<double>();
    p.alpha = j.at("alpha").get<double>();
    p.cpu_bin_width = j.at("cpu_bin_width").get<double>();
    p.mem_bin_width = j.at("mem_bin_width").get<double>();
    p.max_bandwidth = j.at("max_bandwidth").get<double>();
    p.gmac_edges = j.at("gmac_edges").get<std::array<double, 2>>();
    p.data_edges = j.at("data_edges").get<std::array<double, 2>>();
    ContextBaselineStore store(p);
    store.global_ = {j.at("global").at("mean").get<double>(), j.at("global").at("count").get<std::uint64_t>()};
    std::uint64_t total = 0;
    for (const auto& b : j.at("buckets")) {
        ContextKey k{b.at("cpu_bin").get<int>(), b.at("mem_bin").get<int>(), b.at("gmac_bin").get<int>(),
                     b.at("data_bin").get<int>()};
        RunningMean m{b.at("mean").get<double>(), b.at("count").get<std::uint64_t>()};
        if (m.count == 0 || !std::isfinite(m.mean)) throw std::invalid_argument("baseline snapshot has an empty bucket");
        store.buckets_[k.index()] = m;
        total += m.count;
    }
    if (total != store.global_.count) {
        throw std::invalid_argument("baseline snapshot: global count differs from the sum of bucket counts");
    }
    return store;
}

bool operator==(const ContextBaselineStore& a, const ContextBaselineStore& b) {
    if (&a == &b) return true;
    std::scoped_lock lock(a.mutex_, b.mutex_);
    return a.params_ == b.params_ && a.buckets_ == b.buckets_ && a.global_ == b.global_;
}

double squash_reward(double ppw, double baseline, double alpha) {
    return std::tanh((ppw - baseline) / (alpha * std::max(1.0, std::abs(baseline))));
}

double calculate_reward(const MeasurementRecord& record, const ModelProfile& model, double fps_constraint,
                        ContextBaselineStore& store) {
    if (!(record.telemetry.p_fpga > 0)) throw std::invalid_argument("p_fpga must be > 0");
    if (record.fps < fps_constraint) return -1.0;
    const double ppw = record.fps / record.telemetry.p_fpga;
    return store.score_and_update(bucket_key(record, model, store.params()), ppw);
}

}  // namespace dpuconfig
