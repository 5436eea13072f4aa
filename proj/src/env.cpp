#include "dpuconfig/env.hpp"

#include <cmath>
#include <stdexcept>

namespace dpuconfig {

StateVector encode_state(const Telemetry& t, const ModelProfile& model, double fps_constraint,
                         const NormalizationParams& norm) {
    if (!(std::isfinite(fps_constraint) && fps_constraint > 0)) {
        throw std::invalid_argument("fps constraint must be finite and > 0");
    }
    const double bw_scale = norm.max_bandwidth / 1e6;
    StateVector s{};
    for (std::size_t i = 0; i < 4; ++i) s[slot::kCpu + i] = t.cpu[i];
    for (std::size_t i = 0; i < 5; ++i) s[slot::kMemRead + i] = t.mem_read[i] / bw_scale;
    for (std::size_t i = 0; i < 5; ++i) s[slot::kMemWrite + i] = t.mem_write[i] / bw_scale;
    s[slot::kPFpga] = t.p_fpga / norm.power_w;
    s[slot::kPArm] = t.p_arm / norm.power_w;
    s[slot::kGmac] = model.gmac / norm.gmac;
    s[slot::kLdfm] = model.ldfm / norm.bytes;
    s[slot::kLdwb] = model.ldwb / norm.bytes;
    s[slot::kStfm] = model.stfm / norm.bytes;
    s[slot::kParams] = model.params / norm.params;
    s[slot::kConstraint] = fps_constraint / norm.fps;
    for (double v : s) {
        if (!std::isfinite(v)) throw std::invalid_argument("state encoding produced a non-finite value");
    }
    return s;
}

Environment::Environment(const MeasurementTable& table, const CalibrationParams& calibration,
                         ContextBaselineStore& store, NormalizationParams norm)
    : table_(table), calibration_(calibration), store_(store), norm_(norm) {}

StateVector Environment::reset(const ModelProfile& model, WorkloadState workload, double fps_constraint) {
    if (!table_.find(model.variant_id(), action_space().front(), workload)) {
        throw std::out_of_range("no measurements for model " + model.variant_id() + " in state " +
                                to_char(workload));
    }
    const auto state = encode_state(idle_telemetry(workload, calibration_), model, fps_constraint, norm_);
    model_ = model;
    workload_ = workload;
    constraint_ = fps_constraint;
    return state;
}

std::pair<EpisodeOutcome, bool> Environment::step(std::size_t action) {
    if (!model_) throw std::logic_error("step called without a preceding reset");
    if (action >= kActionCount) throw std::out_of_range("action index out of range");
    EpisodeOutcome out;
    out.record = table_.at(model_->variant_id(), action_space()[action], workload_);
    out.ppw = out.record.fps / out.record.telemetry.p_fpga;
    out.reward = calculate_reward(out.record, *model_, constraint_, store_);
    model_.reset();
    return {std::move(out), true};
}

}  // namespace dpuconfig
