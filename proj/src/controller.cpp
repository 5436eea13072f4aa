#include "dpuconfig/controller.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "dpuconfig/evaluator.hpp"

namespace dpuconfig {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

const ModelProfile& find_model(const std::vector<ModelProfile>& models, const std::string& id) {
    for (const auto& m : models) {
        if (m.variant_id() == id) return m;
    }
    throw std::invalid_argument("unknown model '" + id + "' in scenario");
}

// Detail text may end up in a CSV cell.
std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

void validate_overheads(const OverheadProfile& o) {
    std::vector<std::string> errors;
    auto check = [&](double v, const char* name) {
        if (!(std::isfinite(v) && v >= 0)) errors.push_back(std::string(name) + " must be finite and >= 0");
    };
    check(o.telemetry_ms, "telemetry_ms");
    check(o.rl_inference_ms, "rl_inference_ms");
    check(o.reconfigure_ms, "reconfigure_ms");
    check(o.instruction_load_ms, "instruction_load_ms");
    if (!errors.empty()) {
        std::string msg = "invalid overhead profile:";
        for (const auto& e : errors) msg += " " + e + ";";
        throw std::invalid_argument(msg);
    }
}

const char* to_string(Phase phase) {
    switch (phase) {
        case Phase::Telemetry: return "telemetry";
        case Phase::Decide: return "decide";
        case Phase::Reconfigure: return "reconfigure";
        case Phase::LoadInstructions: return "load_instructions";
        case Phase::Inference: return "inference";
    }
    return "unknown";
}

std::vector<Phase> decide_transition(const std::optional<Deployment>& current, const Deployment& next) {
    std::vector<Phase> plan{Phase::Telemetry, Phase::Decide};
    const bool same_config = current && current->config == next.config;
    if (!same_config) plan.push_back(Phase::Reconfigure);
    if (!same_config || current->model != next.model) plan.push_back(Phase::LoadInstructions);
    return plan;
}

double phase_duration(Phase phase, const OverheadProfile& o) {
    switch (phase) {
        case Phase::Telemetry: return o.telemetry_ms;
        case Phase::Decide: return o.rl_inference_ms;
        case Phase::Reconfigure: return o.reconfigure_ms;
        case Phase::LoadInstructions: return o.instruction_load_ms;
        case Phase::Inference: break;
    }
    throw std::invalid_argument("inference has no fixed duration");
}

DecisionFn agent_decisions(const PolicyParameters& params, const CalibrationParams& calibration,
                           const NormalizationParams& norm) {
    return [&params, calibration, norm](const ModelProfile& m, WorkloadState w, double fps_constraint) {
        return act_greedy(params, encode_state(idle_telemetry(w, calibration), m, fps_constraint, norm));
    };
}

ScenarioResult run_scenario(const std::vector<Arrival>& arrivals, const DecisionFn& decide,
                            const MeasurementTable& table, const std::vector<ModelProfile>& models,
                            const OverheadProfile& overheads) {
    validate_overheads(overheads);
    for (std::size_t i = 1; i < arrivals.size(); ++i) {
        if (arrivals[i].time_ms < arrivals[i - 1].time_ms) {
            throw std::invalid_argument("arrivals must be sorted by time (arrival " + std::to_string(i) + ")");
        }
    }

    ScenarioResult result;
    std::optional<Deployment> loaded;
    double clock = 0.0;
    for (const auto& a : arrivals) {
        if (!(a.duration_ms >= 0)) throw std::invalid_argument("arrival duration must be >= 0");
        const auto& model = find_model(models, a.model);
        const std::size_t action = decide(model, a.workload, a.fps_constraint);
        if (action >= kActionCount) throw std::out_of_range("decision returned an action out of range");
        const Deployment next{action_space()[action], a.model};
        const auto& rec = table.at(a.model, next.config, a.workload);
        const auto oracle = oracle_best(table, model, a.workload, a.fps_constraint);

        clock = std::max(clock, a.time_ms);
        ArrivalOutcome outcome{a.model, a.workload, next.config, rec.fps, rec.fps / rec.telemetry.p_fpga,
                               oracle.ppw, 0.0, false};
        for (Phase p : decide_transition(loaded, next)) {
            std::string detail;
            switch (p) {
                case Phase::Telemetry: detail = std::string("state ") + to_char(a.workload); break;
                case Phase::Decide: detail = a.model + " -> " + next.config.label(); break;
                case Phase::Reconfigure:
                    detail = (loaded ? loaded->config.label() : std::string("empty")) + " -> " + next.config.label();
                    outcome.reconfigured = true;
                    break;
                case Phase::LoadInstructions: detail = a.model + " on " + next.config.label(); break;
                case Phase::Inference: break;
            }
            const double d = phase_duration(p, overheads);
            result.events.push_back({clock, d, p, detail});
            clock += d;
            outcome.overhead_ms += d;
        }
        result.events.push_back({clock, a.duration_ms, Phase::Inference,
                                 a.model + " " + next.config.label() + " fps " + format_number(rec.fps) +
                                     " ppw " + format_number(outcome.ppw)});
        clock += a.duration_ms;
        loaded = next;

        auto& s = result.summary;
        ++s.arrivals;
        if (outcome.reconfigured) ++s.reconfigurations;
        s.total_overhead_ms += outcome.overhead_ms;
        s.total_inference_ms += a.duration_ms;
        s.mean_ppw += outcome.ppw;
        s.mean_oracle_ppw += outcome.oracle_ppw;
        s.mean_normalized_ppw += outcome.ppw / outcome.oracle_ppw;
        result.outcomes.push_back(std::move(outcome));
    }

    auto& s = result.summary;
    if (s.arrivals > 0) {
        const double n = static_cast<double>(s.arrivals);
        s.mean_ppw /= n;
        s.mean_oracle_ppw /= n;
        s.mean_normalized_ppw /= n;
    }
    const double busy = s.total_overhead_ms + s.total_inference_ms;
    s.overhead_fraction = busy > 0 ? s.total_overhead_ms / busy : 0.0;
    return result;
}

std::vector<Arrival> read_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario " + path.string());
    std::vector<Arrival> out;
    try {
        nlohmann::json j;
        in >> j;
        for (const auto& a : j.at("arrivals")) {
            Arrival arrival;
            arrival.time_ms = a.at("time_ms").get<double>();
            arrival.model = a.at("model").get<std::string>();
            arrival.workload = parse_workload(a.at("workload").get<std::string>());
            arrival.fps_constraint = a.value("fps_constraint", 30.0);
            arrival.duration_ms = a.value("duration_ms", 60000.0);
            out.push_back(std::move(arrival));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return out;
}

void write_timeline_csv(const std::vector<TimelineEvent>& events, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    out << "start_ms,duration_ms,phase,detail\n";
    for (const auto& e : events) {
        out << format_number(e.start_ms) << ',' << format_number(e.duration_ms) << ',' << to_string(e.phase) << ','
            << csv_cell(e.detail) << '\n';
    }
}

void write_timeline_plot(const ScenarioResult& result, const std::filesystem::path& path) {
    nlohmann::ordered_json segments = nlohmann::ordered_json::array();
    for (const auto& e : result.events) {
        segments.push_back({{"start_ms", e.start_ms},
                            {"end_ms", e.start_ms + e.duration_ms},
                            {"phase", to_string(e.phase)},
                            {"detail", e.detail}});
    }
    nlohmann::ordered_json deployments = nlohmann::ordered_json::array();
    for (const auto& o : result.outcomes) {
        deployments.push_back({{"model", o.model},
                               {"workload", std::string(1, to_char(o.workload))},
                               {"config", o.config.label()},
                               {"fps", o.fps},
                               {"ppw", o.ppw},
                               {"oracle_ppw", o.oracle_ppw},
                               {"overhead_ms", o.overhead_ms}});
    }
    nlohmann::ordered_json j{
        {"title", "Decision-loop timeline"},
        {"lanes", {"telemetry", "decide", "reconfigure", "load_instructions", "inference"}},
        {"segments", segments},
        {"deployments", deployments}};
    auto out = open_for_write(path);
    out << j.dump(2) << '\n';
}

void write_scenario_summary(const ScenarioResult& result, const std::filesystem::path& path) {
    const auto& s = result.summary;
    nlohmann::ordered_json j{{"arrivals", s.arrivals},
                             {"reconfigurations", s.reconfigurations},
                             {"total_overhead_ms", s.total_overhead_ms},
                             {"total_inference_ms", s.total_inference_ms},
                             {"overhead_fraction", s.overhead_fraction},
                             {"mean_ppw", s.mean_ppw},
                             {"mean_oracle_ppw", s.mean_oracle_ppw},
                             {"mean_normalized_ppw", s.mean_normalized_ppw}};
    auto out = open_for_write(path);
    out << j.dump(2) << '\n';
}

}  // namespace dpuconfig
