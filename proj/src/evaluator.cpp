#include "dpuconfig/evaluator.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dpuconfig {

namespace {

double ppw_of(const MeasurementRecord& r) { return r.fps / r.telemetry.p_fpga; }

// True when a should be preferred over b at equal PPW.
bool tie_prefers(const DpuConfiguration& a, const DpuConfiguration& b) {
    if (a.instances != b.instances) return a.instances < b.instances;
    return architecture_rank(a.arch) < architecture_rank(b.arch);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("cannot format number");
    return std::string(buf, ptr);
}

OracleChoice oracle_best(std::span<const MeasurementRecord* const> records, double fps_constraint) {
    if (records.empty()) throw std::invalid_argument("oracle_best: no records");
    auto pick = [&](bool require_feasible) -> const MeasurementRecord* {
        const MeasurementRecord* best = nullptr;
        for (const auto* r : records) {
            if (require_feasible && r->fps < fps_constraint) continue;
            if (!best || ppw_of(*r) > ppw_of(*best) ||
                (ppw_of(*r) == ppw_of(*best) && tie_prefers(r->config, best->config))) {
                best = r;
            }
        }
        return best;
    };
    const auto* best = pick(true);
    const bool feasible = best != nullptr;
    if (!best) best = pick(false);
    const auto idx = static_cast<std::size_t>(
        std::find(records.begin(), records.end(), best) - records.begin());
    return {idx, best->config, best->fps, ppw_of(*best), feasible};
}

OracleChoice oracle_best(const MeasurementTable& table, const ModelProfile& model, WorkloadState workload,
                         double fps_constraint) {
    const auto records = table.action_records(model.variant_id(), workload);
    return oracle_best(records, fps_constraint);
}

const char* to_string(BaselineKind kind) { return kind == BaselineKind::MaxFps ? "max_fps" : "min_power"; }

std::size_t baseline_action(std::span<const MeasurementRecord* const> records, BaselineKind kind) {
    if (records.empty()) throw std::invalid_argument("baseline_action: no records");
    std::size_t best = 0;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const bool better = kind == BaselineKind::MaxFps ? records[i]->fps > records[best]->fps
                                                         : records[i]->telemetry.p_fpga < records[best]->telemetry.p_fpga;
        if (better) best = i;
    }
    return best;
}

DpuConfiguration baseline_policy(const MeasurementTable& table, const ModelProfile& model, WorkloadState workload,
                                 BaselineKind kind) {
    const auto records = table.action_records(model.variant_id(), workload);
    return records[baseline_action(records, kind)]->config;
}

const PolicySummary& EvaluationReport::summary(const std::string& policy, WorkloadState workload) const {
    for (const auto& s : summaries) {
        if (s.policy == policy && s.workload == workload) return s;
    }
    throw std::out_of_range("no summary for policy " + policy + " in state " + to_char(workload));
}

std::vector<EvaluationRow> EvaluationReport::rows_for(const std::string& policy) const {
    std::vector<EvaluationRow> out;
    for (const auto& r : rows) {
        if (r.policy == policy) out.push_back(r);
    }
    return out;
}

EvaluationReport evaluate_chooser(const Chooser& chooser, const std::string& policy_name,
                                  const MeasurementTable& table, const std::vector<ModelProfile>& models,
                                  std::span<const WorkloadState> workloads, double fps_constraint) {
    EvaluationReport report;
    report.fps_constraint = fps_constraint;
    const std::vector<std::pair<std::string, std::function<std::size_t(const ModelProfile&, WorkloadState,
                                                                       std::span<const MeasurementRecord* const>)>>>
        policies{
            {policy_name, [&](const ModelProfile& m, WorkloadState w, auto) { return chooser(m, w); }},
            {to_string(BaselineKind::MaxFps),
             [](const ModelProfile&, WorkloadState, auto recs) { return baseline_action(recs, BaselineKind::MaxFps); }},
            {to_string(BaselineKind::MinPower),
             [](const ModelProfile&, WorkloadState, auto recs) { return baseline_action(recs, BaselineKind::MinPower); }},
        };

    for (const auto& [name, choose] : policies) {
        std::vector<PolicySummary> summaries;
        for (auto w : workloads) summaries.push_back({name, w, 0, 0.0, 0.0});
        for (const auto& m : models) {
            for (std::size_t wi = 0; wi < workloads.size(); ++wi) {
                const auto w = workloads[wi];
                const auto records = table.action_records(m.variant_id(), w);
                const auto oracle = oracle_best(records, fps_constraint);
                const std::size_t action = choose(m, w, records);
                if (action >= records.size()) throw std::out_of_range("policy chose an action out of range");
                const auto& rec = *records[action];

                EvaluationRow row;
                row.policy = name;
                row.variant = m.variant_id();
                row.workload = w;
                row.chosen = rec.config;
                row.chosen_fps = rec.fps;
                row.chosen_ppw = ppw_of(rec);
                row.constraint_satisfied = rec.fps >= fps_constraint;
                row.oracle = oracle.config;
                row.oracle_ppw = oracle.ppw;
                row.oracle_feasible = oracle.feasible;
                row.normalized_ppw =
                    (!row.constraint_satisfied && oracle.feasible) ? 0.0 : row.chosen_ppw / oracle.ppw;

                auto& summary = summaries[wi];
                ++summary.rows;
                summary.mean_normalized_ppw += row.normalized_ppw;
                if (row.constraint_satisfied) summary.constraint_rate += 1.0;
                report.rows.push_back(std::move(row));
            }
        }
        for (auto& summary : summaries) {
            if (summary.rows > 0) {
                summary.mean_normalized_ppw /= static_cast<double>(summary.rows);
                summary.constraint_rate /= static_cast<double>(summary.rows);
            }
            report.summaries.push_back(summary);
        }
    }
    return report;
}

EvaluationReport evaluate(const PolicyParameters& params, const MeasurementTable& table,
                          const std::vector<ModelProfile>& models, std::span<const WorkloadState> workloads,
                          double fps_constraint, const CalibrationParams& calibration,
                          const NormalizationParams& norm) {
    const Chooser agent = [&](const ModelProfile& m, WorkloadState w) {
        const auto state = encode_state(idle_telemetry(w, calibration), m, fps_constraint, norm);
        return act_greedy(params, state);
    };
    return evaluate_chooser(agent, "agent", table, models, workloads, fps_constraint);
}

void write_report_csv(const EvaluationReport& report, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    out << "policy,model,workload,chosen,chosen_fps,chosen_ppw,constraint_satisfied,oracle,oracle_ppw,"
           "oracle_feasible,normalized_ppw\n";
    for (const auto& r : report.rows) {
        out << r.policy << ',' << r.variant << ',' << to_char(r.workload) << ',' << r.chosen.label() << ','
            << format_number(r.chosen_fps) << ',' << format_number(r.chosen_ppw) << ','
            << (r.constraint_satisfied ? 1 : 0) << ',' << r.oracle.label() << ',' << format_number(r.oracle_ppw)
            << ',' << (r.oracle_feasible ? 1 : 0) << ',' << format_number(r.normalized_ppw) << '\n';
    }
}

void write_summary_csv(const EvaluationReport& report, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    out << "policy,workload,rows,mean_normalized_ppw,constraint_rate\n";
    for (const auto& s : report.summaries) {
        out << s.policy << ',' << to_char(s.workload) << ',' << s.rows << ',' << format_number(s.mean_normalized_ppw)
            << ',' << format_number(s.constraint_rate) << '\n';
    }
}

void write_plot_data(const EvaluationReport& report, const std::filesystem::path& path) {
    nlohmann::ordered_json groups = nlohmann::ordered_json::array();
    std::vector<WorkloadState> workloads;
    for (const auto& s : report.summaries) {
        if (std::find(workloads.begin(), workloads.end(), s.workload) == workloads.end()) workloads.push_back(s.workload);
    }
    for (auto w : workloads) {
        nlohmann::ordered_json series = nlohmann::ordered_json::object();
        nlohmann::ordered_json models = nlohmann::ordered_json::array();
        for (const auto& r : report.rows) {
            if (r.workload != w) continue;
            if (!series.contains(r.policy)) series[r.policy] = nlohmann::ordered_json::array();
            series[r.policy].push_back(r.normalized_ppw);
            if (r.policy == report.rows.front().policy) models.push_back(r.variant);
        }
        nlohmann::ordered_json means = nlohmann::ordered_json::object();
        for (const auto& s : report.summaries) {
            if (s.workload == w) means[s.policy] = s.mean_normalized_ppw;
        }
        groups.push_back({{"workload", std::string(1, to_char(w))},
                          {"models", models},
                          {"normalized_ppw", series},
                          {"mean", means}});
    }
    nlohmann::ordered_json j{{"title", "Normalized PPW per model"},
                             {"fps_constraint", report.fps_constraint},
                             {"reference", "optimal = 1.0"},
                             {"groups", groups}};
    auto out = open_for_write(path);
    out << j.dump(2) << '\n';
}

std::vector<OracleRow> oracle_table(const MeasurementTable& table, const std::vector<ModelProfile>& models,
                                    std::span<const WorkloadState> workloads, double fps_constraint) {
    std::vector<OracleRow> rows;
    for (const auto& m : models) {
        for (auto w : workloads) rows.push_back({m.variant_id(), w, oracle_best(table, m, w, fps_constraint)});
    }
    return rows;
}

void write_oracle_csv(const std::vector<OracleRow>& rows, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    out << "model,workload,config,fps,ppw,feasible\n";
    for (const auto& r : rows) {
        out << r.variant << ',' << to_char(r.workload) << ',' << r.choice.config.label() << ','
            << format_number(r.choice.fps) << ',' << format_number(r.choice.ppw) << ','
            << (r.choice.feasible ? 1 : 0) << '\n';
    }
}

}  // namespace dpuconfig
