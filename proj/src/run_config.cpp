#include "dpuconfig/run_config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

namespace dpuconfig {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

ojson per_workload(const PerWorkload<double>& v) {
    return {{"N", v.n}, {"C", v.c}, {"M", v.m}};
}

ojson workload_list(const std::vector<WorkloadState>& ws) {
    ojson arr = ojson::array();
    for (auto w : ws) arr.push_back(std::string(1, to_char(w)));
    return arr;
}

// Collects errors instead of throwing on the first one.
class Reader {
  public:
    explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

    // Reports keys of obj not in allowed.
    void only(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) {
            errors_.push_back(where + ": expected an object");
            return;
        }
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, value] : obj.items()) {
            if (!ok.count(key)) errors_.push_back(where + (where.empty() ? "" : ".") + key + ": unknown field");
        }
    }

    template <typename T>
    void get(const json& obj, const char* key, const std::string& where, T& out) {
        if (!obj.is_object() || !obj.contains(key)) return;
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            errors_.push_back(where + (where.empty() ? "" : ".") + key + ": wrong type");
        }
    }

    void get_per_workload(const json& obj, const char* key, const std::string& where, PerWorkload<double>& out) {
        if (!obj.is_object() || !obj.contains(key)) return;
        const auto& v = obj.at(key);
        const std::string name = where + "." + key;
        only(v, name, {"N", "C", "M"});
        get(v, "N", name, out.n);
        get(v, "C", name, out.c);
        get(v, "M", name, out.m);
    }

    void get_workloads(const json& obj, const char* key, const std::string& where, std::vector<WorkloadState>& out) {
        if (!obj.is_object() || !obj.contains(key)) return;
        const std::string name = where + "." + key;
        std::vector<WorkloadState> ws;
        try {
            for (const auto& s : obj.at(key)) ws.push_back(parse_workload(s.get<std::string>()));
            out = ws;
        } catch (const std::exception& e) {
            errors_.push_back(name + ": " + e.what());
        }
    }

    void get_path(const json& obj, const char* key, const std::string& where, const std::filesystem::path& base,
                  std::optional<std::filesystem::path>& out) {
        if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return;
        std::string s;
        get(obj, key, where, s);
        if (!s.empty()) out = base.empty() ? std::filesystem::path(s) : base / s;
    }

  private:
    std::vector<std::string>& errors_;
};

void throw_if_any(const std::string& what, const std::vector<std::string>& errors) {
    if (errors.empty()) return;
    std::string msg = what + ":";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::invalid_argument(msg);
}

template <typename F>
void collect(std::vector<std::string>& errors, const std::string& prefix, F&& check) {
    try {
        check();
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        const auto colon = msg.find(':');
        if (colon != std::string::npos) msg = msg.substr(colon + 1);
        std::size_t start = 0;
        while (start < msg.size()) {
            auto end = msg.find(';', start);
            if (end == std::string::npos) end = msg.size();
            auto item = msg.substr(start, end - start);
            const auto first = item.find_first_not_of(' ');
            if (first != std::string::npos) errors.push_back(prefix + item.substr(first));
            start = end + 1;
        }
    }
}

std::vector<std::string> range_errors(const RunConfig& c);

}  // namespace

RewardParams RunConfig::resolved_reward() const {
    auto r = reward;
    r.max_bandwidth = calibration.max_bandwidth;
    return r;
}

NormalizationParams RunConfig::normalization() const {
    NormalizationParams n;
    n.max_bandwidth = calibration.max_bandwidth;
    return n;
}

CalibrationParams RunConfig::resolved_calibration() const {
    auto c = calibration;
    c.rng_seed = seed;
    return c;
}

ojson to_json(const RunConfig& c) {
    const auto& cal = c.calibration;
    ojson profiles;
    for (auto w : kAllWorkloads) {
        profiles[std::string(1, to_char(w))] = {{"cpu_mean", cal.workload_profile[w].cpu_mean},
                                                {"mem_fraction", cal.workload_profile[w].mem_fraction}};
    }
    return {
        {"seed", c.seed},
        {"fps_constraint", c.fps_constraint},
        {"corpus_csv", c.corpus_csv ? ojson(c.corpus_csv->string()) : ojson(nullptr)},
        {"model_manifest", c.model_manifest ? ojson(c.model_manifest->string()) : ojson(nullptr)},
        {"calibration",
         {{"clock_hz", cal.clock_hz},
          {"max_bandwidth", cal.max_bandwidth},
          {"bw_factor", per_workload(cal.bw_factor)},
          {"host_overhead_s", per_workload(cal.host_overhead)},
          {"efficiency_exponent", cal.efficiency_exponent},
          {"p_static", cal.p_static},
          {"p_instance", cal.p_instance},
          {"p_per_mac", cal.p_per_mac},
          {"p_arm_base", per_workload(cal.p_arm_base)},
          {"p_arm_per_fps", cal.p_arm_per_fps},
          {"workload_profile", profiles},
          {"read_share", cal.read_share},
          {"noise_fraction", cal.noise_fraction}}},
        {"reward",
         {{"lambda", c.reward.lambda},
          {"alpha", c.reward.alpha},
          {"cpu_bin_width", c.reward.cpu_bin_width},
          {"mem_bin_width", c.reward.mem_bin_width},
          {"gmac_edges", c.reward.gmac_edges},
          {"data_edges", c.reward.data_edges}}},
        {"ppo",
         {{"learning_rate", c.ppo.learning_rate},
          {"clip_epsilon", c.ppo.clip_epsilon},
          {"value_coef", c.ppo.value_coef},
          {"entropy_coef", c.ppo.entropy_coef},
          {"batch_size", c.ppo.batch_size},
          {"epochs", c.ppo.epochs},
          {"minibatch_size", c.ppo.minibatch_size},
          {"adam_beta1", c.ppo.adam_beta1},
          {"adam_beta2", c.ppo.adam_beta2},
          {"adam_epsilon", c.ppo.adam_epsilon}}},
        {"training", {{"episodes", c.episodes}, {"workloads", workload_list(c.train_workloads)}}},
        {"evaluation", {{"workloads", workload_list(c.eval_workloads)}}},
        {"overheads_ms",
         {{"telemetry", c.overheads.telemetry_ms},
          {"rl_inference", c.overheads.rl_inference_ms},
          {"reconfigure", c.overheads.reconfigure_ms},
          {"instruction_load", c.overheads.instruction_load_ms}}},
        {"output_dir", c.output_dir.string()},
    };
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    std::vector<std::string> errors;
    Reader r(errors);
    r.only(j, "",
           {"seed", "fps_constraint", "corpus_csv", "model_manifest", "calibration", "reward", "ppo", "training",
            "evaluation", "overheads_ms", "output_dir"});
    if (!j.is_object()) throw_if_any("invalid run configuration", errors);

    r.get(j, "seed", "", c.seed);
    r.get(j, "fps_constraint", "", c.fps_constraint);
    r.get_path(j, "corpus_csv", "", base_dir, c.corpus_csv);
    r.get_path(j, "model_manifest", "", base_dir, c.model_manifest);
    if (j.contains("output_dir")) {
        std::string s;
        r.get(j, "output_dir", "", s);
        if (!s.empty()) c.output_dir = s;
    }

    if (j.contains("calibration")) {
        const auto& k = j.at("calibration");
        auto& cal = c.calibration;
        r.only(k, "calibration",
               {"clock_hz", "max_bandwidth", "bw_factor", "host_overhead_s", "efficiency_exponent", "p_static",
                "p_instance", "p_per_mac", "p_arm_base", "p_arm_per_fps", "workload_profile", "read_share",
                "noise_fraction"});
        r.get(k, "clock_hz", "calibration", cal.clock_hz);
        r.get(k, "max_bandwidth", "calibration", cal.max_bandwidth);
        r.get_per_workload(k, "bw_factor", "calibration", cal.bw_factor);
        r.get_per_workload(k, "host_overhead_s", "calibration", cal.host_overhead);
        r.get(k, "efficiency_exponent", "calibration", cal.efficiency_exponent);
        r.get(k, "p_static", "calibration", cal.p_static);
        r.get(k, "p_instance", "calibration", cal.p_instance);
        r.get(k, "p_per_mac", "calibration", cal.p_per_mac);
        r.get_per_workload(k, "p_arm_base", "calibration", cal.p_arm_base);
        r.get(k, "p_arm_per_fps", "calibration", cal.p_arm_per_fps);
        r.get(k, "read_share", "calibration", cal.read_share);
        r.get(k, "noise_fraction", "calibration", cal.noise_fraction);
        if (k.is_object() && k.contains("workload_profile")) {
            const auto& wp = k.at("workload_profile");
            r.only(wp, "calibration.workload_profile", {"N", "C", "M"});
            for (auto w : kAllWorkloads) {
                const std::string s(1, to_char(w));
                if (!wp.is_object() || !wp.contains(s)) continue;
                const std::string where = "calibration.workload_profile." + s;
                r.only(wp.at(s), where, {"cpu_mean", "mem_fraction"});
                r.get(wp.at(s), "cpu_mean", where, cal.workload_profile[w].cpu_mean);
                r.get(wp.at(s), "mem_fraction", where, cal.workload_profile[w].mem_fraction);
            }
        }
    }

    if (j.contains("reward")) {
        const auto& k = j.at("reward");
        r.only(k, "reward", {"lambda", "alpha", "cpu_bin_width", "mem_bin_width", "gmac_edges", "data_edges"});
        r.get(k, "lambda", "reward", c.reward.lambda);
        r.get(k, "alpha", "reward", c.reward.alpha);
        r.get(k, "cpu_bin_width", "reward", c.reward.cpu_bin_width);
        r.get(k, "mem_bin_width", "reward", c.reward.mem_bin_width);
        r.get(k, "gmac_edges", "reward", c.reward.gmac_edges);
        r.get(k, "data_edges", "reward", c.reward.data_edges);
    }

    if (j.contains("ppo")) {
        const auto& k = j.at("ppo");
        r.only(k, "ppo",
               {"learning_rate", "clip_epsilon", "value_coef", "entropy_coef", "batch_size", "epochs",
                "minibatch_size", "adam_beta1", "adam_beta2", "adam_epsilon"});
        r.get(k, "learning_rate", "ppo", c.ppo.learning_rate);
        r.get(k, "clip_epsilon", "ppo", c.ppo.clip_epsilon);
        r.get(k, "value_coef", "ppo", c.ppo.value_coef);
        r.get(k, "entropy_coef", "ppo", c.ppo.entropy_coef);
        r.get(k, "batch_size", "ppo", c.ppo.batch_size);
        r.get(k, "epochs", "ppo", c.ppo.epochs);
        r.get(k, "minibatch_size", "ppo", c.ppo.minibatch_size);
        r.get(k, "adam_beta1", "ppo", c.ppo.adam_beta1);
        r.get(k, "adam_beta2", "ppo", c.ppo.adam_beta2);
        r.get(k, "adam_epsilon", "ppo", c.ppo.adam_epsilon);
    }

    if (j.contains("training")) {
        const auto& k = j.at("training");
        r.only(k, "training", {"episodes", "workloads"});
        r.get(k, "episodes", "training", c.episodes);
        r.get_workloads(k, "workloads", "training", c.train_workloads);
    }
    if (j.contains("evaluation")) {
        const auto& k = j.at("evaluation");
        r.only(k, "evaluation", {"workloads"});
        r.get_workloads(k, "workloads", "evaluation", c.eval_workloads);
    }
    if (j.contains("overheads_ms")) {
        const auto& k = j.at("overheads_ms");
        r.only(k, "overheads_ms", {"telemetry", "rl_inference", "reconfigure", "instruction_load"});
        r.get(k, "telemetry", "overheads_ms", c.overheads.telemetry_ms);
        r.get(k, "rl_inference", "overheads_ms", c.overheads.rl_inference_ms);
        r.get(k, "reconfigure", "overheads_ms", c.overheads.reconfigure_ms);
        r.get(k, "instruction_load", "overheads_ms", c.overheads.instruction_load_ms);
    }
    // Report range problems in the same message so one pass lists everything.
    if (!errors.empty()) {
        for (auto& e : range_errors(c)) errors.push_back(std::move(e));
    }
    throw_if_any("invalid run configuration", errors);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open run configuration " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

namespace {

std::vector<std::string> range_errors(const RunConfig& c) {
    std::vector<std::string> errors;
    if (!(c.fps_constraint > 0)) errors.emplace_back("fps_constraint must be > 0");
    if (c.corpus_csv && !std::filesystem::is_regular_file(*c.corpus_csv)) {
        errors.push_back("corpus_csv: file not found: " + c.corpus_csv->string());
    }
    if (c.model_manifest && !std::filesystem::is_regular_file(*c.model_manifest)) {
        errors.push_back("model_manifest: file not found: " + c.model_manifest->string());
    }
    if (c.train_workloads.empty()) errors.emplace_back("training.workloads must not be empty");
    if (c.eval_workloads.empty()) errors.emplace_back("evaluation.workloads must not be empty");
    // Zero clipping is a valid update rule but useless for a run.
    if (c.ppo.clip_epsilon == 0.0) errors.emplace_back("ppo.clip_epsilon must be in (0, 1)");
    collect(errors, "calibration.", [&] { validate_calibration(c.calibration); });
    collect(errors, "reward.", [&] { validate_reward_params(c.resolved_reward()); });
    collect(errors, "ppo.", [&] { validate_hyperparams(c.ppo); });
    collect(errors, "overheads_ms.", [&] { validate_overheads(c.overheads); });
    return errors;
}

}  // namespace

void validate_run_config(const RunConfig& c) { throw_if_any("invalid run configuration", range_errors(c)); }

}  // namespace dpuconfig
