#include "dpuconfig/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace dpuconfig {

namespace {

constexpr double kReferencePeak = 2048.0;

void require_simulable(const ModelProfile& model, const DpuConfiguration& config,
                       const CalibrationParams& params) {
    if (!(model.gmac > 0)) throw std::invalid_argument("model '" + model.name + "': gmac must be > 0");
    if (!(model.ldfm >= 0 && model.stfm >= 0 && model.ldwb >= 0) || !(model.total_data_bytes() > 0)) {
        throw std::invalid_argument("model '" + model.name + "': byte counts must be positive");
    }
    if (!(model.base_dpu_efficiency > 0 && model.base_dpu_efficiency <= 1)) {
        throw std::invalid_argument("model '" + model.name + "': base_dpu_efficiency must be in (0, 1]");
    }
    if (!validate_configuration(config)) {
        throw std::invalid_argument("invalid DPU configuration " + config.label());
    }
    validate_calibration(params);
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("cannot format number");
    return std::string(buf, ptr);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& text, std::size_t row, const std::string& column) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        throw CorpusError(row, "column '" + column + "': cannot parse number '" + text + "'");
    }
    return v;
}

int parse_int(const std::string& text, std::size_t row, const std::string& column) {
    int v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (text.empty() || ec != std::errc{} || ptr != end) {
        throw CorpusError(row, "column '" + column + "': cannot parse integer '" + text + "'");
    }
    return v;
}

struct ReferenceRow {
    const char* name;
    double gmac;
    double io_mb;
    double efficiency;
    double params_m;
    double accuracy;
};

// GMAC, data I/O (MB), B4096_1 utilisation, parameters (M), top-1 accuracy.
constexpr std::array<ReferenceRow, 11> kReferenceRows{{
    {"ResNet18", 1.82, 12.13, 0.719, 11.69, 0.679},
    {"ResNet50", 4.10, 38.94, 0.59, 25.56, 0.776},
    {"MobileNetV2", 0.30, 5.74, 0.171, 3.50, 0.6823},
    {"DenseNet121", 2.86, 43.74, 0.269, 7.98, 0.687},
    {"InceptionV4", 12.3, 89.0, 0.63, 42.68, 0.7714},
    {"RepVGG_A0", 1.52, 11.84, 0.534, 8.31, 0.7241},
    {"ResNeXt50", 11.41, 95.85, 0.689, 25.03, 0.7621},
    {"YOLOv5s", 8.26, 159.8, 0.429, 7.23, 0.421},
    {"RegNetX400MF", 1.57, 24.33, 0.474, 5.16, 0.7015},
    {"InceptionV3", 5.74, 43.13, 0.635, 23.83, 0.7703},
    {"ResNet152", 11.54, 76.52, 0.62, 60.19, 0.7848},
}};

// Share of the data I/O that is feature-map loads; the rest is stores.
constexpr double kLoadShare = 0.75;

}  // namespace

double Telemetry::mean_cpu() const {
    return std::accumulate(cpu.begin(), cpu.end(), 0.0) / static_cast<double>(cpu.size());
}

double Telemetry::total_bandwidth_mbps() const {
    return std::accumulate(mem_read.begin(), mem_read.end(), 0.0) +
           std::accumulate(mem_write.begin(), mem_write.end(), 0.0);
}

void validate_calibration(const CalibrationParams& p) {
    std::vector<std::string> errors;
    if (!(p.clock_hz > 0)) errors.emplace_back("clock_hz must be > 0");
    if (!(p.max_bandwidth > 0)) errors.emplace_back("max_bandwidth must be > 0");
    for (auto w : kAllWorkloads) {
        const std::string s(1, to_char(w));
        if (!(p.bw_factor[w] > 0 && p.bw_factor[w] <= 1)) errors.push_back("bw_factor[" + s + "] must be in (0, 1]");
        if (!(p.host_overhead[w] >= 0)) errors.push_back("host_overhead[" + s + "] must be >= 0");
        if (!(p.p_arm_base[w] > 0)) errors.push_back("p_arm_base[" + s + "] must be > 0");
        const auto& prof = p.workload_profile[w];
        if (!(prof.cpu_mean >= 0 && prof.cpu_mean <= 1)) errors.push_back("workload_profile[" + s + "].cpu_mean must be in [0, 1]");
        if (!(prof.mem_fraction >= 0)) errors.push_back("workload_profile[" + s + "].mem_fraction must be >= 0");
    }
    if (!(p.efficiency_exponent >= 0)) errors.emplace_back("efficiency_exponent must be >= 0");
    if (!(p.p_static >= 0)) errors.emplace_back("p_static must be >= 0");
    if (!(p.p_instance >= 0)) errors.emplace_back("p_instance must be >= 0");
    if (!(p.p_per_mac > 0)) errors.emplace_back("p_per_mac must be > 0");
    if (!(p.p_arm_per_fps >= 0)) errors.emplace_back("p_arm_per_fps must be >= 0");
    if (!(p.read_share >= 0 && p.read_share <= 1)) errors.emplace_back("read_share must be in [0, 1]");
    if (!(p.noise_fraction >= 0)) errors.emplace_back("noise_fraction must be >= 0");
    if (!errors.empty()) {
        std::string msg = "invalid calibration:";
        for (const auto& e : errors) msg += " " + e + ";";
        throw std::invalid_argument(msg);
    }
}

void validate_record(const MeasurementRecord& r) {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument(r.variant_id() + " " + r.config.label() + " " + to_char(r.workload) + ": " + what);
    };
    if (r.model.empty()) fail("model name must not be empty");
    if (!(r.pruning_ratio >= 0 && r.pruning_ratio < 1)) fail("pruning_ratio must be in [0, 1)");
    if (!validate_configuration(r.config)) fail("instance count out of range");
    if (!(std::isfinite(r.fps) && r.fps > 0)) fail("fps must be > 0");
    if (!(std::isfinite(r.telemetry.p_fpga) && r.telemetry.p_fpga > 0)) fail("p_fpga must be > 0");
    if (!(std::isfinite(r.telemetry.p_arm) && r.telemetry.p_arm > 0)) fail("p_arm must be > 0");
    for (double u : r.telemetry.cpu) {
        if (!(u >= 0 && u <= 1)) fail("cpu utilisation must be in [0, 1]");
    }
    for (const auto* ports : {&r.telemetry.mem_read, &r.telemetry.mem_write}) {
        for (double b : *ports) {
            if (!(std::isfinite(b) && b >= 0)) fail("memory bandwidth must be >= 0");
        }
    }
}

double effective_efficiency(const ModelProfile& model, const DpuArchitecture& arch,
                            const CalibrationParams& params) {
    const double scale = std::pow(peak_macs_per_cycle(arch) / kReferencePeak, params.efficiency_exponent);
    return std::pow(model.base_dpu_efficiency, scale);
}

LatencyBreakdown latency_breakdown(const ModelProfile& model, const DpuConfiguration& config,
                                   WorkloadState workload, const CalibrationParams& params) {
    require_simulable(model, config, params);
    const double peak = peak_macs_per_cycle(config.arch);
    LatencyBreakdown out;
    out.compute_s = model.gmac * 1e9 / (peak * params.clock_hz * effective_efficiency(model, config.arch, params));
    const double share = params.max_bandwidth * params.bw_factor[workload] / config.instances;
    out.memory_s = (model.ldfm + model.stfm) / share;
    out.host_s = params.host_overhead[workload];
    out.total_s = std::max(out.compute_s, out.memory_s) + out.host_s;
    return out;
}

double simulate_latency(const ModelProfile& model, const DpuConfiguration& config,
                        WorkloadState workload, const CalibrationParams& params) {
    return latency_breakdown(model, config, workload, params).total_s;
}

double fpga_power(const DpuArchitecture& arch, int instances, double activity,
                  const CalibrationParams& params) {
    const double per_instance = params.p_instance + params.p_per_mac * peak_macs_per_cycle(arch) * activity;
    return params.p_static + instances * per_instance;
}

PowerDraw simulate_power(const ModelProfile& model, const DpuConfiguration& config,
                         WorkloadState workload, const CalibrationParams& params) {
    const auto lat = latency_breakdown(model, config, workload, params);
    const double activity = lat.compute_s / lat.total_s;
    const double fps = config.instances / lat.total_s;
    return {fpga_power(config.arch, config.instances, activity, params),
            params.p_arm_base[workload] + params.p_arm_per_fps * fps};
}

Telemetry idle_telemetry(WorkloadState workload, const CalibrationParams& params) {
    const auto& prof = params.workload_profile[workload];
    Telemetry t;
    t.cpu.fill(prof.cpu_mean);
    const double total_mbps = prof.mem_fraction * params.max_bandwidth / 1e6;
    t.mem_read.fill(total_mbps * params.read_share / 5.0);
    t.mem_write.fill(total_mbps * (1.0 - params.read_share) / 5.0);
    t.p_fpga = params.p_static;
    t.p_arm = params.p_arm_base[workload];
    return t;
}

MeasurementTable::MeasurementTable(std::vector<MeasurementRecord> records) : records_(std::move(records)) {
    index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (!index_.emplace(key(r.variant_id(), r.config, r.workload), i).second) {
            throw std::invalid_argument("duplicate measurement for " + r.variant_id() + " " +
                                        r.config.label() + " " + to_char(r.workload));
        }
    }
}

std::string MeasurementTable::key(const std::string& variant_id, const DpuConfiguration& config,
                                  WorkloadState workload) {
    return variant_id + '|' + config.label() + '|' + to_char(workload);
}

const MeasurementRecord* MeasurementTable::find(const std::string& variant_id,
                                                const DpuConfiguration& config,
                                                WorkloadState workload) const {
    const auto it = index_.find(key(variant_id, config, workload));
    return it == index_.end() ? nullptr : &records_[it->second];
}

const MeasurementRecord& MeasurementTable::at(const std::string& variant_id, const DpuConfiguration& config,
                                              WorkloadState workload) const {
    const auto* r = find(variant_id, config, workload);
    if (!r) {
        throw std::out_of_range("no measurement for " + variant_id + " " + config.label() + " " +
                                to_char(workload));
    }
    return *r;
}

std::vector<const MeasurementRecord*> MeasurementTable::action_records(const std::string& variant_id,
                                                                       WorkloadState workload) const {
    std::vector<const MeasurementRecord*> out;
    out.reserve(kActionCount);
    for (const auto& config : action_space()) out.push_back(&at(variant_id, config, workload));
    return out;
}

MeasurementTable generate_corpus(const std::vector<ModelProfile>& models, const CalibrationParams& params) {
    if (models.empty()) throw std::invalid_argument("generate_corpus: model list is empty");
    validate_calibration(params);
    std::vector<MeasurementRecord> records;
    records.reserve(models.size() * kAllWorkloads.size() * kActionCount);
    std::uint64_t index = 0;
    for (const auto& model : models) {
        validate_model(model);
        for (auto workload : kAllWorkloads) {
            const Telemetry base = idle_telemetry(workload, params);
            for (const auto& config : action_space()) {
                std::mt19937_64 rng(params.rng_seed + index++);
                std::normal_distribution<double> unit(0.0, 1.0);
                auto jitter = [&](double mean) { return mean * (1.0 + params.noise_fraction * unit(rng)); };

                MeasurementRecord r;
                r.model = model.name;
                r.pruning_ratio = model.pruning_ratio;
                r.config = config;
                r.workload = workload;
                r.fps = config.instances / simulate_latency(model, config, workload, params);
                const auto power = simulate_power(model, config, workload, params);
                r.telemetry = base;
                for (auto& u : r.telemetry.cpu) u = std::clamp(jitter(u), 0.0, 1.0);
                for (auto& b : r.telemetry.mem_read) b = std::max(0.0, jitter(b));
                for (auto& b : r.telemetry.mem_write) b = std::max(0.0, jitter(b));
                r.telemetry.p_fpga = power.p_fpga;
                r.telemetry.p_arm = power.p_arm;
                records.push_back(std::move(r));
            }
        }
    }
    return MeasurementTable(std::move(records));
}

ModelProfile prune_variant(const ModelProfile& model, double ratio, const AccuracyDropTable& drops) {
    double drop = 0.0;
    if (ratio == 0.0) return model;
    if (ratio == 0.25) {
        drop = drops.drop_25;
    } else if (ratio == 0.5) {
        drop = drops.drop_50;
    } else {
        throw std::invalid_argument("pruning ratio must be 0, 0.25 or 0.5");
    }
    ModelProfile out = model;
    const double keep = 1.0 - ratio;
    out.gmac *= keep;
    out.ldfm *= keep;
    out.ldwb *= keep;
    out.stfm *= keep;
    out.params *= keep;
    out.accuracy = std::max(0.0, model.accuracy - drop);
    out.pruning_ratio = ratio;
    return out;
}

std::vector<ModelProfile> reference_models() {
    std::vector<ModelProfile> out;
    for (const auto& row : kReferenceRows) {
        ModelProfile m;
        m.name = row.name;
        m.gmac = row.gmac;
        m.ldfm = kLoadShare * row.io_mb * 1e6;
        m.stfm = (1.0 - kLoadShare) * row.io_mb * 1e6;
        m.ldwb = row.params_m * 1e6;
        m.params = row.params_m * 1e6;
        m.accuracy = row.accuracy;
        m.base_dpu_efficiency = row.efficiency;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<ModelProfile> default_model_set() {
    std::vector<ModelProfile> out;
    for (const auto& m : reference_models()) {
        for (double r : {0.0, 0.25, 0.5}) out.push_back(prune_variant(m, r));
    }
    return out;
}

CorpusError::CorpusError(std::size_t row, const std::string& message)
    : std::runtime_error(row == 0 ? message : "row " + std::to_string(row) + ": " + message), row_(row) {}

const std::vector<std::string>& corpus_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c{"model", "pruning_ratio", "arch", "instances", "workload",
                                   "fps",   "p_fpga_w",      "p_arm_w"};
        for (int i = 0; i < 4; ++i) c.push_back("cpu" + std::to_string(i));
        for (int i = 0; i < 5; ++i) c.push_back("memr" + std::to_string(i));
        for (int i = 0; i < 5; ++i) c.push_back("memw" + std::to_string(i));
        return c;
    }();
    return cols;
}

void write_csv(const MeasurementTable& table, std::ostream& out) {
    const auto& cols = corpus_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : table.records()) {
        out << r.model << ',' << format_double(r.pruning_ratio) << ',' << r.config.arch.name << ','
            << r.config.instances << ',' << to_char(r.workload) << ',' << format_double(r.fps) << ','
            << format_double(r.telemetry.p_fpga) << ',' << format_double(r.telemetry.p_arm);
        for (double v : r.telemetry.cpu) out << ',' << format_double(v);
        for (double v : r.telemetry.mem_read) out << ',' << format_double(v);
        for (double v : r.telemetry.mem_write) out << ',' << format_double(v);
        out << '\n';
    }
}

void write_csv(const MeasurementTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_csv(table, out);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

MeasurementTable ingest_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw CorpusError(0, "empty corpus file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_fields(line);
    std::vector<std::size_t> pos;
    for (const auto& col : corpus_columns()) {
        const auto it = std::find(header.begin(), header.end(), col);
        if (it == header.end()) throw CorpusError(1, "missing column '" + col + "'");
        pos.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    std::vector<MeasurementRecord> records;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw CorpusError(row, "expected " + std::to_string(header.size()) + " fields, got " +
                                       std::to_string(fields.size()));
        }
        const auto& cols = corpus_columns();
        auto field = [&](std::size_t c) -> const std::string& { return fields[pos[c]]; };
        auto num = [&](std::size_t c) { return parse_double(field(c), row, cols[c]); };

        MeasurementRecord r;
        r.model = field(0);
        r.pruning_ratio = num(1);
        const auto arch = find_architecture(field(2));
        if (!arch) throw CorpusError(row, "column 'arch': unknown architecture '" + field(2) + "'");
        r.config = {*arch, parse_int(field(3), row, cols[3])};
        try {
            r.workload = parse_workload(field(4));
        } catch (const std::invalid_argument& e) {
            throw CorpusError(row, std::string("column 'workload': ") + e.what());
        }
        r.fps = num(5);
        r.telemetry.p_fpga = num(6);
        r.telemetry.p_arm = num(7);
        for (std::size_t i = 0; i < 4; ++i) r.telemetry.cpu[i] = num(8 + i);
        for (std::size_t i = 0; i < 5; ++i) r.telemetry.mem_read[i] = num(12 + i);
        for (std::size_t i = 0; i < 5; ++i) r.telemetry.mem_write[i] = num(17 + i);
        try {
            validate_record(r);
        } catch (const std::invalid_argument& e) {
            throw CorpusError(row, e.what());
        }
        records.push_back(std::move(r));
    }
    try {
        return MeasurementTable(std::move(records));
    } catch (const std::invalid_argument& e) {
        throw CorpusError(0, e.what());
    }
}

MeasurementTable ingest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CorpusError(0, "cannot open " + path.string());
    return ingest_csv(in);
}

void write_manifest(const std::vector<ModelProfile>& models, const std::filesystem::path& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : models) {
        arr.push_back({{"name", m.name},
                       {"gmac", m.gmac},
                       {"ldfm", m.ldfm},
                       {"ldwb", m.ldwb},
                       {"stfm", m.stfm},
                       {"params", m.params},
                       {"accuracy", m.accuracy},
                       {"pruning_ratio", m.pruning_ratio},
                       {"base_dpu_efficiency", m.base_dpu_efficiency}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << arr.dump(2) << '\n';
}

std::vector<ModelProfile> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json arr;
    try {
        in >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    if (!arr.is_array()) throw std::runtime_error(path.string() + ": expected a JSON array of models");
    std::vector<ModelProfile> out;
    for (const auto& j : arr) {
        ModelProfile m;
        try {
            m.name = j.at("name").get<std::string>();
            m.gmac = j.at("gmac").get<double>();
            m.ldfm = j.at("ldfm").get<double>();
            m.ldwb = j.at("ldwb").get<double>();
            m.stfm = j.at("stfm").get<double>();
            m.params = j.at("params").get<double>();
            m.accuracy = j.value("accuracy", 0.0);
            m.pruning_ratio = j.value("pruning_ratio", 0.0);
            m.base_dpu_efficiency = j.at("base_dpu_efficiency").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path.string() + ": " + e.what());
        }
        validate_model(m);
        out.push_back(std::move(m));
    }
    return out;
}

TrainTestSplit split_train_test(const std::vector<ModelProfile>& models) {
    // Unpruned base models, sorted by name for deterministic tie-breaking.
    std::vector<const ModelProfile*> bases;
    for (const auto& m : models) {
        if (m.pruning_ratio == 0.0) bases.push_back(&m);
    }
    std::sort(bases.begin(), bases.end(), [](auto* a, auto* b) { return a->name < b->name; });
    std::vector<double> distinct;
    for (auto* b : bases) distinct.push_back(b->gmac);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) {
        throw std::invalid_argument("split_train_test needs at least 3 distinct unpruned GMAC values");
    }

    constexpr double kTieTolerance = 1e-9;
    const double lo = distinct.front();
    const double hi = distinct.back();
    std::array<double, 3> centroids{lo, (lo + hi) / 2.0, hi};
    std::vector<int> assign(bases.size(), -1);

    auto nearest = [&](double x) {
        int best = 0;
        for (int k = 1; k < 3; ++k) {
            if (std::abs(x - centroids[k]) < std::abs(x - centroids[best]) - kTieTolerance) best = k;
        }
        return best;
    };

    for (int iter = 0; iter < 1000; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < bases.size(); ++i) {
            const int k = nearest(bases[i]->gmac);
            if (k != assign[i]) {
                assign[i] = k;
                changed = true;
            }
        }
        std::array<double, 3> sum{};
        std::array<int, 3> count{};
        for (std::size_t i = 0; i < bases.size(); ++i) {
            sum[assign[i]] += bases[i]->gmac;
            ++count[assign[i]];
        }
        for (int k = 0; k < 3; ++k) {
            if (count[k] == 0) throw std::invalid_argument("split_train_test: k-means produced an empty cluster");
            centroids[k] = sum[k] / count[k];
        }
        if (!changed) break;
    }

    TrainTestSplit split;
    split.centroids = centroids;
    for (int k = 0; k < 3; ++k) {
        const ModelProfile* rep = nullptr;
        for (std::size_t i = 0; i < bases.size(); ++i) {
            if (assign[i] != k) continue;
            const double d = std::abs(bases[i]->gmac - centroids[k]);
            if (!rep || d < std::abs(rep->gmac - centroids[k]) - kTieTolerance) rep = bases[i];
        }
        split.representatives[k] = rep->name;
    }
    for (const auto& m : models) {
        const bool is_test = std::find(split.representatives.begin(), split.representatives.end(), m.name) !=
                             split.representatives.end();
        (is_test ? split.test : split.train).push_back(m);
    }
    return split;
}

}  // namespace dpuconfig
