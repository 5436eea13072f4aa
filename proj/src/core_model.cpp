#include "dpuconfig/core_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace dpuconfig {

namespace {

constexpr std::array<DpuArchitecture, 8> kArchitectures{{
    {"B512", 4, 8, 8, 8},
    {"B800", 4, 10, 10, 7},
    {"B1024", 8, 8, 8, 6},
    {"B1152", 4, 12, 12, 6},
    {"B1600", 8, 10, 10, 4},
    {"B2304", 8, 12, 12, 4},
    {"B3136", 8, 14, 14, 3},
    {"B4096", 8, 16, 16, 3},
}};

// Selected instance counts per architecture, same row order as above.
constexpr std::array<std::array<int, 4>, 8> kSelectedInstances{{
    {1, 4, 8, 0},
    {1, 4, 7, 0},
    {1, 3, 6, 0},
    {1, 3, 6, 0},
    {1, 2, 3, 4},
    {1, 2, 3, 4},
    {1, 2, 3, 0},
    {1, 2, 3, 0},
}};

std::vector<DpuConfiguration> build_action_space() {
    std::vector<DpuConfiguration> actions;
    for (std::size_t i = 0; i < kArchitectures.size(); ++i) {
        for (int n : kSelectedInstances[i]) {
            if (n > 0) actions.push_back({kArchitectures[i], n});
        }
    }
    return actions;
}

}  // namespace

std::span<const DpuArchitecture> architectures() { return kArchitectures; }

std::optional<DpuArchitecture> find_architecture(std::string_view name) {
    for (const auto& a : kArchitectures) {
        if (a.name == name) return a;
    }
    return std::nullopt;
}

int architecture_rank(const DpuArchitecture& arch) {
    for (std::size_t i = 0; i < kArchitectures.size(); ++i) {
        if (kArchitectures[i] == arch) return static_cast<int>(i);
    }
    throw std::invalid_argument("unknown DPU architecture");
}

std::string DpuConfiguration::label() const {
    return std::string(arch.name) + "_" + std::to_string(instances);
}

DpuConfiguration parse_configuration(std::string_view label) {
    const auto sep = label.find('_');
    if (sep == std::string_view::npos) {
        throw std::invalid_argument("malformed DPU configuration '" + std::string(label) + "'");
    }
    const auto arch = find_architecture(label.substr(0, sep));
    if (!arch) {
        throw std::invalid_argument("unknown DPU architecture in '" + std::string(label) + "'");
    }
    const auto digits = label.substr(sep + 1);
    int n = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty()) {
        throw std::invalid_argument("malformed instance count in '" + std::string(label) + "'");
    }
    return {*arch, n};
}

bool validate_configuration(const DpuConfiguration& config) {
    return config.instances >= 1 && config.instances <= config.arch.max_instances;
}

const std::vector<DpuConfiguration>& action_space() {
    static const std::vector<DpuConfiguration> actions = build_action_space();
    return actions;
}

std::optional<std::size_t> action_index(const DpuConfiguration& config) {
    const auto& actions = action_space();
    const auto it = std::find(actions.begin(), actions.end(), config);
    if (it == actions.end()) return std::nullopt;
    return static_cast<std::size_t>(it - actions.begin());
}

char to_char(WorkloadState w) {
    switch (w) {
        case WorkloadState::N: return 'N';
        case WorkloadState::C: return 'C';
        case WorkloadState::M: return 'M';
    }
    return '?';
}

WorkloadState parse_workload(std::string_view text) {
    if (text == "N") return WorkloadState::N;
    if (text == "C") return WorkloadState::C;
    if (text == "M") return WorkloadState::M;
    throw std::invalid_argument("unknown workload state '" + std::string(text) + "'");
}

std::string make_variant_id(std::string_view name, double pruning_ratio) {
    const long pct = std::lround(pruning_ratio * 100.0);
    return std::string(name) + "_PR" + std::to_string(pct);
}

std::string ModelProfile::variant_id() const { return make_variant_id(name, pruning_ratio); }

void validate_model(const ModelProfile& m) {
    auto fail = [&](const char* what) {
        throw std::invalid_argument("model '" + m.name + "': " + what);
    };
    if (m.name.empty()) fail("name must not be empty");
    if (!(std::isfinite(m.gmac) && m.gmac > 0)) fail("gmac must be > 0");
    for (double v : {m.ldfm, m.ldwb, m.stfm}) {
        if (!(std::isfinite(v) && v >= 0)) fail("byte counts must be finite and >= 0");
    }
    if (!(m.total_data_bytes() > 0)) fail("ldfm + ldwb + stfm must be > 0");
    if (!(std::isfinite(m.params) && m.params > 0)) fail("params must be > 0");
    if (!(m.base_dpu_efficiency >= 0 && m.base_dpu_efficiency <= 1)) {
        fail("base_dpu_efficiency must be in [0, 1]");
    }
    if (!(m.accuracy >= 0 && m.accuracy <= 1)) fail("accuracy must be in [0, 1]");
    if (!(m.pruning_ratio >= 0 && m.pruning_ratio < 1)) fail("pruning_ratio must be in [0, 1)");
}

}  // namespace dpuconfig
