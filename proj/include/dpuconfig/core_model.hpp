#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dpuconfig {

/// One of the eight DPUCZDX8G architectures. The numeric part of the name is
/// 2 * PP * ICP * OCP (each MAC counts as two operations).
struct DpuArchitecture {
    std::string_view name;
    int pp;
    int icp;
    int ocp;
    int max_instances;

    friend bool operator==(const DpuArchitecture& a, const DpuArchitecture& b) {
        return a.name == b.name;
    }
};

/// Architectures in table row order, smallest first.
std::span<const DpuArchitecture> architectures();

/// Looks up an architecture by name ("B1600"); nullopt for unknown names.
std::optional<DpuArchitecture> find_architecture(std::string_view name);

/// Peak MAC operations per cycle: PP * ICP * OCP.
constexpr int peak_macs_per_cycle(const DpuArchitecture& arch) {
    return arch.pp * arch.icp * arch.ocp;
}

/// Position of the architecture in row order (0 for B512 .. 7 for B4096).
int architecture_rank(const DpuArchitecture& arch);

struct DpuConfiguration {
    DpuArchitecture arch;
    int instances = 1;

    /// "B1600_2"
    std::string label() const;

    friend bool operator==(const DpuConfiguration& a, const DpuConfiguration& b) {
        return a.arch == b.arch && a.instances == b.instances;
    }
};

/// Parses "B1600_2". Throws std::invalid_argument on malformed text or an
/// unknown architecture; the instance count is not range-checked here.
DpuConfiguration parse_configuration(std::string_view label);

/// True iff 1 <= instances <= arch.max_instances.
bool validate_configuration(const DpuConfiguration& config);

inline constexpr std::size_t kActionCount = 26;

/// The 26 selectable configurations, architectures in row order with
/// ascending instance counts. Index in this list is the policy action index.
const std::vector<DpuConfiguration>& action_space();

/// Action index of a configuration, or nullopt if it is not in the action space.
std::optional<std::size_t> action_index(const DpuConfiguration& config);

enum class WorkloadState : std::uint8_t { N, C, M };

inline constexpr std::array<WorkloadState, 3> kAllWorkloads{WorkloadState::N, WorkloadState::C,
                                                             WorkloadState::M};

char to_char(WorkloadState w);
/// Accepts "N", "C" or "M". Throws std::invalid_argument otherwise.
WorkloadState parse_workload(std::string_view text);

/// Static features of one model variant. Byte counts are per inference.
/// accuracy and pruning_ratio are metadata; no selection logic reads them.
struct ModelProfile {
    std::string name;
    double gmac = 0.0;
    double ldfm = 0.0;
    double ldwb = 0.0;
    double stfm = 0.0;
    double params = 0.0;
    double accuracy = 0.0;
    double pruning_ratio = 0.0;
    double base_dpu_efficiency = 0.0;

    /// Unique key of a variant, e.g. "ResNet152_PR25".
    std::string variant_id() const;

    /// ldfm + ldwb + stfm
    double total_data_bytes() const { return ldfm + ldwb + stfm; }

    friend bool operator==(const ModelProfile&, const ModelProfile&) = default;
};

/// Throws std::invalid_argument naming the first violated field.
void validate_model(const ModelProfile& model);

/// Builds a variant id from a base name and pruning ratio.
std::string make_variant_id(std::string_view name, double pruning_ratio);

}  // namespace dpuconfig
