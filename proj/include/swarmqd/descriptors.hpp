#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "swarmqd/environment.hpp"
#include "swarmqd/sim.hpp"

namespace swarmqd {

enum class DescriptorKind { Hbd, Sdbc, Spirit, Qed };

std::string_view descriptor_name(DescriptorKind kind);
DescriptorKind parse_descriptor(std::string_view name);
/// 3, 10, 1024 and 6 respectively.
int descriptor_dimension(DescriptorKind kind);

// ---------------------------------------------------------------------------
// Hand-coded descriptor

inline constexpr double kHbdCellSide = 0.11; // one robot length
inline constexpr int kHbdBins = 16;

/// (visitation entropy / log(cells), mean distance to centre / (M/2),
/// visited cells / cells).
using HbdDescriptor = std::array<double, 3>;

HbdDescriptor hbd_trial_features(const TrialLog& log);
/// Per-trial features averaged over trials. Requires at least one log.
HbdDescriptor compute_hbd(std::span<const TrialLog> logs);

// ---------------------------------------------------------------------------
// SDBC

/// (mean, sd) pairs for: |linear velocity| / vmax, |angular velocity| / wmax,
/// distance to nearest wall / M, mean pairwise distance / M, nearest
/// neighbour distance / M.
using SdbcDescriptor = std::array<double, 10>;

SdbcDescriptor sdbc_trial_vector(const TrialLog& log);
/// Geometric median of the per-trial vectors.
SdbcDescriptor compute_sdbc(std::span<const TrialLog> logs);

struct WeiszfeldOptions {
    double tolerance = 1e-9;
    int max_iterations = 1000;
};

/// Weiszfeld iteration starting from the mean. When an iterate lands on a
/// data point, that point is returned if it satisfies the optimality
/// condition and is otherwise nudged off it.
std::vector<double> geometric_median(std::span<const std::vector<double>> points, const WeiszfeldOptions& options = {});

// ---------------------------------------------------------------------------
// SPIRIT

inline constexpr int kSpiritStates = 64;
inline constexpr int kSpiritActions = 16;
inline constexpr int kSpiritDimension = kSpiritStates * kSpiritActions;

/// p(a|s) laid out state-major: entry s * 16 + a.
using SpiritDescriptor = std::array<double, kSpiritDimension>;

// State bits: proximity {-40,-20} deg, {0} deg, {+20,+40} deg, rear pair,
// then range-and-bearing cones {7,0,1,2} (front) and {3,4,5,6} (rear).
// Proximity groups are active above 0.5; range-and-bearing groups when a
// neighbour is closer than half the range (reading below 0.5).
int spirit_state(const SensorFrame& frame);
/// Each wheel command binned into four equal intervals over [-vmax, vmax];
/// action = 4 * left_bin + right_bin.
int spirit_action(const WheelCommand& command, double max_speed);

/// State-action counts accumulated over robots, cycles and trials.
class SpiritCounter {
public:
    void add(const TrialLog& log);
    void add(int state, int action) { ++counts_[state * kSpiritActions + action]; }
    /// Frequencies; unvisited states get the uniform distribution.
    SpiritDescriptor descriptor() const;

private:
    std::array<std::uint64_t, kSpiritDimension> counts_{};
};

SpiritDescriptor compute_spirit(std::span<const TrialLog> logs);

// ---------------------------------------------------------------------------
// Environment descriptor

/// Level index (0..3) of each attribute within its perturbation set.
using EnvDescriptor = std::array<int, kEnvironmentAttributes>;
inline constexpr int kEnvironmentCells = 4096;

/// Throws std::invalid_argument if an attribute is not one of its levels.
EnvDescriptor env_descriptor(const EnvironmentSpec& spec);
EnvironmentSpec decode(const EnvDescriptor& levels);
/// Flat cell index: sum of levels[j] * 4^j.
std::uint32_t env_index(const EnvDescriptor& levels);
EnvDescriptor env_levels(std::uint32_t index);

/// CSV row: kind,dimension,v0,v1,...
void write_descriptor_row(std::ostream& os, std::string_view kind, std::span<const double> values);

} // namespace swarmqd
