#pragma once

#include <array>
#include <cmath>
#include <string>

namespace swarmqd {

/// The six attributes that parameterise a simulated world. SI units.
struct EnvironmentSpec {
    double max_linear_speed = 0.10; // m/s
    int swarm_size = 10;
    double arena_area = 16.0; // m^2, square arena
    int obstacle_count = 0;
    double rab_range = 1.0;         // m
    double proximity_range = 0.11;  // m

    double arena_side() const { return std::sqrt(arena_area); }

    friend bool operator==(const EnvironmentSpec&, const EnvironmentSpec&) = default;
};

/// Perturbation sets; each attribute takes one of four levels.
inline constexpr std::array<double, 4> kSpeedLevels{0.05, 0.10, 0.15, 0.20};
inline constexpr std::array<int, 4> kSwarmSizeLevels{5, 10, 15, 20};
inline constexpr std::array<double, 4> kArenaAreaLevels{4.0, 9.0, 16.0, 25.0};
inline constexpr std::array<int, 4> kObstacleLevels{0, 2, 4, 6};
inline constexpr std::array<double, 4> kRabRangeLevels{0.25, 0.50, 1.00, 2.00};
inline constexpr std::array<double, 4> kProximityRangeLevels{0.055, 0.11, 0.22, 0.44};

inline constexpr int kEnvironmentAttributes = 6;
inline constexpr int kLevelsPerAttribute = 4;

/// The unperturbed reference environment.
inline EnvironmentSpec normal_environment() { return EnvironmentSpec{}; }

std::string describe(const EnvironmentSpec& env);

} // namespace swarmqd
