#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "swarmqd/environment.hpp"
#include "swarmqd/genome.hpp"
#include "swarmqd/sim.hpp"

namespace swarmqd {

enum class TaskKind { Aggregation, Dispersion, Flocking, Patrolling, BorderPatrolling };
inline constexpr int kTaskCount = 5;
inline constexpr TaskKind kAllTasks[kTaskCount] = {TaskKind::Aggregation, TaskKind::Dispersion, TaskKind::Flocking,
                                                   TaskKind::Patrolling, TaskKind::BorderPatrolling};

std::string_view task_name(TaskKind task);
TaskKind parse_task(std::string_view name);

// All fitness functions return values in [0, 1].

/// Mean over cycles and robots of 1 - |x_r - centroid| / diagonal.
double fitness_aggregation(const TrialLog& log);

/// Mean nearest-neighbour distance over half the diagonal, clamped to 1.
/// Throws std::invalid_argument for fewer than two robots.
double fitness_dispersion(const TrialLog& log);

/// Pairs closer than 0.5 m earn (1 - min(1, dtheta / 90deg)) * max(0, Vi Vj),
/// V being signed linear speed as a fraction of the maximum. Normalised by
/// cycles times the number of pairs.
double fitness_flocking(const TrialLog& log);

double fitness_patrolling(const TrialLog& log);
double fitness_border_patrolling(const TrialLog& log);

double fitness(TaskKind task, const TrialLog& log);

/// 10 x 10 patrol grid. A cell is set to 1 on every cycle a robot centre lies
/// inside it and otherwise decays linearly at `decay` per second, floored at
/// 0. Values are computed from the last visit, so k unvisited cycles give
/// exactly max(0, 1 - decay * dt * k).
class PatrolGrid {
public:
    static constexpr int kCellsPerSide = 10;
    static constexpr int kCellCount = kCellsPerSide * kCellsPerSide;
    static constexpr int kBorderCellCount = 36;

    PatrolGrid(double arena_side, double dt, double decay = 0.005);

    /// Advances one control cycle with robots at `robots`.
    void advance(std::span<const Pose> robots);

    double value(int cx, int cy) const;
    double mean_all() const;
    double mean_border() const;
    int cycle() const { return cycle_; }

    static bool is_border(int cx, int cy)
    {
        return cx == 0 || cy == 0 || cx == kCellsPerSide - 1 || cy == kCellsPerSide - 1;
    }

private:
    int cell_of(double coord) const;

    double side_;
    double dt_;
    double decay_;
    int cycle_ = 0;
    std::vector<int> last_visit_; // -1: never visited
};

/// Mean fitness over one trial per seed.
double performance(TaskKind task, const EnvironmentSpec& env, const Genome& genome, const FaultAssignment& faults,
                   std::span<const std::uint64_t> seeds, const TrialOptions& options = {});

} // namespace swarmqd
