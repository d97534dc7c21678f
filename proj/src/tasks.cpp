#include "swarmqd/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace swarmqd {

std::string_view task_name(TaskKind task)
{
    switch (task) {
    case TaskKind::Aggregation: return "aggregation";
    case TaskKind::Dispersion: return "dispersion";
    case TaskKind::Flocking: return "flocking";
    case TaskKind::Patrolling: return "patrolling";
    case TaskKind::BorderPatrolling: return "border_patrolling";
    }
    return "?";
}

TaskKind parse_task(std::string_view name)
{
    for (TaskKind t : kAllTasks)
        if (task_name(t) == name)
            return t;
    throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

double fitness_aggregation(const TrialLog& log)
{
    if (log.cycles == 0 || log.robots == 0)
        return 0.0;
    const double m = log.arena.diagonal();
    double total = 0.0;
    for (int t = 0; t < log.cycles; ++t) {
        const auto poses = log.poses_at(t);
        double cx = 0.0;
        double cy = 0.0;
        for (const Pose& p : poses) {
            cx += p.x;
            cy += p.y;
        }
        cx /= log.robots;
        cy /= log.robots;
        for (const Pose& p : poses)
            total += 1.0 - std::hypot(p.x - cx, p.y - cy) / m;
    }
    return total / (static_cast<double>(log.cycles) * log.robots);
}

double fitness_dispersion(const TrialLog& log)
{
    if (log.robots < 2)
        throw std::invalid_argument("dispersion needs at least two robots");
    if (log.cycles == 0)
        return 0.0;
    const double half = log.arena.diagonal() / 2.0;
    double total = 0.0;
    for (int t = 0; t < log.cycles; ++t) {
        const auto poses = log.poses_at(t);
        for (int i = 0; i < log.robots; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < log.robots; ++j)
                if (j != i)
                    best = std::min(best, std::hypot(poses[i].x - poses[j].x, poses[i].y - poses[j].y));
            total += best / half;
        }
    }
    return std::min(1.0, total / (static_cast<double>(log.cycles) * log.robots));
}

double fitness_flocking(const TrialLog& log)
{
    if (log.robots < 2 || log.cycles == 0)
        return 0.0;
    constexpr double kRange = 0.5;
    constexpr double kRightAngle = std::numbers::pi / 2.0;
    const double vmax = log.body.max_linear_speed;
    double total = 0.0;
    for (int t = 0; t < log.cycles; ++t) {
        const auto poses = log.poses_at(t);
        for (int i = 0; i < log.robots; ++i) {
            const double vi = log.linear_velocity[log.at(t, i)] / vmax;
            for (int j = i + 1; j < log.robots; ++j) {
                if (std::hypot(poses[i].x - poses[j].x, poses[i].y - poses[j].y) >= kRange)
                    continue;
                const double vj = log.linear_velocity[log.at(t, j)] / vmax;
                const double dtheta = std::abs(wrap_angle(poses[i].heading - poses[j].heading));
                total += (1.0 - std::min(1.0, dtheta / kRightAngle)) * std::max(0.0, vi * vj);
            }
        }
    }
    const double pairs = 0.5 * log.robots * (log.robots - 1);
    return total / (static_cast<double>(log.cycles) * pairs);
}

PatrolGrid::PatrolGrid(double arena_side, double dt, double decay)
    : side_(arena_side), dt_(dt), decay_(decay), last_visit_(kCellCount, -1)
{
}

int PatrolGrid::cell_of(double coord) const
{
    const int c = static_cast<int>(std::floor(coord / (side_ / kCellsPerSide)));
    return std::clamp(c, 0, kCellsPerSide - 1);
}

void PatrolGrid::advance(std::span<const Pose> robots)
{
    ++cycle_;
    for (const Pose& p : robots)
        last_visit_[cell_of(p.y) * kCellsPerSide + cell_of(p.x)] = cycle_;
}

double PatrolGrid::value(int cx, int cy) const
{
    const int last = last_visit_[cy * kCellsPerSide + cx];
    if (last < 0)
        return 0.0;
    return std::max(0.0, 1.0 - decay_ * dt_ * (cycle_ - last));
}

double PatrolGrid::mean_all() const
{
    double sum = 0.0;
    for (int cy = 0; cy < kCellsPerSide; ++cy)
        for (int cx = 0; cx < kCellsPerSide; ++cx)
            sum += value(cx, cy);
    return sum / kCellCount;
}

double PatrolGrid::mean_border() const
{
    double sum = 0.0;
    for (int cy = 0; cy < kCellsPerSide; ++cy)
        for (int cx = 0; cx < kCellsPerSide; ++cx)
            if (is_border(cx, cy))
                sum += value(cx, cy);
    return sum / kBorderCellCount;
}

namespace {

double patrol_fitness(const TrialLog& log, bool border_only)
{
    if (log.cycles == 0)
        return 0.0;
    PatrolGrid grid(log.arena.side, log.body.dt);
    double total = 0.0;
    for (int t = 0; t < log.cycles; ++t) {
        grid.advance(log.poses_at(t));
        total += border_only ? grid.mean_border() : grid.mean_all();
    }
    return total / log.cycles;
}

} // namespace

double fitness_patrolling(const TrialLog& log) { return patrol_fitness(log, false); }
double fitness_border_patrolling(const TrialLog& log) { return patrol_fitness(log, true); }

double fitness(TaskKind task, const TrialLog& log)
{
    switch (task) {
    case TaskKind::Aggregation: return fitness_aggregation(log);
    case TaskKind::Dispersion: return fitness_dispersion(log);
    case TaskKind::Flocking: return fitness_flocking(log);
    case TaskKind::Patrolling: return fitness_patrolling(log);
    case TaskKind::BorderPatrolling: return fitness_border_patrolling(log);
    }
    throw std::invalid_argument("unknown task");
}

double performance(TaskKind task, const EnvironmentSpec& env, const Genome& genome, const FaultAssignment& faults,
                   std::span<const std::uint64_t> seeds, const TrialOptions& options)
{
    if (seeds.empty())
        throw std::invalid_argument("performance needs at least one trial seed");
    double sum = 0.0;
    for (std::uint64_t seed : seeds)
        sum += fitness(task, run_trial(env, genome, faults, seed, options));
    return sum / static_cast<double>(seeds.size());
}

} // namespace swarmqd
