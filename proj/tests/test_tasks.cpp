#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "swarmqd/tasks.hpp"

using namespace swarmqd;
using swarmqd::testing::synthetic_log;

namespace {

// Straightforward per-cycle grid replay used as the patrolling oracle.
double patrol_oracle(const TrialLog& log, bool border)
{
    std::vector<double> cells(100, 0.0);
    const double w = log.arena.side / 10.0;
    double total = 0.0;
    for (int t = 0; t < log.cycles; ++t) {
        std::vector<bool> hit(100, false);
        for (const Pose& p : log.poses_at(t)) {
            const int cx = std::clamp(static_cast<int>(std::floor(p.x / w)), 0, 9);
            const int cy = std::clamp(static_cast<int>(std::floor(p.y / w)), 0, 9);
            hit[cy * 10 + cx] = true;
        }
        double sum = 0.0;
        int n = 0;
        for (int cy = 0; cy < 10; ++cy)
            for (int cx = 0; cx < 10; ++cx) {
                double& v = cells[cy * 10 + cx];
                v = hit[cy * 10 + cx] ? 1.0 : std::max(0.0, v - 0.005 * log.body.dt);
                const bool edge = cx == 0 || cy == 0 || cx == 9 || cy == 9;
                if (!border || edge) {
                    sum += v;
                    ++n;
                }
            }
        total += sum / n;
    }
    return total / log.cycles;
}

TrialLog random_trial(std::uint64_t seed, double duration = 100.0)
{
    Rng rng(seed);
    EnvironmentSpec env = normal_environment();
    env.swarm_size = 5 + static_cast<int>(rng.below(16));
    env.arena_area = 4.0;
    env.max_linear_speed = 0.2;
    Genome g = random_genome(rng);
    for (int m = 0; m < 20; ++m)
        g = mutate(g, MutationParams{}, rng);
    return run_trial(env, g, no_faults(env.swarm_size), seed, {duration});
}

} // namespace

TEST_CASE("task names round trip")
{
    for (TaskKind t : kAllTasks)
        CHECK(parse_task(task_name(t)) == t);
    CHECK_THROWS(parse_task("foraging"));
}

TEST_CASE("aggregation examples")
{
    const auto same = synthetic_log(4.0, 5, 10, [](int, int) { return Pose{1.3, 2.7, 0.0}; });
    CHECK(fitness_aggregation(same) == doctest::Approx(1.0));

    const auto corners = synthetic_log(4.0, 2, 10, [](int, int r) { return r ? Pose{4.0, 4.0, 0.0} : Pose{}; });
    CHECK(fitness_aggregation(corners) == doctest::Approx(0.5).epsilon(1e-12));

    const auto single = synthetic_log(4.0, 1, 10, [](int t, int) { return Pose{0.1 * t, 1.0, 0.0}; });
    CHECK(fitness_aggregation(single) == doctest::Approx(1.0));
}

TEST_CASE("dispersion examples")
{
    const auto same = synthetic_log(4.0, 3, 10, [](int, int) { return Pose{2.0, 2.0, 0.0}; });
    CHECK(fitness_dispersion(same) == 0.0);

    const auto apart = synthetic_log(4.0, 2, 10, [](int, int r) { return Pose{1.0 + r, 2.0, 0.0}; });
    CHECK(fitness_dispersion(apart) == doctest::Approx(1.0 / (2.0 * std::sqrt(2.0))).epsilon(1e-12));

    const auto corners = synthetic_log(4.0, 2, 10, [](int, int r) { return r ? Pose{4.0, 4.0, 0.0} : Pose{}; });
    CHECK(fitness_dispersion(corners) == 1.0);

    const auto lone = synthetic_log(4.0, 1, 10, [](int, int) { return Pose{2.0, 2.0, 0.0}; });
    CHECK_THROWS_AS(fitness_dispersion(lone), std::invalid_argument);
}

TEST_CASE("aggregation and dispersion move in opposite directions as robots separate")
{
    double agg_prev = 2.0;
    double disp_prev = -1.0;
    for (int k = 0; k <= 20; ++k) {
        const double s = 2.0 * k / 20.0;
        const auto log = synthetic_log(4.0, 2, 3, [s](int, int r) {
            return r ? Pose{2.0 + s, 2.0 + s, 0.0} : Pose{2.0 - s, 2.0 - s, 0.0};
        });
        const double agg = fitness_aggregation(log);
        const double disp = fitness_dispersion(log);
        CHECK(agg < agg_prev);
        // raw dispersion here is s; the clamp only binds at s >= 1
        if (s < 1.0) {
            CHECK(disp == doctest::Approx(s).epsilon(1e-12));
            CHECK(disp > disp_prev);
        } else {
            CHECK(disp == 1.0);
        }
        agg_prev = agg;
        disp_prev = disp;
    }
}

TEST_CASE("flocking examples")
{
    const auto still = synthetic_log(4.0, 4, 10, [](int, int r) { return Pose{1.0 + 0.1 * r, 1.0, 0.0}; });
    CHECK(fitness_flocking(still) == 0.0);

    const auto flock = synthetic_log(
        4.0, 2, 10, [](int t, int r) { return Pose{1.0 + 0.02 * t, 1.0 + 0.2 * r, 0.0}; }, 0.10);
    CHECK(fitness_flocking(flock) == doctest::Approx(1.0));

    const auto distant = synthetic_log(
        4.0, 2, 10, [](int t, int r) { return Pose{1.0 + 0.02 * t, 1.0 + 0.6 * r, 0.0}; }, 0.10);
    CHECK(fitness_flocking(distant) == 0.0);

    // 45 degree heading difference halves the pair term
    const auto skew = synthetic_log(
        4.0, 2, 10, [](int, int r) { return Pose{1.0, 1.0 + 0.2 * r, r * std::numbers::pi / 4}; }, 0.10);
    CHECK(fitness_flocking(skew) == doctest::Approx(0.5));

    // three robots, only one pair in range: one third
    const auto trio = synthetic_log(
        4.0, 3, 10, [](int, int r) { return Pose{1.0 + (r == 2 ? 2.0 : 0.2 * r), 1.0, 0.0}; }, 0.10);
    CHECK(fitness_flocking(trio) == doctest::Approx(1.0 / 3.0));

    // coordinated reversing counts as well
    const auto reverse = synthetic_log(
        4.0, 2, 10, [](int, int r) { return Pose{1.0, 1.0 + 0.2 * r, 0.0}; }, -0.10);
    CHECK(fitness_flocking(reverse) == doctest::Approx(1.0));
}

TEST_CASE("patrolling examples")
{
    auto empty = synthetic_log(4.0, 0, 50, [](int, int) { return Pose{}; });
    CHECK(fitness_patrolling(empty) == 0.0);
    CHECK(fitness_border_patrolling(empty) == 0.0);

    const auto parked = synthetic_log(4.0, 1, 2000, [](int, int) { return Pose{2.1, 2.1, 0.0}; });
    CHECK(fitness_patrolling(parked) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(fitness_border_patrolling(parked) == 0.0);

    const auto corner = synthetic_log(4.0, 1, 2000, [](int, int) { return Pose{0.1, 0.1, 0.0}; });
    CHECK(fitness_patrolling(corner) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(fitness_border_patrolling(corner) == doctest::Approx(1.0 / 36.0).epsilon(1e-12));
}

TEST_CASE("patrol grid decays linearly to zero")
{
    PatrolGrid grid(4.0, 0.2);
    const Pose p{2.1, 2.1, 0.0};
    grid.advance(std::span<const Pose>(&p, 1));
    CHECK(grid.value(5, 5) == 1.0);
    for (int k = 1; k <= 1100; ++k) {
        grid.advance({});
        REQUIRE(grid.value(5, 5) == std::max(0.0, 1.0 - 0.005 * 0.2 * k));
    }
    // 200 s after the visit
    CHECK(grid.value(5, 5) == 0.0);
    CHECK(grid.value(0, 0) == 0.0);
}

TEST_CASE("border cells")
{
    int border = 0;
    for (int cy = 0; cy < 10; ++cy)
        for (int cx = 0; cx < 10; ++cx)
            border += PatrolGrid::is_border(cx, cy);
    CHECK(border == PatrolGrid::kBorderCellCount);
}

TEST_CASE("patrolling matches a per-cycle replay on simulated trials")
{
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const TrialLog log = random_trial(seed);
        CHECK(fitness_patrolling(log) == doctest::Approx(patrol_oracle(log, false)).epsilon(1e-9));
        CHECK(fitness_border_patrolling(log) == doctest::Approx(patrol_oracle(log, true)).epsilon(1e-9));
    }
}

TEST_CASE("all fitnesses stay in [0,1]")
{
    for (std::uint64_t seed = 10; seed < 20; ++seed) {
        const TrialLog log = random_trial(seed);
        for (TaskKind t : kAllTasks) {
            const double f = fitness(t, log);
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
        }
    }
}

TEST_CASE("performance averages independent trials")
{
    Rng rng(30);
    const Genome g = random_genome(rng);
    const auto env = normal_environment();
    const auto faults = no_faults(env.swarm_size);
    const TrialOptions opt{20.0};

    const std::uint64_t one[] = {77};
    const double single = fitness(TaskKind::Dispersion, run_trial(env, g, faults, 77, opt));
    CHECK(performance(TaskKind::Dispersion, env, g, faults, one, opt) == single);

    const std::uint64_t repeated[] = {77, 77, 77, 77};
    CHECK(performance(TaskKind::Dispersion, env, g, faults, repeated, opt) == doctest::Approx(single).epsilon(1e-15));

    std::vector<std::uint64_t> seeds;
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        seeds.push_back(1000 + s);
        sum += fitness(TaskKind::Aggregation, run_trial(env, g, faults, 1000 + s, opt));
    }
    CHECK(std::abs(performance(TaskKind::Aggregation, env, g, faults, seeds, opt) - sum / 50.0) < 1e-12);
}
