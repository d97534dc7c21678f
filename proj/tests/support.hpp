#pragma once

#include <functional>

#include "swarmqd/sim.hpp"

namespace swarmqd::testing {

// Hand-built log: `place(t, r)` gives the pose of robot r at cycle t; every
// robot reports linear speed `speed` (m/s).
inline TrialLog synthetic_log(double side, int robots, int cycles, const std::function<Pose(int, int)>& place,
                              double speed = 0.0)
{
    TrialLog log;
    log.arena.side = side;
    log.body = RobotBody{};
    log.robots = robots;
    log.cycles = cycles;
    for (int t = 0; t < cycles; ++t)
        for (int r = 0; r < robots; ++r) {
            log.poses.push_back(place(t, r));
            log.frames.emplace_back();
            log.commands.push_back(WheelCommand{speed, speed});
            log.linear_velocity.push_back(speed);
            log.angular_velocity.push_back(0.0);
        }
    return log;
}

} // namespace swarmqd::testing
