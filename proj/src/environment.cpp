#include "swarmqd/environment.hpp"

#include <cstdio>

namespace swarmqd {

std::string describe(const EnvironmentSpec& env)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "speed=%gm/s robots=%d area=%gm2 obstacles=%d rab=%gm prox=%gm",
                  env.max_linear_speed, env.swarm_size, env.arena_area, env.obstacle_count, env.rab_range,
                  env.proximity_range);
    return buf;
}

} // namespace swarmqd
