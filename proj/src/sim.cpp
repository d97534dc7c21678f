#include "swarmqd/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

namespace swarmqd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHalfObstacle = kObstacleSide / 2.0;
constexpr double kSlack = 1e-12;

// Distance along unit ray (ux, uy) from (ox, oy) to a circle; 0 if inside.
double ray_circle(double ox, double oy, double ux, double uy, double cx, double cy, double r)
{
    const double fx = ox - cx;
    const double fy = oy - cy;
    const double c = fx * fx + fy * fy - r * r;
    if (c <= 0.0)
        return 0.0;
    const double b = fx * ux + fy * uy;
    if (b >= 0.0)
        return kInf;
    const double disc = b * b - c;
    if (disc < 0.0)
        return kInf;
    return -b - std::sqrt(disc);
}

// Distance to the arena boundary from a point inside it.
double ray_walls(double ox, double oy, double ux, double uy, double side)
{
    double t = kInf;
    if (ux > 0.0)
        t = std::min(t, (side - ox) / ux);
    else if (ux < 0.0)
        t = std::min(t, -ox / ux);
    if (uy > 0.0)
        t = std::min(t, (side - oy) / uy);
    else if (uy < 0.0)
        t = std::min(t, -oy / uy);
    return std::max(0.0, t);
}

// Slab test against an axis-aligned box; 0 if the origin is inside.
double ray_box(double ox, double oy, double ux, double uy, double minx, double miny, double maxx, double maxy)
{
    double tmin = 0.0;
    double tmax = kInf;
    const double o[2] = {ox, oy};
    const double u[2] = {ux, uy};
    const double lo[2] = {minx, miny};
    const double hi[2] = {maxx, maxy};
    for (int a = 0; a < 2; ++a) {
        if (u[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a])
                return kInf;
            continue;
        }
        double t1 = (lo[a] - o[a]) / u[a];
        double t2 = (hi[a] - o[a]) / u[a];
        if (t1 > t2)
            std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
        if (tmin > tmax)
            return kInf;
    }
    return tmin;
}

// Cone index for a body-frame vector: cone 0 spans [-22.5, 22.5) degrees
// around the heading, indices increase counter-clockwise.
int cone_of(double bx, double by)
{
    constexpr double kTan22 = 0.41421356237309503; // tan(22.5 deg)
    constexpr double kTan67 = 2.4142135623730949;  // tan(67.5 deg)
    const double ax = std::abs(bx);
    const double ay = std::abs(by);
    if (ay < kTan22 * ax || (ax == 0.0 && ay == 0.0))
        return bx >= 0.0 ? 0 : 4;
    if (ay > kTan67 * ax)
        return by > 0.0 ? 2 : 6;
    if (bx > 0.0)
        return by > 0.0 ? 1 : 7;
    return by > 0.0 ? 3 : 5;
}

const std::array<double, kProximityInputs> ray_cos = [] {
    std::array<double, kProximityInputs> a{};
    for (int k = 0; k < kProximityInputs; ++k)
        a[k] = std::cos(kProximityAngles[k]);
    return a;
}();
const std::array<double, kProximityInputs> ray_sin = [] {
    std::array<double, kProximityInputs> a{};
    for (int k = 0; k < kProximityInputs; ++k)
        a[k] = std::sin(kProximityAngles[k]);
    return a;
}();

double box_distance(double px, double py, const Obstacle& o)
{
    const double dx = std::max(std::abs(px - o.x) - kHalfObstacle, 0.0);
    const double dy = std::max(std::abs(py - o.y) - kHalfObstacle, 0.0);
    return std::sqrt(dx * dx + dy * dy);
}

} // namespace

RobotBody RobotBody::for_environment(const EnvironmentSpec& env)
{
    RobotBody b;
    b.max_linear_speed = env.max_linear_speed;
    b.proximity_range = env.proximity_range;
    b.rab_range = env.rab_range;
    return b;
}

std::string_view fault_code(FaultType f)
{
    switch (f) {
    case FaultType::PMin: return "PMIN";
    case FaultType::PMax: return "PMAX";
    case FaultType::PRand: return "PRAND";
    case FaultType::LeftWheelHalf: return "LW_H";
    case FaultType::RightWheelHalf: return "RW_H";
    case FaultType::BothWheelsHalf: return "BW_H";
    case FaultType::RabOffset: return "ROFS";
    case FaultType::None: return "NONE";
    }
    return "?";
}

FaultType parse_fault_code(std::string_view code)
{
    for (int k = 0; k < kFaultTypeCount; ++k) {
        const auto f = static_cast<FaultType>(k);
        if (fault_code(f) == code)
            return f;
    }
    throw std::invalid_argument("unknown fault code '" + std::string(code) + "'");
}

FaultAssignment no_faults(int robots) { return FaultAssignment(static_cast<std::size_t>(robots), FaultType::None); }

double wrap_angle(double a)
{
    if (a > -std::numbers::pi && a <= std::numbers::pi)
        return a;
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi)
        a += 2.0 * std::numbers::pi;
    return a;
}

Pose differential_drive_step(const Pose& pose, double vl, double vr, const RobotBody& body)
{
    const double v = 0.5 * (vl + vr);
    const double w = std::clamp((vr - vl) / body.axle_length, -body.max_angular_speed, body.max_angular_speed);
    Pose next;
    next.x = pose.x + v * std::cos(pose.heading) * body.dt;
    next.y = pose.y + v * std::sin(pose.heading) * body.dt;
    next.heading = wrap_angle(pose.heading + w * body.dt);
    return next;
}

ArenaSpec place_obstacles(const EnvironmentSpec& env, Rng& rng)
{
    ArenaSpec arena;
    arena.side = env.arena_side();
    for (int k = 0; k < env.obstacle_count; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const Obstacle o{rng.uniform(kHalfObstacle, arena.side - kHalfObstacle),
                             rng.uniform(kHalfObstacle, arena.side - kHalfObstacle)};
            placed = std::none_of(arena.obstacles.begin(), arena.obstacles.end(), [&](const Obstacle& q) {
                return std::abs(q.x - o.x) < kObstacleSide && std::abs(q.y - o.y) < kObstacleSide;
            });
            if (placed)
                arena.obstacles.push_back(o);
        }
        if (!placed)
            throw PlacementError("could not place obstacle " + std::to_string(k) + " of " +
                                 std::to_string(env.obstacle_count));
    }
    return arena;
}

std::vector<Pose> place_robots(const ArenaSpec& arena, int count, double radius, Rng& rng)
{
    std::vector<Pose> poses;
    poses.reserve(count);
    for (int k = 0; k < count; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            Pose p;
            p.x = rng.uniform(radius, arena.side - radius);
            p.y = rng.uniform(radius, arena.side - radius);
            p.heading = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
            const bool free_of_robots = std::none_of(poses.begin(), poses.end(), [&](const Pose& q) {
                return std::hypot(q.x - p.x, q.y - p.y) < 2.0 * radius;
            });
            const bool free_of_obstacles =
                std::none_of(arena.obstacles.begin(), arena.obstacles.end(),
                             [&](const Obstacle& o) { return box_distance(p.x, p.y, o) < radius; });
            placed = free_of_robots && free_of_obstacles;
            if (placed)
                poses.push_back(p);
        }
        if (!placed)
            throw PlacementError("could not place robot " + std::to_string(k) + " of " + std::to_string(count) +
                                 " in a " + std::to_string(arena.side) + " m arena");
    }
    return poses;
}

World::World(ArenaSpec arena, RobotBody body, std::vector<Pose> robots)
    : arena_(std::move(arena)), body_(body), poses_(std::move(robots))
{
    refresh_headings();
}

void World::set_pose(int i, const Pose& p)
{
    poses_[i] = p;
    cos_[i] = std::cos(p.heading);
    sin_[i] = std::sin(p.heading);
}

void World::refresh_headings()
{
    cos_.resize(poses_.size());
    sin_.resize(poses_.size());
    for (std::size_t i = 0; i < poses_.size(); ++i) {
        cos_[i] = std::cos(poses_[i].heading);
        sin_[i] = std::sin(poses_[i].heading);
    }
}

std::array<double, kProximityInputs> World::sense_proximity(int robot) const
{
    std::array<double, kProximityInputs> out{};
    const Pose& p = poses_[robot];
    const double r = body_.radius;
    const double reach = r + body_.proximity_range;

    const bool near_wall = p.x - reach < 0.0 || p.y - reach < 0.0 || p.x + reach > arena_.side ||
                           p.y + reach > arena_.side;
    int near_obstacles[8];
    int n_obstacles = 0;
    for (int k = 0; k < static_cast<int>(arena_.obstacles.size()) && n_obstacles < 8; ++k)
        if (box_distance(p.x, p.y, arena_.obstacles[k]) <= reach)
            near_obstacles[n_obstacles++] = k;
    int near_robots[24];
    int n_robots = 0;
    const double robot_reach = reach + r;
    for (int j = 0; j < size() && n_robots < 24; ++j) {
        if (j == robot)
            continue;
        const double dx = poses_[j].x - p.x;
        const double dy = poses_[j].y - p.y;
        if (dx * dx + dy * dy <= robot_reach * robot_reach)
            near_robots[n_robots++] = j;
    }
    if (!near_wall && n_obstacles == 0 && n_robots == 0)
        return out;

    const double ch = cos_[robot];
    const double sh = sin_[robot];
    for (int s = 0; s < kProximityInputs; ++s) {
        const double ca = ray_cos[s];
        const double sa = ray_sin[s];
        const double ux = ch * ca - sh * sa;
        const double uy = sh * ca + ch * sa;
        double t = near_wall ? ray_walls(p.x, p.y, ux, uy, arena_.side) : kInf;
        for (int k = 0; k < n_obstacles; ++k) {
            const Obstacle& o = arena_.obstacles[near_obstacles[k]];
            t = std::min(t, ray_box(p.x, p.y, ux, uy, o.x - kHalfObstacle, o.y - kHalfObstacle, o.x + kHalfObstacle,
                                    o.y + kHalfObstacle));
        }
        for (int k = 0; k < n_robots; ++k) {
            const Pose& q = poses_[near_robots[k]];
            t = std::min(t, ray_circle(p.x, p.y, ux, uy, q.x, q.y, r));
        }
        const double d = std::max(0.0, t - r);
        if (d < body_.proximity_range)
            out[s] = std::max(0.0, 1.0 - d / body_.proximity_range);
    }
    return out;
}

std::array<double, kRabInputs> World::sense_rab(int robot, std::optional<Vec2> offset) const
{
    std::array<double, kRabInputs> out;
    out.fill(1.0);
    const Pose& p = poses_[robot];
    const double ch = cos_[robot];
    const double sh = sin_[robot];
    const double range = body_.rab_range;
    for (int j = 0; j < size(); ++j) {
        if (j == robot)
            continue;
        const double dx = poses_[j].x - p.x;
        const double dy = poses_[j].y - p.y;
        double bx = ch * dx + sh * dy;
        double by = -sh * dx + ch * dy;
        if (offset) {
            bx += offset->x;
            by += offset->y;
        } else if (std::abs(dx) >= range || std::abs(dy) >= range) {
            continue;
        }
        const double dist = std::sqrt(bx * bx + by * by);
        if (dist >= range)
            continue;
        const int cone = cone_of(bx, by);
        out[cone] = std::min(out[cone], dist / range);
    }
    return out;
}

void World::step(std::span<const WheelCommand> commands)
{
    for (int i = 0; i < size(); ++i) {
        Pose& p = poses_[i];
        const double v = 0.5 * (commands[i].left + commands[i].right);
        const double w = std::clamp((commands[i].right - commands[i].left) / body_.axle_length,
                                    -body_.max_angular_speed, body_.max_angular_speed);
        p.x += v * cos_[i] * body_.dt;
        p.y += v * sin_[i] * body_.dt;
        if (w != 0.0) {
            p.heading = wrap_angle(p.heading + w * body_.dt);
            cos_[i] = std::cos(p.heading);
            sin_[i] = std::sin(p.heading);
        }
    }
    resolve_collisions();
}

void World::resolve_collisions()
{
    const double r = body_.radius;
    const double min_gap = 2.0 * r;
    const int n = size();
    for (int pass = 0; pass < 200; ++pass) {
        bool moved = false;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                Pose& a = poses_[i];
                Pose& b = poses_[j];
                double dx = b.x - a.x;
                double dy = b.y - a.y;
                const double d2 = dx * dx + dy * dy;
                if (d2 >= min_gap * min_gap)
                    continue;
                double d = std::sqrt(d2);
                if (min_gap - d <= kSlack)
                    continue;
                if (d == 0.0) {
                    dx = 1.0;
                    dy = 0.0;
                    d = 1.0;
                    a.x -= 0.5 * min_gap + kSlack;
                    b.x += 0.5 * min_gap + kSlack;
                } else {
                    const double push = 0.5 * (min_gap - d) + kSlack;
                    a.x -= push * dx / d;
                    a.y -= push * dy / d;
                    b.x += push * dx / d;
                    b.y += push * dy / d;
                }
                moved = true;
            }
        }
        for (Pose& p : poses_) {
            for (const Obstacle& o : arena_.obstacles) {
                const double qx = std::clamp(p.x, o.x - kHalfObstacle, o.x + kHalfObstacle);
                const double qy = std::clamp(p.y, o.y - kHalfObstacle, o.y + kHalfObstacle);
                const double dx = p.x - qx;
                const double dy = p.y - qy;
                const double d = std::sqrt(dx * dx + dy * dy);
                if (d >= r - kSlack)
                    continue;
                if (d > 0.0) {
                    p.x = qx + dx / d * (r + kSlack);
                    p.y = qy + dy / d * (r + kSlack);
                } else {
                    // centre inside the square: leave through the nearest side
                    const double left = p.x - (o.x - kHalfObstacle);
                    const double right = (o.x + kHalfObstacle) - p.x;
                    const double down = p.y - (o.y - kHalfObstacle);
                    const double up = (o.y + kHalfObstacle) - p.y;
                    const double m = std::min({left, right, down, up});
                    if (m == left)
                        p.x = o.x - kHalfObstacle - r - kSlack;
                    else if (m == right)
                        p.x = o.x + kHalfObstacle + r + kSlack;
                    else if (m == down)
                        p.y = o.y - kHalfObstacle - r - kSlack;
                    else
                        p.y = o.y + kHalfObstacle + r + kSlack;
                }
                moved = true;
            }
            const double cx = std::clamp(p.x, r, arena_.side - r);
            const double cy = std::clamp(p.y, r, arena_.side - r);
            if (cx != p.x || cy != p.y) {
                p.x = cx;
                p.y = cy;
                moved = true;
            }
        }
        if (!moved)
            return;
    }
}

void apply_sensor_faults(SensorFrame& frame, FaultType fault, Rng& rng)
{
    switch (fault) {
    case FaultType::PMin:
        std::fill_n(frame.proximity.begin(), kFrontalProximity, 0.0);
        break;
    case FaultType::PMax:
        std::fill_n(frame.proximity.begin(), kFrontalProximity, 1.0);
        break;
    case FaultType::PRand:
        for (int k = 0; k < kFrontalProximity; ++k)
            frame.proximity[k] = rng.uniform();
        break;
    default:
        break;
    }
}

WheelCommand apply_actuator_faults(WheelCommand c, FaultType fault)
{
    switch (fault) {
    case FaultType::LeftWheelHalf: c.left *= 0.5; break;
    case FaultType::RightWheelHalf: c.right *= 0.5; break;
    case FaultType::BothWheelsHalf:
        c.left *= 0.5;
        c.right *= 0.5;
        break;
    default: break;
    }
    return c;
}

std::optional<Vec2> rab_offset(FaultType fault, double rab_range, Rng& rng)
{
    if (fault != FaultType::RabOffset)
        return std::nullopt;
    const double magnitude = rng.uniform(0.75, 1.0) * rab_range;
    const double angle = rng.uniform(-std::numbers::pi, std::numbers::pi);
    return Vec2{magnitude * std::cos(angle), magnitude * std::sin(angle)};
}

FaultedReading apply_faults(SensorFrame frame, WheelCommand command, FaultType fault, Rng& rng)
{
    apply_sensor_faults(frame, fault, rng);
    return {frame, apply_actuator_faults(command, fault)};
}

int cycles_for(double duration, double dt) { return static_cast<int>(std::llround(duration / dt)); }

TrialLog run_trial(const EnvironmentSpec& env, const Genome& genome, const FaultAssignment& faults,
                   std::uint64_t seed, const TrialOptions& options)
{
    if (static_cast<int>(faults.size()) != env.swarm_size)
        throw std::invalid_argument("fault assignment has " + std::to_string(faults.size()) + " entries for " +
                                    std::to_string(env.swarm_size) + " robots");
    const RobotBody body = RobotBody::for_environment(env);
    Rng placement(derive_seed(seed, "placement", 0));
    Rng noise(derive_seed(seed, "faults", 0));

    ArenaSpec arena = place_obstacles(env, placement);
    std::vector<Pose> start = place_robots(arena, env.swarm_size, body.radius, placement);
    World world(arena, body, std::move(start));

    TrialLog log;
    log.arena = std::move(arena);
    log.body = body;
    log.robots = env.swarm_size;
    log.cycles = cycles_for(options.duration, body.dt);
    const std::size_t total = static_cast<std::size_t>(log.cycles) * log.robots;
    log.poses.resize(total);
    log.frames.resize(total);
    log.commands.resize(total);
    log.linear_velocity.resize(total);
    log.angular_velocity.resize(total);

    std::vector<NetworkState> states(log.robots);
    std::array<double, kInputCount> inputs{};
    inputs[kBiasInput] = 1.0;
    const double vmax = body.max_linear_speed;

    for (int t = 0; t < log.cycles; ++t) {
        const std::size_t row = static_cast<std::size_t>(t) * log.robots;
        for (int r = 0; r < log.robots; ++r) {
            const FaultType fault = faults[r];
            SensorFrame& frame = log.frames[row + r];
            frame.proximity = world.sense_proximity(r);
            frame.rab = world.sense_rab(r, rab_offset(fault, body.rab_range, noise));
            apply_sensor_faults(frame, fault, noise);
            for (int k = 0; k < kProximityInputs; ++k)
                inputs[k] = scale_input(frame.proximity[k]);
            for (int k = 0; k < kRabInputs; ++k)
                inputs[kProximityInputs + k] = scale_input(frame.rab[k]);
            const auto out = forward(genome, states[r], inputs);
            const WheelCommand cmd = apply_actuator_faults({out[0] * vmax, out[1] * vmax}, fault);
            log.commands[row + r] = cmd;
            log.linear_velocity[row + r] = 0.5 * (cmd.left + cmd.right);
            log.angular_velocity[row + r] =
                std::clamp((cmd.right - cmd.left) / body.axle_length, -body.max_angular_speed, body.max_angular_speed);
        }
        world.step(std::span<const WheelCommand>(log.commands).subspan(row, log.robots));
        std::copy(world.poses().begin(), world.poses().end(), log.poses.begin() + static_cast<std::ptrdiff_t>(row));
    }
    return log;
}

void write_trial_csv(std::ostream& os, const TrialLog& log)
{
    os << "cycle,robot,x,y,heading,vl,vr\n";
    char buf[256];
    for (int t = 0; t < log.cycles; ++t)
        for (int r = 0; r < log.robots; ++r) {
            const Pose& p = log.poses[log.at(t, r)];
            const WheelCommand& c = log.commands[log.at(t, r)];
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, r, p.x, p.y, p.heading, c.left,
                          c.right);
            os << buf;
        }
}

} // namespace swarmqd
