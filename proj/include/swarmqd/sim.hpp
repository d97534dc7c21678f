#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "swarmqd/environment.hpp"
#include "swarmqd/genome.hpp"
#include "swarmqd/rng.hpp"

namespace swarmqd {

inline constexpr double kObstacleSide = 0.25;
inline constexpr double kControlPeriod = 0.20;

/// Axis-aligned square obstacle of side kObstacleSide, given by its center.
struct Obstacle {
    double x = 0.0;
    double y = 0.0;
};

/// Square arena spanning [0, side] x [0, side].
struct ArenaSpec {
    double side = 4.0;
    std::vector<Obstacle> obstacles;

    double diagonal() const { return side * 1.4142135623730951; }
};

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0; // radians in (-pi, pi]

    friend bool operator==(const Pose&, const Pose&) = default;
};

struct RobotBody {
    double radius = 0.06;
    double max_linear_speed = 0.10;
    double max_angular_speed = 0.2 / 0.09; // 127.32 deg/s
    double axle_length = 0.09;
    double proximity_range = 0.11;
    double rab_range = 1.0;
    double dt = kControlPeriod;

    static RobotBody for_environment(const EnvironmentSpec& env);
};

enum class FaultType : std::uint8_t { PMin, PMax, PRand, LeftWheelHalf, RightWheelHalf, BothWheelsHalf, RabOffset, None };
inline constexpr int kFaultTypeCount = 8;

std::string_view fault_code(FaultType f);
/// Accepts the codes PMIN, PMAX, PRAND, LW_H, RW_H, BW_H, ROFS, NONE.
FaultType parse_fault_code(std::string_view code);

/// One fault per robot.
using FaultAssignment = std::vector<FaultType>;
FaultAssignment no_faults(int robots);

// Proximity layout in the body frame (counter-clockwise positive): five
// frontal rays at -40, -20, 0, +20, +40 degrees, then two rear rays at +160
// and -160 degrees.
inline constexpr int kFrontalProximity = 5;
inline constexpr std::array<double, kProximityInputs> kProximityAngles{
    -0.6981317007977318, -0.3490658503988659, 0.0, 0.3490658503988659, 0.6981317007977318,
    2.792526803190927, -2.792526803190927};

struct SensorFrame {
    std::array<double, kProximityInputs> proximity{};
    std::array<double, kRabInputs> rab{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

    friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

struct WheelCommand {
    double left = 0.0;  // m/s
    double right = 0.0; // m/s

    friend bool operator==(const WheelCommand&, const WheelCommand&) = default;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Forward-Euler differential drive over one control period. Position
/// advances along the old heading; the heading is wrapped to (-pi, pi].
Pose differential_drive_step(const Pose& pose, double vl, double vr, const RobotBody& body);

double wrap_angle(double a);

/// Signals that random placement could not find a free spot.
class PlacementError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kPlacementAttempts = 10000;

/// Random obstacle layout for `env`: obstacles inside the walls, not
/// overlapping each other.
ArenaSpec place_obstacles(const EnvironmentSpec& env, Rng& rng);

/// Uniform random non-overlapping robot poses. Throws PlacementError after
/// kPlacementAttempts rejected draws for a single robot.
std::vector<Pose> place_robots(const ArenaSpec& arena, int count, double radius, Rng& rng);

/// Kinematic world of disc robots. Single-threaded; copyable.
class World {
public:
    World(ArenaSpec arena, RobotBody body, std::vector<Pose> robots);

    const ArenaSpec& arena() const { return arena_; }
    const RobotBody& body() const { return body_; }
    std::span<const Pose> poses() const { return poses_; }
    int size() const { return static_cast<int>(poses_.size()); }
    void set_pose(int i, const Pose& p);

    /// Seven proximity activations max(0, 1 - d/range), d being the distance
    /// from the body surface to the nearest wall, obstacle or robot along the
    /// ray; 0 when nothing is within range.
    std::array<double, kProximityInputs> sense_proximity(int robot) const;

    /// Eight cone readings: range of the closest neighbour in the cone over
    /// rab_range, or 1 if none. Cone 0 is centred on the heading and cones
    /// advance counter-clockwise in 45 degree steps. `offset` (body frame)
    /// is added to every perceived neighbour position before binning.
    std::array<double, kRabInputs> sense_rab(int robot, std::optional<Vec2> offset = std::nullopt) const;

    /// Integrates all robots one control period and resolves collisions.
    void step(std::span<const WheelCommand> commands);

    /// Pushes overlapping discs apart along their centre line, then out of
    /// obstacles, then clamps to the walls; repeats until nothing moves.
    void resolve_collisions();

private:
    void refresh_headings();

    ArenaSpec arena_;
    RobotBody body_;
    std::vector<Pose> poses_;
    std::vector<double> cos_; // cached per-robot heading cosines
    std::vector<double> sin_;
};

/// Overwrites frontal proximity readings for the proximity faults. Other
/// fault types leave the frame unchanged (ROFS acts inside sense_rab).
void apply_sensor_faults(SensorFrame& frame, FaultType fault, Rng& rng);

WheelCommand apply_actuator_faults(WheelCommand command, FaultType fault);

/// Draws the body-frame range-and-bearing offset for ROFS; nullopt otherwise.
std::optional<Vec2> rab_offset(FaultType fault, double rab_range, Rng& rng);

struct FaultedReading {
    SensorFrame frame;
    WheelCommand command;
};

/// Combined sensor and actuator fault application for one robot and cycle.
FaultedReading apply_faults(SensorFrame frame, WheelCommand command, FaultType fault, Rng& rng);

/// Per-cycle record of one trial. Arrays are cycle-major: entry (t, r) lives
/// at t * robots + r.
struct TrialLog {
    ArenaSpec arena;
    RobotBody body;
    int robots = 0;
    int cycles = 0;
    std::vector<Pose> poses;            // after the cycle's motion
    std::vector<SensorFrame> frames;    // as perceived by the controller
    std::vector<WheelCommand> commands; // after actuator faults
    std::vector<double> linear_velocity;
    std::vector<double> angular_velocity;

    std::size_t at(int t, int r) const { return static_cast<std::size_t>(t) * robots + r; }
    std::span<const Pose> poses_at(int t) const
    {
        return std::span<const Pose>(poses).subspan(static_cast<std::size_t>(t) * robots, robots);
    }
};

struct TrialOptions {
    double duration = 400.0; // seconds
};

int cycles_for(double duration, double dt);

/// Runs one trial; a pure function of its arguments.
TrialLog run_trial(const EnvironmentSpec& env, const Genome& genome, const FaultAssignment& faults,
                   std::uint64_t seed, const TrialOptions& options = {});

/// Debug export: cycle,robot,x,y,heading,vl,vr
void write_trial_csv(std::ostream& os, const TrialLog& log);

} // namespace swarmqd
