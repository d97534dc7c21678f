#include "swarmqd/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace swarmqd {

std::string_view descriptor_name(DescriptorKind kind)
{
    switch (kind) {
    case DescriptorKind::Hbd: return "hbd";
    case DescriptorKind::Sdbc: return "sdbc";
    case DescriptorKind::Spirit: return "spirit";
    case DescriptorKind::Qed: return "qed";
    }
    return "?";
}

DescriptorKind parse_descriptor(std::string_view name)
{
    for (DescriptorKind k : {DescriptorKind::Hbd, DescriptorKind::Sdbc, DescriptorKind::Spirit, DescriptorKind::Qed})
        if (descriptor_name(k) == name)
            return k;
    throw std::invalid_argument("unknown descriptor '" + std::string(name) + "'");
}

int descriptor_dimension(DescriptorKind kind)
{
    switch (kind) {
    case DescriptorKind::Hbd: return 3;
    case DescriptorKind::Sdbc: return 10;
    case DescriptorKind::Spirit: return kSpiritDimension;
    case DescriptorKind::Qed: return kEnvironmentAttributes;
    }
    return 0;
}

// ---------------------------------------------------------------------------

HbdDescriptor hbd_trial_features(const TrialLog& log)
{
    const int per_side = static_cast<int>(std::ceil(log.arena.side / kHbdCellSide - 1e-9));
    const int cells = per_side * per_side;
    std::vector<std::uint32_t> visits(cells, 0);
    const double centre = log.arena.side / 2.0;
    double distance = 0.0;
    for (const Pose& p : log.poses) {
        const int cx = std::clamp(static_cast<int>(p.x / kHbdCellSide), 0, per_side - 1);
        const int cy = std::clamp(static_cast<int>(p.y / kHbdCellSide), 0, per_side - 1);
        ++visits[cy * per_side + cx];
        distance += std::hypot(p.x - centre, p.y - centre);
    }
    const double samples = static_cast<double>(log.poses.size());
    if (samples == 0.0)
        return {0.0, 0.0, 0.0};

    double entropy = 0.0;
    int visited = 0;
    for (std::uint32_t v : visits) {
        if (v == 0)
            continue;
        ++visited;
        const double q = v / samples;
        entropy -= q * std::log(q);
    }
    HbdDescriptor f;
    f[0] = std::clamp(entropy / std::log(static_cast<double>(cells)), 0.0, 1.0);
    f[1] = std::clamp(distance / samples / (log.arena.diagonal() / 2.0), 0.0, 1.0);
    f[2] = static_cast<double>(visited) / cells;
    return f;
}

HbdDescriptor compute_hbd(std::span<const TrialLog> logs)
{
    if (logs.empty())
        throw std::invalid_argument("compute_hbd: no trials");
    HbdDescriptor sum{};
    for (const TrialLog& log : logs) {
        const HbdDescriptor f = hbd_trial_features(log);
        for (int k = 0; k < 3; ++k)
            sum[k] += f[k];
    }
    for (double& v : sum)
        v /= static_cast<double>(logs.size());
    return sum;
}

// ---------------------------------------------------------------------------

SdbcDescriptor sdbc_trial_vector(const TrialLog& log)
{
    if (log.robots < 2)
        throw std::invalid_argument("SDBC needs at least two robots");
    const double m = log.arena.diagonal();
    const double side = log.arena.side;
    const int n = log.robots;
    // Welford running moments; constant signals give exactly zero spread
    std::array<double, 5> mean{};
    std::array<double, 5> m2{};
    for (int t = 0; t < log.cycles; ++t) {
        const auto poses = log.poses_at(t);
        std::array<double, 5> f{};
        double pair_total = 0.0;
        for (int i = 0; i < n; ++i) {
            const std::size_t k = log.at(t, i);
            f[0] += std::abs(log.linear_velocity[k]) / log.body.max_linear_speed;
            f[1] += std::abs(log.angular_velocity[k]) / log.body.max_angular_speed;
            const Pose& p = poses[i];
            f[2] += std::min({p.x, p.y, side - p.x, side - p.y}) / m;
            double nearest = std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) {
                if (j == i)
                    continue;
                const double d = std::hypot(p.x - poses[j].x, p.y - poses[j].y);
                nearest = std::min(nearest, d);
                if (j > i)
                    pair_total += d;
            }
            f[4] += nearest / m;
        }
        f[0] /= n;
        f[1] /= n;
        f[2] /= n;
        f[3] = pair_total / (0.5 * n * (n - 1)) / m;
        f[4] /= n;
        for (int q = 0; q < 5; ++q) {
            const double delta = f[q] - mean[q];
            mean[q] += delta / (t + 1);
            m2[q] += delta * (f[q] - mean[q]);
        }
    }
    SdbcDescriptor out{};
    if (log.cycles == 0)
        return out;
    for (int q = 0; q < 5; ++q) {
        out[2 * q] = std::clamp(mean[q], 0.0, 1.0);
        out[2 * q + 1] = std::clamp(std::sqrt(std::max(0.0, m2[q] / log.cycles)), 0.0, 1.0);
    }
    return out;
}

std::vector<double> geometric_median(std::span<const std::vector<double>> points, const WeiszfeldOptions& options)
{
    if (points.empty())
        throw std::invalid_argument("geometric_median: no points");
    const std::size_t dim = points.front().size();
    std::vector<double> y(dim, 0.0);
    for (const auto& p : points)
        for (std::size_t d = 0; d < dim; ++d)
            y[d] += p[d] / static_cast<double>(points.size());
    if (points.size() == 1)
        return points.front();

    auto distance = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t d = 0; d < dim; ++d)
            s += (a[d] - b[d]) * (a[d] - b[d]);
        return std::sqrt(s);
    };
    constexpr double kCoincide = 1e-12;

    std::vector<double> next(dim);
    for (int it = 0; it < options.max_iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        double weight_sum = 0.0;
        std::vector<double> pull(dim, 0.0); // sum of unit vectors towards the points
        int coincident = 0;
        for (const auto& p : points) {
            const double d = distance(p, y);
            if (d < kCoincide) {
                ++coincident;
                continue;
            }
            weight_sum += 1.0 / d;
            for (std::size_t k = 0; k < dim; ++k) {
                next[k] += p[k] / d;
                pull[k] += (p[k] - y[k]) / d;
            }
        }
        if (coincident > 0) {
            const double strength = std::sqrt(std::inner_product(pull.begin(), pull.end(), pull.begin(), 0.0));
            if (strength <= coincident)
                return y; // the data point itself is optimal
            for (std::size_t k = 0; k < dim; ++k)
                y[k] += 1e-7 * pull[k] / strength;
            continue;
        }
        for (double& v : next)
            v /= weight_sum;
        const double shift = distance(next, y);
        y.swap(next);
        if (shift < options.tolerance)
            break;
    }
    return y;
}

SdbcDescriptor compute_sdbc(std::span<const TrialLog> logs)
{
    if (logs.empty())
        throw std::invalid_argument("compute_sdbc: no trials");
    std::vector<std::vector<double>> vectors;
    vectors.reserve(logs.size());
    for (const TrialLog& log : logs) {
        const SdbcDescriptor v = sdbc_trial_vector(log);
        vectors.emplace_back(v.begin(), v.end());
    }
    const std::vector<double> median = geometric_median(vectors);
    SdbcDescriptor out;
    for (int k = 0; k < 10; ++k)
        out[k] = std::clamp(median[k], 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------

int spirit_state(const SensorFrame& f)
{
    const auto& p = f.proximity;
    const auto& r = f.rab;
    int s = 0;
    if (p[0] > 0.5 || p[1] > 0.5)
        s |= 1;
    if (p[2] > 0.5)
        s |= 2;
    if (p[3] > 0.5 || p[4] > 0.5)
        s |= 4;
    if (p[5] > 0.5 || p[6] > 0.5)
        s |= 8;
    if (r[7] < 0.5 || r[0] < 0.5 || r[1] < 0.5 || r[2] < 0.5)
        s |= 16;
    if (r[3] < 0.5 || r[4] < 0.5 || r[5] < 0.5 || r[6] < 0.5)
        s |= 32;
    return s;
}

int spirit_action(const WheelCommand& c, double max_speed)
{
    auto bin = [&](double v) {
        const int b = static_cast<int>(std::floor((v + max_speed) / (2.0 * max_speed) * 4.0));
        return std::clamp(b, 0, 3);
    };
    return 4 * bin(c.left) + bin(c.right);
}

void SpiritCounter::add(const TrialLog& log)
{
    for (std::size_t k = 0; k < log.frames.size(); ++k)
        add(spirit_state(log.frames[k]), spirit_action(log.commands[k], log.body.max_linear_speed));
}

SpiritDescriptor SpiritCounter::descriptor() const
{
    SpiritDescriptor d;
    for (int s = 0; s < kSpiritStates; ++s) {
        const auto* row = &counts_[s * kSpiritActions];
        const std::uint64_t total = std::accumulate(row, row + kSpiritActions, std::uint64_t{0});
        for (int a = 0; a < kSpiritActions; ++a)
            d[s * kSpiritActions + a] =
                total == 0 ? 1.0 / kSpiritActions : static_cast<double>(row[a]) / static_cast<double>(total);
    }
    return d;
}

SpiritDescriptor compute_spirit(std::span<const TrialLog> logs)
{
    SpiritCounter counter;
    for (const TrialLog& log : logs)
        counter.add(log);
    return counter.descriptor();
}

// ---------------------------------------------------------------------------

namespace {

template <class Levels, class T>
int level_of(const Levels& levels, T value, const char* attribute)
{
    for (int k = 0; k < kLevelsPerAttribute; ++k)
        if (std::abs(static_cast<double>(levels[k]) - static_cast<double>(value)) <=
            1e-9 * std::max(1.0, std::abs(static_cast<double>(value))))
            return k;
    throw std::invalid_argument(std::string("environment attribute '") + attribute + "' = " + std::to_string(value) +
                                " is not a perturbation level");
}

} // namespace

EnvDescriptor env_descriptor(const EnvironmentSpec& s)
{
    return {level_of(kSpeedLevels, s.max_linear_speed, "max_linear_speed"),
            level_of(kSwarmSizeLevels, s.swarm_size, "swarm_size"),
            level_of(kArenaAreaLevels, s.arena_area, "arena_area"),
            level_of(kObstacleLevels, s.obstacle_count, "obstacle_count"),
            level_of(kRabRangeLevels, s.rab_range, "rab_range"),
            level_of(kProximityRangeLevels, s.proximity_range, "proximity_range")};
}

EnvironmentSpec decode(const EnvDescriptor& levels)
{
    for (int v : levels)
        if (v < 0 || v >= kLevelsPerAttribute)
            throw std::invalid_argument("environment level outside 0..3");
    EnvironmentSpec s;
    s.max_linear_speed = kSpeedLevels[levels[0]];
    s.swarm_size = kSwarmSizeLevels[levels[1]];
    s.arena_area = kArenaAreaLevels[levels[2]];
    s.obstacle_count = kObstacleLevels[levels[3]];
    s.rab_range = kRabRangeLevels[levels[4]];
    s.proximity_range = kProximityRangeLevels[levels[5]];
    return s;
}

std::uint32_t env_index(const EnvDescriptor& levels)
{
    std::uint32_t index = 0;
    for (int j = kEnvironmentAttributes - 1; j >= 0; --j)
        index = index * kLevelsPerAttribute + static_cast<std::uint32_t>(levels[j]);
    return index;
}

EnvDescriptor env_levels(std::uint32_t index)
{
    if (index >= static_cast<std::uint32_t>(kEnvironmentCells))
        throw std::invalid_argument("environment index out of range");
    EnvDescriptor levels;
    for (int j = 0; j < kEnvironmentAttributes; ++j) {
        levels[j] = static_cast<int>(index % kLevelsPerAttribute);
        index /= kLevelsPerAttribute;
    }
    return levels;
}

void write_descriptor_row(std::ostream& os, std::string_view kind, std::span<const double> values)
{
    os << kind << ',' << values.size();
    char buf[32];
    for (double v : values) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        os << buf;
    }
    os << '\n';
}

} // namespace swarmqd
