#include "swarmqd/genome.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace swarmqd {

Genome::Genome(int hidden, std::vector<Connection> connections)
    : hidden_(hidden), connections_(std::move(connections))
{
    validate();
    for (const Connection& c : connections_)
        driven_ |= 1u << (c.target - kInputCount);
}

bool Genome::has_connection(int source, int target) const
{
    return std::any_of(connections_.begin(), connections_.end(),
                       [&](const Connection& c) { return c.source == source && c.target == target; });
}

void Genome::validate() const
{
    if (hidden_ < 0 || hidden_ > kMaxHidden)
        throw std::invalid_argument("genome: hidden node count " + std::to_string(hidden_) + " outside [0, 20]");
    if (connections_.size() > static_cast<std::size_t>(kMaxConnections))
        throw std::invalid_argument("genome: more than 40 connections");
    for (std::size_t i = 0; i < connections_.size(); ++i) {
        const Connection& c = connections_[i];
        if (!is_legal_source(c.source) || !is_legal_target(c.target))
            throw std::invalid_argument("genome: illegal connection " + std::to_string(c.source) + "->" +
                                        std::to_string(c.target));
        if (!(c.weight >= kWeightMin && c.weight <= kWeightMax))
            throw std::invalid_argument("genome: weight outside [-2, 2]");
        for (std::size_t j = 0; j < i; ++j)
            if (connections_[j].source == c.source && connections_[j].target == c.target)
                throw std::invalid_argument("genome: duplicate connection");
    }
}

void MutationParams::validate() const
{
    for (double r : {node_add, node_delete, connection_add, connection_delete, connection_modify, weight})
        if (!(r >= 0.0 && r <= 1.0))
            throw std::invalid_argument("mutation rate outside [0, 1]");
    if (!(eta_m > 0.0))
        throw std::invalid_argument("polynomial mutation index must be positive");
}

namespace {

int source_count(int hidden) { return kInputCount + kOutputCount + hidden; }
int target_count(int hidden) { return kOutputCount + hidden; }

// All (source, target) pairs not yet used, in lexicographic order.
std::vector<std::pair<int, int>> free_pairs(int hidden, const std::vector<Connection>& used)
{
    std::vector<std::pair<int, int>> pairs;
    const int nodes = source_count(hidden);
    for (int s = 0; s < nodes; ++s)
        for (int t = kInputCount; t < nodes; ++t) {
            bool taken = std::any_of(used.begin(), used.end(),
                                     [&](const Connection& c) { return c.source == s && c.target == t; });
            if (!taken)
                pairs.emplace_back(s, t);
        }
    return pairs;
}

bool contains(const std::vector<Connection>& cs, int s, int t)
{
    return std::any_of(cs.begin(), cs.end(), [&](const Connection& c) { return c.source == s && c.target == t; });
}

} // namespace

double activation(double x)
{
    // tanh through a single exp; absolute error stays below 1e-15
    if (x > 19.0)
        return 1.0;
    if (x < -19.0)
        return -1.0;
    const double e = std::exp(2.0 * x);
    return (e - 1.0) / (e + 1.0);
}

Genome random_genome(Rng& rng)
{
    const int hidden = static_cast<int>(rng.below(kMaxHidden + 1));
    const int possible = source_count(hidden) * target_count(hidden);
    const int count = static_cast<int>(rng.below(static_cast<std::size_t>(std::min(kMaxConnections, possible)) + 1));

    std::vector<Connection> connections;
    connections.reserve(count);
    while (static_cast<int>(connections.size()) < count) {
        const int s = static_cast<int>(rng.below(source_count(hidden)));
        const int t = kInputCount + static_cast<int>(rng.below(target_count(hidden)));
        if (contains(connections, s, t))
            continue;
        connections.push_back({s, t, rng.uniform(kWeightMin, kWeightMax)});
    }
    return Genome(hidden, std::move(connections));
}

double polynomial_mutation(double x, double lo, double hi, double eta, double u)
{
    const double span = hi - lo;
    const double delta1 = (x - lo) / span;
    const double delta2 = (hi - x) / span;
    const double power = 1.0 / (eta + 1.0);
    double deltaq;
    if (u <= 0.5) {
        const double xy = 1.0 - delta1;
        const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(xy, eta + 1.0);
        deltaq = std::pow(val, power) - 1.0;
    } else {
        const double xy = 1.0 - delta2;
        const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(xy, eta + 1.0);
        deltaq = 1.0 - std::pow(val, power);
    }
    return std::clamp(x + deltaq * span, lo, hi);
}

Genome mutate(const Genome& parent, const MutationParams& params, Rng& rng)
{
    int hidden = parent.hidden_count();
    std::vector<Connection> cs = parent.connections();

    // Node addition splits a random connection s->t into s->new (old weight)
    // and new->t (fresh weight). Without a connection to split, or at the
    // connection cap, the new node starts unconnected.
    if (rng.bernoulli(params.node_add) && hidden < kMaxHidden) {
        const int fresh = kInputCount + kOutputCount + hidden;
        ++hidden;
        if (!cs.empty() && cs.size() < static_cast<std::size_t>(kMaxConnections)) {
            Connection& split = cs[rng.below(cs.size())];
            const int target = split.target;
            split.target = fresh;
            cs.push_back({fresh, target, rng.uniform(kWeightMin, kWeightMax)});
        }
    }

    if (rng.bernoulli(params.node_delete) && hidden > 0) {
        const int victim = kInputCount + kOutputCount + static_cast<int>(rng.below(hidden));
        std::erase_if(cs, [&](const Connection& c) { return c.source == victim || c.target == victim; });
        for (Connection& c : cs) {
            if (c.source > victim)
                --c.source;
            if (c.target > victim)
                --c.target;
        }
        --hidden;
    }

    if (rng.bernoulli(params.connection_add) && cs.size() < static_cast<std::size_t>(kMaxConnections)) {
        const auto pairs = free_pairs(hidden, cs);
        if (!pairs.empty()) {
            const auto [s, t] = pairs[rng.below(pairs.size())];
            cs.push_back({s, t, rng.uniform(kWeightMin, kWeightMax)});
        }
    }

    if (rng.bernoulli(params.connection_delete) && !cs.empty())
        cs.erase(cs.begin() + static_cast<std::ptrdiff_t>(rng.below(cs.size())));

    // Rewire one end of a random connection to another legal node.
    if (rng.bernoulli(params.connection_modify) && !cs.empty()) {
        Connection& c = cs[rng.below(cs.size())];
        const bool move_source = rng.bernoulli(0.5);
        std::vector<int> options;
        if (move_source) {
            for (int s = 0; s < source_count(hidden); ++s)
                if (s != c.source && !contains(cs, s, c.target))
                    options.push_back(s);
        } else {
            for (int t = kInputCount; t < source_count(hidden); ++t)
                if (t != c.target && !contains(cs, c.source, t))
                    options.push_back(t);
        }
        if (!options.empty()) {
            const int pick = options[rng.below(options.size())];
            (move_source ? c.source : c.target) = pick;
        }
    }

    for (Connection& c : cs)
        if (rng.bernoulli(params.weight))
            c.weight = polynomial_mutation(c.weight, kWeightMin, kWeightMax, params.eta_m, rng.uniform());

    return Genome(hidden, std::move(cs));
}

std::array<double, kOutputCount> forward(const Genome& genome, NetworkState& state,
                                         std::span<const double, kInputCount> inputs)
{
    auto& values = state.values;
    std::copy(inputs.begin(), inputs.end(), values.begin());

    std::array<double, kInputCount + kOutputCount + kMaxHidden> sums{};
    for (const Connection& c : genome.connections())
        sums[c.target] += c.weight * values[c.source];

    const int end = genome.node_count();
    const std::uint32_t driven = genome.driven_mask();
    for (int k = kInputCount; k < end; ++k)
        values[k] = (driven >> (k - kInputCount)) & 1u ? activation(sums[k]) : 0.0;
    return {values[kInputCount], values[kInputCount + 1]};
}

void write_genome(std::ostream& os, const Genome& genome)
{
    os << "hidden " << genome.hidden_count() << '\n';
    char buf[64];
    for (const Connection& c : genome.connections()) {
        std::snprintf(buf, sizeof buf, "%.17g", c.weight);
        os << c.source << ' ' << c.target << ' ' << buf << '\n';
    }
}

Genome read_genome(std::istream& is)
{
    int hidden = -1;
    std::vector<Connection> cs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        if (hidden < 0) {
            std::string word;
            if (!(ls >> word >> hidden) || word != "hidden" || hidden < 0)
                throw std::runtime_error("genome file: missing 'hidden <n>' header");
            continue;
        }
        Connection c;
        std::string w;
        if (!(ls >> c.source >> c.target >> w))
            throw std::runtime_error("genome file: malformed connection line '" + line + "'");
        auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), c.weight);
        if (ec != std::errc{} || ptr != w.data() + w.size())
            throw std::runtime_error("genome file: bad weight '" + w + "'");
        cs.push_back(c);
    }
    if (hidden < 0)
        throw std::runtime_error("genome file: missing 'hidden <n>' header");
    try {
        return Genome(hidden, std::move(cs));
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("genome file: ") + e.what());
    }
}

} // namespace swarmqd
