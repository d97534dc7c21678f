#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "swarmqd/rng.hpp"

namespace swarmqd {

// Node numbering: inputs [0, 16) = 7 proximity, 8 range-and-bearing, 1 bias;
// outputs 16 (left wheel) and 17 (right wheel); hidden nodes from 18 upwards.
inline constexpr int kProximityInputs = 7;
inline constexpr int kRabInputs = 8;
inline constexpr int kInputCount = kProximityInputs + kRabInputs + 1;
inline constexpr int kBiasInput = kInputCount - 1;
inline constexpr int kOutputCount = 2;
inline constexpr int kMaxHidden = 20;
inline constexpr int kMaxConnections = 40;
inline constexpr double kWeightMin = -2.0;
inline constexpr double kWeightMax = 2.0;

struct Connection {
    int source = 0;
    int target = 0;
    double weight = 0.0;

    friend bool operator==(const Connection&, const Connection&) = default;
};

/// Variable-topology recurrent controller. Any hidden/output node may feed any
/// hidden/output node (self loops included); inputs are sources only.
class Genome {
public:
    Genome() = default;
    /// Throws std::invalid_argument if the result would break an invariant.
    Genome(int hidden, std::vector<Connection> connections);

    int hidden_count() const { return hidden_; }
    int node_count() const { return kInputCount + kOutputCount + hidden_; }
    const std::vector<Connection>& connections() const { return connections_; }

    static constexpr int output_id(int k) { return kInputCount + k; }
    int hidden_id(int k) const { return kInputCount + kOutputCount + k; }

    bool is_legal_source(int id) const { return id >= 0 && id < node_count(); }
    bool is_legal_target(int id) const { return id >= kInputCount && id < node_count(); }
    bool has_connection(int source, int target) const;

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;

    /// Bit k set when non-input node kInputCount + k has an incoming connection.
    std::uint32_t driven_mask() const { return driven_; }

    friend bool operator==(const Genome&, const Genome&) = default;

private:
    int hidden_ = 0;
    std::vector<Connection> connections_;
    std::uint32_t driven_ = 0;
};

struct MutationParams {
    double node_add = 0.10;
    double node_delete = 0.10;
    double connection_add = 0.15;
    double connection_delete = 0.15;
    double connection_modify = 0.15;
    double weight = 0.05;
    double eta_m = 15.0;

    static MutationParams none()
    {
        return {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 15.0};
    }
    void validate() const;
};

Genome random_genome(Rng& rng);

/// Returns a mutated copy; the parent is untouched.
Genome mutate(const Genome& parent, const MutationParams& params, Rng& rng);

/// Bounded polynomial mutation of a single value with distribution index eta
/// and uniform draw u in [0,1). Result always stays within [lo, hi].
double polynomial_mutation(double x, double lo, double hi, double eta, double u);

/// Node values of a running network: slots [0, 16) hold the latest inputs,
/// the rest hold previous-cycle activations of output and hidden nodes.
struct NetworkState {
    std::array<double, kInputCount + kOutputCount + kMaxHidden> values{};

    double activation(int k) const { return values[kInputCount + k]; }
};

/// One synchronous update: each non-input node becomes tanh of its weighted
/// inputs, reading current values for input sources and previous-cycle
/// activations for everything else. Updates `state` and returns the outputs.
std::array<double, kOutputCount> forward(const Genome& genome, NetworkState& state,
                                         std::span<const double, kInputCount> inputs);

/// Neuron transfer function (tanh).
double activation(double x);

/// Sensor activation in [0,1] to network input in [-1,1].
constexpr double scale_input(double activation) { return 2.0 * activation - 1.0; }

// Text format: "hidden <n>" followed by one "source target weight" line per
// connection, weights printed with 17 significant digits. Lines starting
// with # are ignored on reading.
void write_genome(std::ostream& os, const Genome& genome);
Genome read_genome(std::istream& is);

} // namespace swarmqd
