#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "swarmqd/archive.hpp"
#include "swarmqd/descriptors.hpp"
#include "swarmqd/rng.hpp"
#include "swarmqd/sim.hpp"
#include "swarmqd/tasks.hpp"

namespace swarmqd {

struct CombinedFault {
    std::size_t id = 0;
    FaultAssignment faults;
};

/// Each robot's fault drawn uniformly from the eight types (NONE included).
CombinedFault sample_combined_fault(Rng& rng, int robots, std::size_t id = 0);

/// Fault `index` of replicate `replicate`; independent of task and algorithm.
CombinedFault experiment_fault(std::uint64_t master, std::size_t replicate, std::size_t index, int robots);

/// Trial seeds shared by the normal re-evaluation and every faulty
/// evaluation of a replicate.
std::vector<std::uint64_t> recovery_seeds(std::uint64_t master, std::size_t replicate, std::size_t trials);

/// Mean over the 64 states of the total variation distance between the
/// conditional action distributions. Both inputs must have 1024 entries.
double spirit_distance(std::span<const double> a, std::span<const double> b);

/// Mean pairwise spirit_distance; 0 for fewer than two descriptors.
double mean_pairwise_distance(std::span<const std::vector<double>> descriptors);

/// (value - reference) / reference. Throws std::domain_error if reference is 0.
double proportional_change(double value, double reference);

struct ReplayResult {
    double performance = 0.0;
    SpiritDescriptor spirit{};
};

/// Mean fitness and the SPIRIT descriptor of a genome over `seeds`.
ReplayResult replay(const Genome& genome, TaskKind task, const EnvironmentSpec& env, const FaultAssignment& faults,
                    std::span<const std::uint64_t> seeds, const TrialOptions& options = {});

struct CellScore {
    std::uint32_t key = 0;
    double performance = 0.0;
};

/// Per-cell performance in ascending key order.
struct ArchiveScores {
    std::vector<CellScore> cells;

    /// Highest performance; ties go to the lowest key. Throws on empty.
    CellScore best() const;
    double mean() const;
    double performance_of(std::uint32_t key) const;
};

/// Scores every elite in the normal environment under `faults` (a fault
/// vector sized for the normal swarm). Throws std::invalid_argument on an
/// empty archive.
ArchiveScores score_archive(const Archive& archive, TaskKind task, const FaultAssignment& faults,
                            std::span<const std::uint64_t> seeds, int threads, const TrialOptions& options = {});

struct ArchiveReplay {
    ArchiveScores scores;
    std::vector<SpiritDescriptor> spirit; // parallel to scores.cells
};

/// Fault-free normal-environment replay of every elite.
ArchiveReplay replay_archive(const Archive& archive, TaskKind task, std::span<const std::uint64_t> seeds,
                             int threads, const TrialOptions& options = {});

/// Best elite under the fault.
CellScore recover(const Archive& archive, TaskKind task, const CombinedFault& fault,
                  std::span<const std::uint64_t> seeds, int threads, const TrialOptions& options = {});

/// Normal-environment behaviour of elites, replayed on demand and memoised.
class NormalBehaviour {
public:
    NormalBehaviour(const Archive& archive, TaskKind task, std::vector<std::uint64_t> seeds,
                    TrialOptions options = {});
    const SpiritDescriptor& spirit(std::uint32_t key);

private:
    const Archive& archive_;
    TaskKind task_;
    std::vector<std::uint64_t> seeds_;
    TrialOptions options_;
    std::map<std::uint32_t, SpiritDescriptor> cache_;
};

struct RecoveryRecord {
    TaskKind task = TaskKind::Aggregation;
    CombinedFault fault;
    std::uint32_t normal_best_key = 0;
    double normal_best_perf = 0.0;      // f_normal(c*)
    double transferred_perf = 0.0;      // f_faulty(c*)
    std::uint32_t best_key = 0;         // recovering elite
    double recovered_perf = 0.0;        // max over the archive under the fault
    double impact = 0.0;                // relative to f_normal(c*)
    double resilience = 0.0;
    double distance = 0.0;              // SPIRIT distance to the normal-best
};

/// Impact, resilience and distance for one fault. `normal` must be the
/// normal-environment scores of the same archive under the same seeds.
RecoveryRecord assess_fault(const Archive& archive, TaskKind task, const ArchiveScores& normal,
                            const CombinedFault& fault, std::span<const std::uint64_t> seeds, int threads,
                            NormalBehaviour& behaviour, const TrialOptions& options = {});

struct Projection {
    std::size_t coverage = 0;
    double diversity = 0.0;
    /// centroid id -> (elite key, performance) of the representative
    std::map<std::uint32_t, CellScore> cells;
};

/// Bins each elite's normal-environment SPIRIT descriptor onto the
/// centroids, keeping the best performer per centroid. Diversity is the
/// mean pairwise distance between the filled centroids.
Projection project_archive(std::span<const CellScore> scores, std::span<const SpiritDescriptor> descriptors,
                           const Centroids& centroids);

} // namespace swarmqd
