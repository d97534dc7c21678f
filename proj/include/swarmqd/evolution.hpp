#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swarmqd/archive.hpp"
#include "swarmqd/descriptors.hpp"
#include "swarmqd/environment.hpp"
#include "swarmqd/genome.hpp"
#include "swarmqd/rng.hpp"
#include "swarmqd/sim.hpp"
#include "swarmqd/tasks.hpp"

namespace swarmqd {

struct EvolutionConfig {
    TaskKind task = TaskKind::Aggregation;
    DescriptorKind descriptor = DescriptorKind::Qed;
    std::size_t initial_population = 200;
    std::size_t generations = 1000;
    std::size_t batch_size = 20; // evaluations per generation
    std::size_t trials = 5;      // per evaluation
    double trial_duration = 400.0;
    std::uint64_t seed = 1;
    MutationParams mutation;
    int threads = 1; // does not affect results

    static EvolutionConfig desk();
    /// 2000 initial genomes, 30000 x 80 evaluations, 50 trials.
    static EvolutionConfig paper();

    /// Throws std::invalid_argument on zero counts or bad durations.
    void validate() const;
};

/// Each attribute drawn uniformly from its four levels.
EnvironmentSpec generate_environment(Rng& rng);

struct Evaluation {
    double performance = 0.0;
    std::vector<double> descriptor; // empty when the evaluation failed
    bool failed = false;
    std::string error;
};

/// Scores one genome. Implementations must be safe to call concurrently.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual Evaluation evaluate(const Genome& genome, const EnvironmentSpec& env,
                                std::span<const std::uint64_t> seeds) const = 0;
};

/// Runs real trials. The descriptor is the behavioural descriptor of the
/// trials, or the environment levels for QED. A placement failure scores 0;
/// for QED the environment descriptor is still reported.
class SwarmEvaluator : public Evaluator {
public:
    SwarmEvaluator(TaskKind task, DescriptorKind descriptor, TrialOptions options = {});
    Evaluation evaluate(const Genome& genome, const EnvironmentSpec& env,
                        std::span<const std::uint64_t> seeds) const override;

private:
    TaskKind task_;
    DescriptorKind descriptor_;
    TrialOptions options_;
};

/// Maps descriptors to archive keys.
class CellMapper {
public:
    static CellMapper grid(int dims, int bins);
    static CellMapper cvt(Centroids centroids);
    static CellMapper environment();

    std::size_t capacity() const;
    std::size_t dimension() const;
    std::uint32_t key(std::span<const double> descriptor) const;
    const Centroids* centroids() const { return centroids_ ? &*centroids_ : nullptr; }

private:
    enum class Mode { Grid, Cvt, Environment };
    CellMapper(Mode mode) : mode_(mode) {}
    Mode mode_;
    std::optional<GridBinning> grid_;
    std::optional<Centroids> centroids_;
};

struct GenerationStats {
    std::size_t generation = 0; // 0 is the initial population
    std::size_t coverage = 0;
    double best = 0.0;
    double mean = 0.0;
    std::size_t evaluations = 0; // cumulative
    std::size_t failures = 0;    // cumulative
};

/// One row per evaluation. key is absent for failed behavioural evaluations.
struct InsertionEvent {
    std::size_t generation = 0;
    std::size_t evaluation = 0;
    std::optional<std::uint32_t> key;
    double performance = 0.0;
    bool accepted = false;
    double cell_performance = 0.0; // incumbent after the attempt
};

struct EvolutionResult {
    Archive archive{0};
    std::vector<GenerationStats> stats;
    std::vector<InsertionEvent> events;
};

/// Seeds of the trials of evaluation number `evaluation`.
std::vector<std::uint64_t> trial_seeds(std::uint64_t master, std::size_t evaluation, std::size_t trials);

using GenerationCallback = std::function<void(const GenerationStats&)>;

/// MAP-Elites / QED loop. Offspring of a generation are drawn from the
/// archive as it stood at the start of that generation, evaluated
/// concurrently and inserted in evaluation order.
EvolutionResult evolve(const EvolutionConfig& config, const Evaluator& evaluator, const CellMapper& mapper,
                       const GenerationCallback& on_generation = {});

} // namespace swarmqd
