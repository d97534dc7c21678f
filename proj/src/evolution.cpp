#include "swarmqd/evolution.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "swarmqd/parallel.hpp"

namespace swarmqd {

EvolutionConfig EvolutionConfig::desk()
{
    return EvolutionConfig{};
}

EvolutionConfig EvolutionConfig::paper()
{
    EvolutionConfig c;
    c.initial_population = 2000;
    c.generations = 30000;
    c.batch_size = 80;
    c.trials = 50;
    return c;
}

void EvolutionConfig::validate() const
{
    if (initial_population == 0)
        throw std::invalid_argument("initial_population must be at least 1");
    if (generations == 0)
        throw std::invalid_argument("generations must be at least 1");
    if (batch_size == 0)
        throw std::invalid_argument("batch_size must be at least 1");
    if (trials == 0)
        throw std::invalid_argument("trials must be at least 1");
    if (!(trial_duration > 0.0))
        throw std::invalid_argument("trial_duration must be positive");
    if (threads < 1)
        throw std::invalid_argument("threads must be at least 1");
    mutation.validate();
}

EnvironmentSpec generate_environment(Rng& rng)
{
    EnvDescriptor levels;
    for (int& l : levels)
        l = static_cast<int>(rng.below(kLevelsPerAttribute));
    return decode(levels);
}

// ---------------------------------------------------------------------------

SwarmEvaluator::SwarmEvaluator(TaskKind task, DescriptorKind descriptor, TrialOptions options)
    : task_(task), descriptor_(descriptor), options_(options)
{
}

Evaluation SwarmEvaluator::evaluate(const Genome& genome, const EnvironmentSpec& env,
                                    std::span<const std::uint64_t> seeds) const
{
    if (seeds.empty())
        throw std::invalid_argument("evaluation needs at least one trial seed");
    Evaluation out;
    const FaultAssignment faults = no_faults(env.swarm_size);
    const double n = static_cast<double>(seeds.size());

    HbdDescriptor hbd{};
    std::vector<std::vector<double>> sdbc;
    SpiritCounter spirit;
    double sum = 0.0;
    try {
        for (std::uint64_t seed : seeds) {
            const TrialLog log = run_trial(env, genome, faults, seed, options_);
            sum += fitness(task_, log);
            switch (descriptor_) {
            case DescriptorKind::Hbd: {
                const HbdDescriptor f = hbd_trial_features(log);
                for (int k = 0; k < 3; ++k)
                    hbd[k] += f[k];
                break;
            }
            case DescriptorKind::Sdbc: {
                const SdbcDescriptor v = sdbc_trial_vector(log);
                sdbc.emplace_back(v.begin(), v.end());
                break;
            }
            case DescriptorKind::Spirit:
                spirit.add(log);
                break;
            case DescriptorKind::Qed:
                break;
            }
        }
    } catch (const PlacementError& e) {
        out.failed = true;
        out.error = e.what();
        out.performance = 0.0;
        if (descriptor_ == DescriptorKind::Qed) {
            const EnvDescriptor levels = env_descriptor(env);
            out.descriptor.assign(levels.begin(), levels.end());
        }
        return out;
    }
    out.performance = sum / n;

    switch (descriptor_) {
    case DescriptorKind::Hbd:
        for (double v : hbd)
            out.descriptor.push_back(v / n);
        break;
    case DescriptorKind::Sdbc: {
        const std::vector<double> median = geometric_median(sdbc);
        for (double v : median)
            out.descriptor.push_back(std::clamp(v, 0.0, 1.0));
        break;
    }
    case DescriptorKind::Spirit: {
        const SpiritDescriptor d = spirit.descriptor();
        out.descriptor.assign(d.begin(), d.end());
        break;
    }
    case DescriptorKind::Qed: {
        const EnvDescriptor levels = env_descriptor(env);
        out.descriptor.assign(levels.begin(), levels.end());
        break;
    }
    }
    return out;
}

// ---------------------------------------------------------------------------

CellMapper CellMapper::grid(int dims, int bins)
{
    CellMapper m(Mode::Grid);
    m.grid_.emplace(dims, bins);
    return m;
}

CellMapper CellMapper::cvt(Centroids centroids)
{
    if (centroids.size() == 0)
        throw std::invalid_argument("CVT mapper needs centroids");
    CellMapper m(Mode::Cvt);
    m.centroids_ = std::move(centroids);
    return m;
}

CellMapper CellMapper::environment()
{
    return CellMapper(Mode::Environment);
}

std::size_t CellMapper::capacity() const
{
    switch (mode_) {
    case Mode::Grid:
        return grid_->capacity();
    case Mode::Cvt:
        return centroids_->size();
    case Mode::Environment:
        break;
    }
    return kEnvironmentCells;
}

std::size_t CellMapper::dimension() const
{
    switch (mode_) {
    case Mode::Grid:
        return static_cast<std::size_t>(grid_->dims());
    case Mode::Cvt:
        return static_cast<std::size_t>(centroids_->dim);
    case Mode::Environment:
        break;
    }
    return kEnvironmentAttributes;
}

std::uint32_t CellMapper::key(std::span<const double> descriptor) const
{
    switch (mode_) {
    case Mode::Grid:
        return grid_->key(descriptor);
    case Mode::Cvt:
        return nearest_centroid(descriptor, *centroids_);
    case Mode::Environment:
        break;
    }
    if (descriptor.size() != kEnvironmentAttributes)
        throw std::invalid_argument("environment descriptor must have 6 entries");
    EnvDescriptor levels;
    for (int j = 0; j < kEnvironmentAttributes; ++j) {
        const double v = descriptor[j];
        if (!(v >= 0.0 && v < kLevelsPerAttribute) || v != static_cast<int>(v))
            throw std::invalid_argument("environment descriptor entry is not a level index");
        levels[j] = static_cast<int>(v);
    }
    return env_index(levels);
}

// ---------------------------------------------------------------------------

std::vector<std::uint64_t> trial_seeds(std::uint64_t master, std::size_t evaluation, std::size_t trials)
{
    const std::uint64_t base = derive_seed(master, "trial", evaluation);
    std::vector<std::uint64_t> seeds(trials);
    for (std::size_t j = 0; j < trials; ++j)
        seeds[j] = derive_seed(base, "trial", j);
    return seeds;
}

namespace {

struct Offspring {
    Genome genome;
    EnvironmentSpec env;
    std::vector<std::uint64_t> seeds;
};

GenerationStats snapshot(const Archive& archive, std::size_t generation, std::size_t evaluations,
                         std::size_t failures)
{
    return GenerationStats{generation,      archive.coverage(), archive.best_performance(),
                           archive.mean_performance(), evaluations, failures};
}

} // namespace

EvolutionResult evolve(const EvolutionConfig& config, const Evaluator& evaluator, const CellMapper& mapper,
                       const GenerationCallback& on_generation)
{
    config.validate();
    EvolutionResult result;
    result.archive = Archive(mapper.capacity());
    Archive& archive = result.archive;
    const bool qed = config.descriptor == DescriptorKind::Qed;
    std::size_t counter = 0;
    std::size_t failures = 0;

    auto run_batch = [&](std::size_t generation, std::vector<Offspring>& batch) {
        std::vector<Evaluation> evaluations(batch.size());
        parallel_for(batch.size(), config.threads, [&](std::size_t i) {
            evaluations[i] = evaluator.evaluate(batch[i].genome, batch[i].env, batch[i].seeds);
        });
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Evaluation& ev = evaluations[i];
            InsertionEvent event;
            event.generation = generation;
            event.evaluation = counter;
            event.performance = ev.performance;
            if (ev.failed)
                ++failures;
            if (!ev.descriptor.empty() && (qed || !ev.failed)) {
                if (ev.descriptor.size() != mapper.dimension())
                    throw std::logic_error("descriptor dimension " + std::to_string(ev.descriptor.size()) +
                                           " does not match the archive (" + std::to_string(mapper.dimension()) +
                                           ")");
                const std::uint32_t key = mapper.key(ev.descriptor);
                event.key = key;
                event.accepted = archive.try_insert(
                    key, ArchiveCell{std::move(batch[i].genome), ev.performance, std::move(ev.descriptor),
                                     batch[i].env, std::move(batch[i].seeds)});
                event.cell_performance = archive.at(key).performance;
            }
            result.events.push_back(event);
            ++counter;
        }
        result.stats.push_back(snapshot(archive, generation, counter, failures));
        if (on_generation)
            on_generation(result.stats.back());
    };

    auto make_offspring = [&](std::size_t evaluation, Genome genome) {
        EnvironmentSpec env = normal_environment();
        if (qed) {
            Rng env_rng(derive_seed(config.seed, "environment", evaluation));
            env = generate_environment(env_rng);
        }
        return Offspring{std::move(genome), env, trial_seeds(config.seed, evaluation, config.trials)};
    };

    {
        std::vector<Offspring> batch;
        batch.reserve(config.initial_population);
        for (std::size_t i = 0; i < config.initial_population; ++i) {
            const std::size_t e = counter + i;
            Rng rng(derive_seed(config.seed, "init", e));
            batch.push_back(make_offspring(e, random_genome(rng)));
        }
        run_batch(0, batch);
    }

    for (std::size_t g = 1; g <= config.generations; ++g) {
        std::vector<Offspring> batch;
        batch.reserve(config.batch_size);
        const std::vector<std::uint32_t>& pool = archive.occupied();
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const std::size_t e = counter + b;
            Genome child;
            if (pool.empty()) {
                // every earlier evaluation failed: start over from scratch
                Rng rng(derive_seed(config.seed, "init", e));
                child = random_genome(rng);
            } else {
                Rng select(derive_seed(config.seed, "select", e));
                const std::uint32_t parent = pool[select.below(pool.size())];
                Rng rng(derive_seed(config.seed, "mutate", e));
                child = mutate(archive.at(parent).genome, config.mutation, rng);
            }
            batch.push_back(make_offspring(e, std::move(child)));
        }
        run_batch(g, batch);
    }
    return result;
}

} // namespace swarmqd
