#include "swarmqd/recovery.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "swarmqd/parallel.hpp"

namespace swarmqd {

CombinedFault sample_combined_fault(Rng& rng, int robots, std::size_t id)
{
    if (robots < 1)
        throw std::invalid_argument("combined fault needs at least one robot");
    CombinedFault f{id, {}};
    f.faults.reserve(static_cast<std::size_t>(robots));
    for (int r = 0; r < robots; ++r)
        f.faults.push_back(static_cast<FaultType>(rng.below(kFaultTypeCount)));
    return f;
}

CombinedFault experiment_fault(std::uint64_t master, std::size_t replicate, std::size_t index, int robots)
{
    Rng rng(derive_seed(derive_seed(master, "faults", replicate), "fault", index));
    return sample_combined_fault(rng, robots, index);
}

std::vector<std::uint64_t> recovery_seeds(std::uint64_t master, std::size_t replicate, std::size_t trials)
{
    const std::uint64_t base = derive_seed(master, "recovery-trials", replicate);
    std::vector<std::uint64_t> seeds(trials);
    for (std::size_t j = 0; j < trials; ++j)
        seeds[j] = derive_seed(base, "trial", j);
    return seeds;
}

double spirit_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != kSpiritDimension || b.size() != kSpiritDimension)
        throw std::invalid_argument("SPIRIT descriptors must have 1024 entries");
    double total = 0.0;
    for (int s = 0; s < kSpiritStates; ++s) {
        double l1 = 0.0;
        for (int k = 0; k < kSpiritActions; ++k)
            l1 += std::abs(a[s * kSpiritActions + k] - b[s * kSpiritActions + k]);
        total += 0.5 * l1;
    }
    return total / kSpiritStates;
}

double mean_pairwise_distance(std::span<const std::vector<double>> descriptors)
{
    const std::size_t n = descriptors.size();
    if (n < 2)
        return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            sum += spirit_distance(descriptors[i], descriptors[j]);
    return sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double proportional_change(double value, double reference)
{
    if (reference == 0.0)
        throw std::domain_error("proportional change relative to zero performance is undefined");
    return (value - reference) / reference;
}

ReplayResult replay(const Genome& genome, TaskKind task, const EnvironmentSpec& env, const FaultAssignment& faults,
                    std::span<const std::uint64_t> seeds, const TrialOptions& options)
{
    if (seeds.empty())
        throw std::invalid_argument("replay needs at least one trial seed");
    SpiritCounter counter;
    double sum = 0.0;
    for (std::uint64_t seed : seeds) {
        const TrialLog log = run_trial(env, genome, faults, seed, options);
        sum += fitness(task, log);
        counter.add(log);
    }
    return ReplayResult{sum / static_cast<double>(seeds.size()), counter.descriptor()};
}

// ---------------------------------------------------------------------------

CellScore ArchiveScores::best() const
{
    if (cells.empty())
        throw std::invalid_argument("no scored cells");
    CellScore best = cells.front();
    for (const CellScore& c : cells)
        if (c.performance > best.performance)
            best = c;
    return best;
}

double ArchiveScores::mean() const
{
    if (cells.empty())
        return 0.0;
    double sum = 0.0;
    for (const CellScore& c : cells)
        sum += c.performance;
    return sum / static_cast<double>(cells.size());
}

double ArchiveScores::performance_of(std::uint32_t key) const
{
    for (const CellScore& c : cells)
        if (c.key == key)
            return c.performance;
    throw std::out_of_range("cell " + std::to_string(key) + " was not scored");
}

namespace {

std::vector<std::uint32_t> nonempty_keys(const Archive& archive)
{
    if (archive.empty())
        throw std::invalid_argument("archive is empty");
    return archive.keys();
}

void check_fault_size(const FaultAssignment& faults)
{
    if (static_cast<int>(faults.size()) != normal_environment().swarm_size)
        throw std::invalid_argument("fault vector must have one entry per robot of the normal swarm");
}

} // namespace

ArchiveScores score_archive(const Archive& archive, TaskKind task, const FaultAssignment& faults,
                            std::span<const std::uint64_t> seeds, int threads, const TrialOptions& options)
{
    check_fault_size(faults);
    const std::vector<std::uint32_t> keys = nonempty_keys(archive);
    ArchiveScores out;
    out.cells.resize(keys.size());
    const EnvironmentSpec env = normal_environment();
    parallel_for(keys.size(), threads, [&](std::size_t i) {
        out.cells[i] = CellScore{keys[i], performance(task, env, archive.at(keys[i]).genome, faults, seeds, options)};
    });
    return out;
}

ArchiveReplay replay_archive(const Archive& archive, TaskKind task, std::span<const std::uint64_t> seeds,
                             int threads, const TrialOptions& options)
{
    const std::vector<std::uint32_t> keys = nonempty_keys(archive);
    ArchiveReplay out;
    out.scores.cells.resize(keys.size());
    out.spirit.resize(keys.size());
    const EnvironmentSpec env = normal_environment();
    const FaultAssignment faults = no_faults(env.swarm_size);
    parallel_for(keys.size(), threads, [&](std::size_t i) {
        ReplayResult r = replay(archive.at(keys[i]).genome, task, env, faults, seeds, options);
        out.scores.cells[i] = CellScore{keys[i], r.performance};
        out.spirit[i] = r.spirit;
    });
    return out;
}

CellScore recover(const Archive& archive, TaskKind task, const CombinedFault& fault,
                  std::span<const std::uint64_t> seeds, int threads, const TrialOptions& options)
{
    return score_archive(archive, task, fault.faults, seeds, threads, options).best();
}

// ---------------------------------------------------------------------------

NormalBehaviour::NormalBehaviour(const Archive& archive, TaskKind task, std::vector<std::uint64_t> seeds,
                                 TrialOptions options)
    : archive_(archive), task_(task), seeds_(std::move(seeds)), options_(options)
{
}

const SpiritDescriptor& NormalBehaviour::spirit(std::uint32_t key)
{
    auto it = cache_.find(key);
    if (it != cache_.end())
        return it->second;
    const EnvironmentSpec env = normal_environment();
    ReplayResult r = replay(archive_.at(key).genome, task_, env, no_faults(env.swarm_size), seeds_, options_);
    return cache_.emplace(key, r.spirit).first->second;
}

RecoveryRecord assess_fault(const Archive& archive, TaskKind task, const ArchiveScores& normal,
                            const CombinedFault& fault, std::span<const std::uint64_t> seeds, int threads,
                            NormalBehaviour& behaviour, const TrialOptions& options)
{
    const ArchiveScores faulty = score_archive(archive, task, fault.faults, seeds, threads, options);
    if (faulty.cells.size() != normal.cells.size())
        throw std::invalid_argument("normal scores do not cover the archive");
    RecoveryRecord r;
    r.task = task;
    r.fault = fault;
    const CellScore reference = normal.best();
    r.normal_best_key = reference.key;
    r.normal_best_perf = reference.performance;
    r.transferred_perf = faulty.performance_of(reference.key);
    const CellScore recovered = faulty.best();
    r.best_key = recovered.key;
    r.recovered_perf = recovered.performance;
    r.impact = proportional_change(r.transferred_perf, r.normal_best_perf);
    r.resilience = proportional_change(r.recovered_perf, r.normal_best_perf);
    r.distance = spirit_distance(behaviour.spirit(r.best_key), behaviour.spirit(r.normal_best_key));
    return r;
}

// ---------------------------------------------------------------------------

Projection project_archive(std::span<const CellScore> scores, std::span<const SpiritDescriptor> descriptors,
                           const Centroids& centroids)
{
    if (scores.size() != descriptors.size())
        throw std::invalid_argument("projection needs one descriptor per scored elite");
    if (scores.empty())
        throw std::invalid_argument("cannot project an empty archive");
    Projection p;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const std::uint32_t c = nearest_centroid(descriptors[i], centroids);
        auto [it, inserted] = p.cells.emplace(c, scores[i]);
        if (!inserted && scores[i].performance > it->second.performance)
            it->second = scores[i];
    }
    p.coverage = p.cells.size();
    std::vector<std::vector<double>> reps;
    reps.reserve(p.cells.size());
    for (const auto& [c, _] : p.cells) {
        const auto row = centroids.row(c);
        reps.emplace_back(row.begin(), row.end());
    }
    p.diversity = mean_pairwise_distance(reps);
    return p;
}

} // namespace swarmqd
