// End-to-end acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance [--criterion N]... [--threads T]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include <CLI11.hpp>

#include "support.hpp"
#include "swarmqd/descriptors.hpp"
#include "swarmqd/evolution.hpp"
#include "swarmqd/experiment.hpp"
#include "swarmqd/recovery.hpp"
#include "swarmqd/stats.hpp"
#include "swarmqd/tasks.hpp"

using namespace swarmqd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_threads = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4)
{
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

void progress(const std::string& message)
{
    std::cerr << "  .. " << message << std::endl;
}

// ---------------------------------------------------------------------------

Outcome criterion_fitness()
{
    using testing::synthetic_log;
    const auto start = Clock::now();
    struct Case {
        std::string name;
        double value;
        double expected;
    };
    std::vector<Case> cases;
    const auto coincident = synthetic_log(4.0, 5, 100, [](int, int) { return Pose{1.7, 2.2, 0.0}; });
    const auto corners = synthetic_log(4.0, 2, 100, [](int, int r) { return r ? Pose{4.0, 4.0, 0.0} : Pose{}; });
    const auto single = synthetic_log(4.0, 1, 100, [](int, int) { return Pose{2.1, 2.1, 0.0}; });
    const auto apart = synthetic_log(4.0, 2, 100, [](int, int r) { return Pose{1.0 + r, 2.0, 0.0}; });
    const auto flock = synthetic_log(
        4.0, 2, 100, [](int t, int r) { return Pose{1.0 + 0.02 * t, 1.0 + 0.2 * r, 0.0}; }, 0.10);
    const auto far = synthetic_log(
        4.0, 2, 100, [](int t, int r) { return Pose{1.0 + 0.02 * t, 1.0 + 0.6 * r, 0.0}; }, 0.10);
    const auto empty = synthetic_log(4.0, 0, 100, [](int, int) { return Pose{}; });
    const auto parked = synthetic_log(4.0, 1, 2000, [](int, int) { return Pose{2.1, 2.1, 0.0}; });

    cases.push_back({"aggregation coincident", fitness_aggregation(coincident), 1.0});
    cases.push_back({"aggregation corners", fitness_aggregation(corners), 0.5});
    cases.push_back({"aggregation single", fitness_aggregation(single), 1.0});
    cases.push_back({"dispersion coincident", fitness_dispersion(coincident), 0.0});
    cases.push_back({"dispersion 1 m", fitness_dispersion(apart), 1.0 / (2.0 * std::sqrt(2.0))});
    cases.push_back({"dispersion corners", fitness_dispersion(corners), 1.0});
    cases.push_back({"flocking stationary", fitness_flocking(coincident), 0.0});
    cases.push_back({"flocking aligned", fitness_flocking(flock), 1.0});
    cases.push_back({"flocking out of range", fitness_flocking(far), 0.0});
    cases.push_back({"patrolling empty", fitness_patrolling(empty), 0.0});
    cases.push_back({"patrolling stationary", fitness_patrolling(parked), 0.01});
    cases.push_back({"border patrolling stationary", fitness_border_patrolling(parked), 0.0});

    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    Outcome o{seconds < 1.0, ""};
    double worst = 0.0;
    for (const Case& c : cases) {
        const double err = std::abs(c.value - c.expected);
        worst = std::max(worst, err);
        if (!(err <= 1e-9)) {
            o.pass = false;
            o.detail += c.name + " gave " + fmt(c.value, 17) + "; ";
        }
    }
    o.detail += std::to_string(cases.size()) + " cases, max error " + fmt(worst, 3) + ", " + fmt(seconds, 3) + " s";
    return o;
}

// ---------------------------------------------------------------------------
// Desk-preset centroids, generated once and shared by criteria 2 and 4.

const Centroids& desk_centroids(DescriptorKind kind)
{
    static std::map<DescriptorKind, Centroids> cache;
    auto it = cache.find(kind);
    if (it == cache.end()) {
        const ExperimentConfig desk = ExperimentConfig::for_preset(Preset::Desk);
        const CvtOptions cvt = cvt_options(desk, kind);
        progress("generating " + std::string(descriptor_name(kind)) + " centroids from " +
                 std::to_string(cvt.seed_points) + " seed points");
        it = cache.emplace(kind, generate_cvt_centroids(cvt)).first;
    }
    return it->second;
}

CellMapper mapper_for(DescriptorKind kind)
{
    switch (kind) {
    case DescriptorKind::Hbd: return CellMapper::grid(3, kHbdBins);
    case DescriptorKind::Sdbc:
    case DescriptorKind::Spirit: return CellMapper::cvt(desk_centroids(kind));
    case DescriptorKind::Qed: break;
    }
    return CellMapper::environment();
}

Outcome criterion_elitism()
{
    const std::pair<TaskKind, DescriptorKind> runs[] = {
        {TaskKind::Aggregation, DescriptorKind::Qed},      {TaskKind::Dispersion, DescriptorKind::Hbd},
        {TaskKind::Flocking, DescriptorKind::Sdbc},        {TaskKind::Patrolling, DescriptorKind::Spirit},
        {TaskKind::BorderPatrolling, DescriptorKind::Qed},
    };
    Outcome o{true, ""};
    std::size_t total_events = 0;
    for (const auto& [task, kind] : runs) {
        EvolutionConfig cfg = EvolutionConfig::desk();
        cfg.task = task;
        cfg.descriptor = kind;
        cfg.generations = 200;
        cfg.seed = derive_seed(2024, "acceptance-elitism", static_cast<std::uint64_t>(task));
        cfg.threads = g_threads;
        const CellMapper mapper = mapper_for(kind);
        const SwarmEvaluator eval(task, kind, {cfg.trial_duration});
        progress(std::string(task_name(task)) + "/" + std::string(descriptor_name(kind)) + ": 200 generations");
        const EvolutionResult r = evolve(cfg, eval, mapper);

        // Replay the insertion log cell by cell.
        std::map<std::uint32_t, double> trace;
        std::size_t violations = 0;
        for (const InsertionEvent& e : r.events) {
            if (!e.key)
                continue;
            auto it = trace.find(*e.key);
            if (it != trace.end() && e.cell_performance < it->second)
                ++violations;
            if (it != trace.end() && e.accepted && !(e.performance > it->second))
                ++violations;
            trace[*e.key] = e.cell_performance;
        }
        for (const auto& [key, perf] : trace)
            if (r.archive.at(key).performance != perf)
                ++violations;
        for (std::size_t g = 1; g < r.stats.size(); ++g)
            if (r.stats[g].best < r.stats[g - 1].best || r.stats[g].coverage < r.stats[g - 1].coverage)
                ++violations;
        if (r.stats.size() != 201 || trace.size() != r.archive.coverage())
            ++violations;
        total_events += r.events.size();
        o.detail += std::string(task_name(task)) + "/" + std::string(descriptor_name(kind)) + " coverage " +
                    std::to_string(r.archive.coverage()) + " best " + fmt(r.archive.best_performance(), 3);
        if (violations) {
            o.pass = false;
            o.detail += " (" + std::to_string(violations) + " violations)";
        }
        o.detail += "; ";
    }
    o.detail += std::to_string(total_events) + " insertion events checked";
    return o;
}

// ---------------------------------------------------------------------------

// One cheap pseudo-trial: a hash of the genome and the trial seed.
class CoverageStub : public Evaluator {
public:
    Evaluation evaluate(const Genome& g, const EnvironmentSpec& env,
                        std::span<const std::uint64_t> seeds) const override
    {
        std::uint64_t h = seeds[0] ^ (static_cast<std::uint64_t>(g.hidden_count()) << 32) ^ g.connections().size();
        Evaluation e;
        e.performance = static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
        for (int level : env_descriptor(env))
            e.descriptor.push_back(level);
        return e;
    }
};

Outcome criterion_coverage()
{
    EvolutionConfig cfg = EvolutionConfig::desk();
    cfg.descriptor = DescriptorKind::Qed;
    cfg.trials = 1;
    cfg.initial_population = 200;
    cfg.batch_size = 20;
    cfg.generations = 1490;
    cfg.seed = 3;
    cfg.threads = g_threads;
    const auto start = Clock::now();
    const EvolutionResult r = evolve(cfg, CoverageStub{}, CellMapper::environment());
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const std::size_t evaluations = r.stats.back().evaluations;
    return {evaluations >= 30000 && r.archive.coverage() >= 4080 && r.archive.capacity() == 4096,
            "coverage " + std::to_string(r.archive.coverage()) + "/4096 after " + std::to_string(evaluations) +
                " evaluations (need >= 4080), " + fmt(seconds, 3) + " s"};
}

// ---------------------------------------------------------------------------

Outcome criterion_capacity()
{
    const CellMapper hbd = mapper_for(DescriptorKind::Hbd);
    const CellMapper sdbc = mapper_for(DescriptorKind::Sdbc);
    const CellMapper spirit = mapper_for(DescriptorKind::Spirit);
    const CellMapper qed = mapper_for(DescriptorKind::Qed);

    std::set<EnvDescriptor> specs;
    for (std::uint32_t i = 0; i < kEnvironmentCells; ++i)
        specs.insert(env_descriptor(decode(env_levels(i))));

    double worst_block = 0.0;
    const Centroids& sc = *spirit.centroids();
    for (std::size_t j = 0; j < sc.size(); ++j)
        for (int s = 0; s < kSpiritStates; ++s) {
            const auto row = sc.row(j);
            const double sum = std::accumulate(row.begin() + s * kSpiritActions,
                                               row.begin() + (s + 1) * kSpiritActions, 0.0);
            worst_block = std::max(worst_block, std::abs(sum - 1.0));
        }

    const bool pass = hbd.capacity() == 4096 && sdbc.capacity() == 4096 && sdbc.centroids()->size() == 4096 &&
                      sdbc.dimension() == 10 && spirit.capacity() == 4096 && sc.size() == 4096 &&
                      spirit.dimension() == 1024 && qed.capacity() == 4096 && specs.size() == 4096 &&
                      worst_block <= 1e-6;
    return {pass, "HBD " + std::to_string(hbd.capacity()) + ", SDBC " + std::to_string(sdbc.centroids()->size()) +
                      ", SPIRIT " + std::to_string(sc.size()) + ", QED cells " + std::to_string(qed.capacity()) +
                      " / distinct specs " + std::to_string(specs.size()) + ", max SPIRIT block error " +
                      fmt(worst_block, 3)};
}

// ---------------------------------------------------------------------------

double enumerate_rank_sum(const std::vector<double>& x, const std::vector<double>& y)
{
    std::vector<double> pooled = x;
    pooled.insert(pooled.end(), y.begin(), y.end());
    const std::size_t total = pooled.size();
    std::vector<double> rank(total);
    for (std::size_t i = 0; i < total; ++i) {
        double below = 0, equal = 0;
        for (double v : pooled) {
            below += v < pooled[i];
            equal += v == pooled[i];
        }
        rank[i] = below + (equal + 1) / 2;
    }
    const double centre = x.size() * (total + 1) / 2.0;
    double observed = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        observed += rank[i];
    observed = std::abs(observed - centre);
    std::uint64_t hits = 0, all = 0;
    for (unsigned mask = 0; mask < (1u << total); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != x.size())
            continue;
        double w = 0.0;
        for (std::size_t i = 0; i < total; ++i)
            if (mask >> i & 1u)
                w += rank[i];
        ++all;
        hits += std::abs(w - centre) >= observed - 1e-9;
    }
    return static_cast<double>(hits) / static_cast<double>(all);
}

double count_pairs(const std::vector<double>& x, const std::vector<double>& y)
{
    long long score = 0;
    for (double a : x)
        for (double b : y)
            score += (a > b) - (a < b);
    return static_cast<double>(score) / static_cast<double>(x.size() * y.size());
}

Outcome criterion_statistics()
{
    Rng rng(5);
    int wilcoxon_bad = 0, cliff_bad = 0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(5);
        const std::size_t m = 1 + rng.below(10 - n);
        std::vector<double> x(n), y(m);
        for (double& v : x)
            v = static_cast<double>(rng.below(6));
        for (double& v : y)
            v = static_cast<double>(rng.below(6));
        const bool tied = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) &&
                          std::all_of(y.begin(), y.end(), [&](double v) { return v == x[0]; });
        const double expected = tied ? 1.0 : enumerate_rank_sum(x, y);
        wilcoxon_bad += wilcoxon_rank_sum(x, y) != expected;
    }
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(1 + rng.below(40)), y(1 + rng.below(40));
        for (double& v : x)
            v = rng.below(3) ? rng.uniform() : static_cast<double>(rng.below(4)) / 4;
        for (double& v : y)
            v = rng.below(3) ? rng.uniform() : static_cast<double>(rng.below(4)) / 4;
        cliff_bad += cliffs_delta(x, y) != count_pairs(x, y);
    }
    return {wilcoxon_bad == 0 && cliff_bad == 0, "rank-sum mismatches " + std::to_string(wilcoxon_bad) +
                                                     "/200, Cliff's delta mismatches " + std::to_string(cliff_bad) +
                                                     "/200 (exact equality)"};
}

// ---------------------------------------------------------------------------

SpiritDescriptor random_spirit(Rng& rng)
{
    SpiritDescriptor d;
    for (int s = 0; s < kSpiritStates; ++s) {
        double sum = 0.0;
        for (int a = 0; a < kSpiritActions; ++a)
            sum += d[s * kSpiritActions + a] = rng.below(4) ? rng.uniform() : 0.0;
        if (sum == 0.0)
            sum = d[s * kSpiritActions] = 1.0;
        for (int a = 0; a < kSpiritActions; ++a)
            d[s * kSpiritActions + a] /= sum;
    }
    return d;
}

Outcome criterion_metric()
{
    Rng rng(6);
    int bad = 0;
    double worst_triangle = -1.0;
    for (int t = 0; t < 1000; ++t) {
        const auto a = random_spirit(rng);
        const auto b = random_spirit(rng);
        const auto c = random_spirit(rng);
        const double ab = spirit_distance(a, b), ba = spirit_distance(b, a);
        const double ac = spirit_distance(a, c), bc = spirit_distance(b, c);
        bad += spirit_distance(a, a) != 0.0;
        bad += !(ab > 0.0) || ab > 1.0;
        bad += std::abs(ab - ba) > 1e-12;
        worst_triangle = std::max(worst_triangle, ac - ab - bc);
        bad += ac > ab + bc + 1e-12;
    }
    SpiritDescriptor uniform, deterministic{};
    uniform.fill(1.0 / kSpiritActions);
    for (int s = 0; s < kSpiritStates; ++s)
        deterministic[s * kSpiritActions + (s % kSpiritActions)] = 1.0;
    const double d = spirit_distance(uniform, deterministic);
    const bool ok = bad == 0 && std::abs(d - 15.0 / 16.0) <= 1e-12;
    return {ok, std::to_string(bad) + " violations over 1000 triples, worst triangle slack " +
                    fmt(worst_triangle, 3) + ", uniform vs deterministic " + fmt(d, 17)};
}

// ---------------------------------------------------------------------------

Archive evolve_qed_archive(std::size_t population, std::size_t generations, std::uint64_t seed)
{
    EvolutionConfig cfg = EvolutionConfig::desk();
    cfg.task = TaskKind::Aggregation;
    cfg.descriptor = DescriptorKind::Qed;
    cfg.initial_population = population;
    cfg.generations = generations;
    cfg.seed = seed;
    cfg.threads = g_threads;
    const SwarmEvaluator eval(cfg.task, cfg.descriptor, {cfg.trial_duration});
    const std::size_t every = std::max<std::size_t>(1, generations / 10);
    return evolve(cfg, eval, CellMapper::environment(), [&](const GenerationStats& s) {
               if (s.generation % every == 0)
                   progress("generation " + std::to_string(s.generation) + " coverage " + std::to_string(s.coverage));
           })
        .archive;
}

struct FaultRun {
    std::vector<RecoveryRecord> records;
    RecoveryRecord none;
};

FaultRun assess_faults(const Archive& archive, std::uint64_t master, std::size_t faults, bool with_none)
{
    const ExperimentConfig desk = ExperimentConfig::for_preset(Preset::Desk);
    const TrialOptions trial{desk.evolution.trial_duration};
    const auto seeds = recovery_seeds(master, 0, desk.recovery_trials);
    progress("normal re-evaluation of " + std::to_string(archive.coverage()) + " elites");
    const ArchiveScores normal = score_archive(archive, TaskKind::Aggregation, no_faults(10), seeds, g_threads, trial);
    NormalBehaviour behaviour(archive, TaskKind::Aggregation, seeds, trial);
    FaultRun run;
    for (std::size_t i = 0; i < faults; ++i) {
        const CombinedFault f = experiment_fault(master, 0, i, 10);
        run.records.push_back(
            assess_fault(archive, TaskKind::Aggregation, normal, f, seeds, g_threads, behaviour, trial));
        progress("fault " + std::to_string(i + 1) + "/" + std::to_string(faults) + " impact " +
                 fmt(run.records.back().impact) + " resilience " + fmt(run.records.back().resilience));
    }
    if (with_none) {
        const CombinedFault none{faults, FaultAssignment(10, FaultType::None)};
        run.none = assess_fault(archive, TaskKind::Aggregation, normal, none, seeds, g_threads, behaviour, trial);
    }
    return run;
}

Outcome criterion_recovery_inequality()
{
    progress("evolving a small desk-scale QED archive");
    const Archive archive = evolve_qed_archive(100, 5, 77);
    const FaultRun run = assess_faults(archive, 77, 25, true);
    int violations = 0;
    double min_gap = INFINITY;
    for (const RecoveryRecord& r : run.records) {
        violations += !(r.resilience >= r.impact);
        min_gap = std::min(min_gap, r.resilience - r.impact);
    }
    const bool none_exact = run.none.impact == 0.0 && run.none.resilience == 0.0;
    const bool pass = archive.coverage() >= 50 && run.records.size() == 25 && violations == 0 && none_exact;
    return {pass, std::to_string(archive.coverage()) + " elites, " + std::to_string(violations) +
                      "/25 faults with resilience < impact, smallest gap " + fmt(min_gap, 3) +
                      ", all-NONE impact " + fmt(run.none.impact, 17) + " resilience " +
                      fmt(run.none.resilience, 17)};
}

Outcome criterion_recovery_effect()
{
    progress("evolving a 500-generation desk-scale QED archive on aggregation");
    const Archive archive = evolve_qed_archive(200, 500, 88);
    const FaultRun run = assess_faults(archive, 88, 25, false);
    std::vector<double> impact, resilience;
    for (const RecoveryRecord& r : run.records) {
        impact.push_back(r.impact);
        resilience.push_back(r.resilience);
    }
    const double mi = median(impact), mr = median(resilience);
    const double factor = mr != 0.0 ? mi / mr : INFINITY;
    return {mr > mi, std::to_string(archive.coverage()) + " elites, median impact " + fmt(mi) +
                         ", median resilience " + fmt(mr) + " (loss reduced by factor " + fmt(factor, 3) + ")"};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& file)
{
    std::ifstream is(file, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome criterion_determinism()
{
    const std::string text = R"(
[experiment]
task = flocking
algorithm = qed
seed = 9
replicates = 2
[evolution]
initial_population = 40
generations = 5
batch_size = 10
trials = 2
trial_duration = 40
[recovery]
trials = 3
faults_per_map = 5
[cvt]
spirit_seed_points = 4096
spirit_iterations = 1
)";
    std::istringstream is(text);
    const ExperimentConfig c = parse_config(is, Preset::Desk);
    const fs::path root = fs::temp_directory_path() / ("swarmqd_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const fs::path a = root / "a", b = root / "b";
    auto pipeline = [&](const fs::path& out, int threads) {
        const StageOptions o{out, threads};
        run_evolve(c, o);
        run_reevaluate(c, o);
        run_faults(c, o);
        run_analyze({out}, StageOptions{out / "analysis", threads});
    };
    progress("pipeline run 1");
    pipeline(a, g_threads);
    std::map<std::string, std::string> first;
    const std::vector<std::string> primary{
        "replicate_0/archive/index.csv", "replicate_1/archive/index.csv", "replicate_0/recovery.csv",
        "replicate_1/recovery.csv",      "replicate_0/reevaluation.csv",  "replicate_0/stats.csv",
        "analysis/records.csv",          "analysis/summary.csv",          "analysis/signatures.csv"};
    for (const std::string& f : primary)
        first[f] = slurp(a / f);
    progress("pipeline rerun in place");
    pipeline(a, g_threads);
    progress("pipeline run 2 with a different thread count");
    pipeline(b, g_threads == 1 ? 2 : 1);

    int differ = 0;
    std::string which;
    for (const std::string& f : primary) {
        const bool same = !first[f].empty() && first[f] == slurp(a / f) && first[f] == slurp(b / f);
        if (!same) {
            ++differ;
            which += " " + f;
        }
    }
    fs::remove_all(root);
    return {differ == 0, std::to_string(primary.size() - differ) + "/" + std::to_string(primary.size()) +
                             " primary outputs byte-identical across rerun and fresh run" +
                             (differ ? "; differing:" + which : "")};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance checks"};
    std::vector<int> only;
    app.add_option("--criterion", only, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
    app.add_option("--threads", g_threads, "Worker threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"fitness oracles", criterion_fitness},
        {"elitism over 200 generations on every task", criterion_elitism},
        {"QED coverage with >= 30000 evaluations", criterion_coverage},
        {"descriptor capacities", criterion_capacity},
        {"statistical kernels vs brute force", criterion_statistics},
        {"SPIRIT distance metric properties", criterion_metric},
        {"recovery inequality and all-NONE fault", criterion_recovery_inequality},
        {"desk-scale recovery effect on aggregation", criterion_recovery_effect},
        {"pipeline determinism", criterion_determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end())
            continue;
        const auto start = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
        failed += !o.pass;
        std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
                  << o.detail << " [" << fmt(seconds, 3) << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
