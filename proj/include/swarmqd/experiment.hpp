#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "swarmqd/archive.hpp"
#include "swarmqd/evolution.hpp"
#include "swarmqd/recovery.hpp"

namespace swarmqd {

/// Failure with a category used for the CLI's error line and exit code.
class ExperimentError : public std::runtime_error {
public:
    ExperimentError(std::string kind, const std::string& message) : std::runtime_error(message), kind_(std::move(kind))
    {
    }
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

enum class Preset { Desk, Paper };
std::string_view preset_name(Preset p);
Preset parse_preset(std::string_view name);

struct CvtSettings {
    std::size_t seed_points = 0;
    int iterations = 0;
};

struct ExperimentConfig {
    Preset preset = Preset::Desk;
    std::uint64_t seed = 1;
    EvolutionConfig evolution; // its seed is replaced per replicate
    std::size_t replicates = 1;
    std::size_t recovery_trials = 10;
    std::size_t faults_per_map = 25;
    CvtSettings sdbc_cvt;
    CvtSettings spirit_cvt;

    static ExperimentConfig for_preset(Preset preset);

    void validate() const;
    /// Sorted key = value lines of every setting that affects results.
    std::string canonical() const;
    /// Hex SHA-256 of canonical().
    std::string hash() const;
};

/// Reads an INI file over the preset's defaults. Sections and keys:
///   [experiment] task algorithm seed replicates
///   [evolution]  initial_population generations batch_size trials trial_duration
///   [mutation]   node_add node_delete connection_add connection_delete
///                connection_modify weight_rate eta
///   [recovery]   trials faults_per_map
///   [cvt]        sdbc_seed_points sdbc_iterations spirit_seed_points spirit_iterations
/// Unknown sections or keys raise ExperimentError("config").
ExperimentConfig load_config(const std::filesystem::path& file, Preset preset);
ExperimentConfig parse_config(std::istream& is, Preset preset);

std::uint64_t replicate_seed(std::uint64_t master, std::size_t replicate);
CvtOptions cvt_options(const ExperimentConfig& config, DescriptorKind kind);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& file);

/// "%.17g", with integral values printed without exponent where exact.
std::string format_double(double v);

/// `# swarmqd config=<hash> seed=<seed> stage=<stage>`
std::string provenance_line(std::string_view config_hash, std::string_view seed, std::string_view stage);

// ---------------------------------------------------------------------------
// Persistence

void save_archive(const std::filesystem::path& dir, const Archive& archive, std::string_view provenance);
/// Throws ExperimentError("missing") if index or genome files are absent.
Archive load_archive(const std::filesystem::path& dir, std::size_t capacity);

void save_centroids(const std::filesystem::path& file, const Centroids& centroids, std::string_view provenance);
Centroids load_centroids(const std::filesystem::path& file);

void write_stats_csv(std::ostream& os, std::span<const GenerationStats> stats);
void write_insertions_csv(std::ostream& os, std::span<const InsertionEvent> events);

struct RecordRow {
    std::string algorithm;
    std::size_t replicate = 0;
    RecoveryRecord record;
};

void write_records_csv(std::ostream& os, std::span<const RecordRow> rows);
std::vector<RecordRow> read_records_csv(std::istream& is);

// ---------------------------------------------------------------------------
// Stages

struct StageOptions {
    std::filesystem::path out;
    int threads = 1;
    bool force = false;
    std::ostream* log = nullptr; // progress messages
};

/// Evolves every replicate: out/replicate_<r>/{archive/, stats.csv,
/// insertions.csv} and, for CVT algorithms, the shared centroid file.
void run_evolve(const ExperimentConfig& config, const StageOptions& options);
/// Normal-environment re-evaluation and SPIRIT projection per replicate.
void run_reevaluate(const ExperimentConfig& config, const StageOptions& options);
/// Combined faults, recovery and records per replicate (recovery.csv).
void run_faults(const ExperimentConfig& config, const StageOptions& options);
/// Reads replicate_*/recovery.csv below each input directory and writes
/// records.csv, summary.csv, pairwise.csv and the signature files to out.
void run_analyze(const std::vector<std::filesystem::path>& inputs, const StageOptions& options);

struct ExportRequest {
    std::size_t replicate = 0;
    std::uint32_t cell = 0;
    std::uint64_t trial_seed = 1;
    bool own_environment = false; // otherwise the normal environment
    std::vector<FaultType> faults;  // empty: fault-free
    std::filesystem::path file;
};

/// Replays one elite and writes its trial log as CSV.
void run_export(const ExperimentConfig& config, const StageOptions& options, const ExportRequest& request);

} // namespace swarmqd
