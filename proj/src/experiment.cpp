#include "swarmqd/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include "swarmqd/stats.hpp"

namespace swarmqd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kArchiveCells = 4096;

[[noreturn]] void fail(const std::string& kind, const std::string& message)
{
    throw ExperimentError(kind, message);
}

template <class T>
T parse_number(const std::string& text, const std::string& what)
{
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        fail("config", what + ": cannot parse '" + text + "'");
    return value;
}

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, sep))
        out.push_back(field);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        fail("format", "CSV is missing column '" + name + "'");
    }
};

CsvTable read_csv(std::istream& is)
{
    CsvTable t;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line[0] == '#') {
            t.comments.push_back(line);
            continue;
        }
        if (t.header.empty())
            t.header = split(line, ',');
        else {
            t.rows.push_back(split(line, ','));
            if (t.rows.back().size() != t.header.size())
                fail("format", "CSV row has " + std::to_string(t.rows.back().size()) + " fields, header has " +
                                   std::to_string(t.header.size()));
        }
    }
    return t;
}

CsvTable read_csv_file(const fs::path& file)
{
    std::ifstream is(file);
    if (!is)
        fail("missing", "cannot open " + file.string());
    return read_csv(is);
}

void write_file(const fs::path& file, const std::string& content)
{
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os)
            fail("io", "cannot write " + file.string());
        os << content;
        if (!os)
            fail("io", "write failed for " + file.string());
    }
    fs::rename(tmp, file, ec);
    if (ec)
        fail("io", "cannot move " + tmp.string() + " into place: " + ec.message());
}

double field_double(const std::string& s, const std::string& what)
{
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        fail("format", what + ": bad number '" + s + "'");
    return v;
}

template <class T>
T field_int(const std::string& s, const std::string& what)
{
    T v{};
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        fail("format", what + ": bad integer '" + s + "'");
    return v;
}

std::string seed_text(std::uint64_t seed)
{
    return std::to_string(seed);
}

// ---------------------------------------------------------------------------
// Stage manifest: completed stages with their setting hash and file digests.

class Manifest {
public:
    explicit Manifest(fs::path root) : root_(std::move(root))
    {
        const fs::path file = root_ / "manifest.json";
        if (fs::exists(file)) {
            std::ifstream is(file);
            try {
                data_ = json::parse(is);
            } catch (const json::exception& e) {
                fail("integrity", "unreadable manifest " + file.string() + ": " + e.what());
            }
        }
        if (!data_.contains("stages"))
            data_["stages"] = json::object();
    }

    bool complete(const std::string& stage, const std::string& hash) const
    {
        const json& stages = data_["stages"];
        return stages.contains(stage) && stages[stage]["settings"] == hash;
    }

    /// True when the stage already ran with these settings and its files
    /// are intact. Throws on conflicts unless forced.
    bool up_to_date(const std::string& stage, const std::string& hash, bool force) const
    {
        const json& stages = data_["stages"];
        if (!stages.contains(stage))
            return false;
        const json& entry = stages[stage];
        if (entry["settings"] != hash) {
            if (force)
                return false;
            fail("conflict", "stage " + stage + " in " + root_.string() +
                                 " was produced with different settings; rerun with --force to replace it");
        }
        for (const auto& [rel, digest] : entry["files"].items()) {
            const fs::path file = root_ / rel;
            if (!fs::exists(file) || sha256_file(file) != digest.get<std::string>()) {
                if (force)
                    return false;
                fail("integrity", "file " + file.string() + " no longer matches the manifest of stage " + stage);
            }
        }
        return true;
    }

    void require(const std::string& stage, const std::string& hash) const
    {
        if (!complete(stage, hash))
            fail("missing", "prerequisite stage " + stage + " has not been run in " + root_.string() +
                                " with the current settings");
    }

    void record(const std::string& stage, const std::string& hash, const std::vector<fs::path>& files)
    {
        json entry;
        entry["settings"] = hash;
        entry["files"] = json::object();
        for (const fs::path& f : files)
            entry["files"][fs::relative(f, root_).generic_string()] = sha256_file(f);
        data_["stages"][stage] = entry;
        write_file(root_ / "manifest.json", data_.dump(2) + "\n");
    }

private:
    fs::path root_;
    json data_;
};

std::string replicate_dir(std::size_t r)
{
    return "replicate_" + std::to_string(r);
}

void note(const StageOptions& o, const std::string& message)
{
    if (o.log)
        *o.log << message << std::endl;
}

// Settings that determine each stage's outputs.
std::string evolve_settings(const ExperimentConfig& c)
{
    std::string s;
    for (const std::string& line : split(c.canonical(), '\n'))
        if (line.starts_with("experiment.") || line.starts_with("evolution.") || line.starts_with("mutation."))
            s += line + "\n";
    if (c.evolution.descriptor == DescriptorKind::Sdbc)
        s += "cvt.sdbc_seed_points=" + std::to_string(c.sdbc_cvt.seed_points) +
             "\ncvt.sdbc_iterations=" + std::to_string(c.sdbc_cvt.iterations) + "\n";
    if (c.evolution.descriptor == DescriptorKind::Spirit)
        s += "cvt.spirit_seed_points=" + std::to_string(c.spirit_cvt.seed_points) +
             "\ncvt.spirit_iterations=" + std::to_string(c.spirit_cvt.iterations) + "\n";
    // the replicate count only decides how many replicates exist
    std::string out;
    for (const std::string& line : split(s, '\n'))
        if (!line.empty() && !line.starts_with("experiment.replicates="))
            out += line + "\n";
    return sha256_hex(out);
}

std::string reevaluate_settings(const ExperimentConfig& c)
{
    return sha256_hex(evolve_settings(c) + "recovery.trials=" + std::to_string(c.recovery_trials) +
                      "\ncvt.spirit_seed_points=" + std::to_string(c.spirit_cvt.seed_points) +
                      "\ncvt.spirit_iterations=" + std::to_string(c.spirit_cvt.iterations) + "\n");
}

std::string faults_settings(const ExperimentConfig& c)
{
    return sha256_hex(reevaluate_settings(c) + "recovery.faults_per_map=" + std::to_string(c.faults_per_map) + "\n");
}

std::string centroid_settings(const CvtOptions& o)
{
    std::ostringstream s;
    s << "k=" << o.k << " dim=" << o.dim << " points=" << o.seed_points << " seed=" << o.seed
      << " simplex=" << o.simplex_block << " iterations=" << o.max_iterations << " tol=" << format_double(o.tolerance);
    return sha256_hex(s.str());
}

/// Generates or reuses the centroid file for a CVT descriptor.
Centroids ensure_centroids(const ExperimentConfig& config, DescriptorKind kind, const StageOptions& o,
                           Manifest& manifest)
{
    const CvtOptions cvt = cvt_options(config, kind);
    const std::string stage = "centroids/" + std::string(descriptor_name(kind));
    const std::string hash = centroid_settings(cvt);
    const fs::path file = o.out / (std::string(descriptor_name(kind)) + "_centroids.csv");
    if (manifest.up_to_date(stage, hash, o.force))
        return load_centroids(file);
    note(o, "generating " + std::to_string(cvt.k) + " " + std::string(descriptor_name(kind)) + " centroids from " +
                std::to_string(cvt.seed_points) + " seed points");
    const Centroids c = generate_cvt_centroids(cvt);
    save_centroids(file, c, provenance_line(config.hash(), seed_text(config.seed), stage));
    manifest.record(stage, hash, {file});
    return c;
}

CellMapper make_mapper(const ExperimentConfig& config, const StageOptions& o, Manifest& manifest)
{
    switch (config.evolution.descriptor) {
    case DescriptorKind::Hbd:
        return CellMapper::grid(3, kHbdBins);
    case DescriptorKind::Sdbc:
    case DescriptorKind::Spirit:
        return CellMapper::cvt(ensure_centroids(config, config.evolution.descriptor, o, manifest));
    case DescriptorKind::Qed:
        break;
    }
    return CellMapper::environment();
}

ArchiveScores read_normal_scores(const fs::path& file)
{
    const CsvTable t = read_csv_file(file);
    const std::size_t ck = t.column("key");
    const std::size_t cp = t.column("performance");
    ArchiveScores s;
    for (const auto& row : t.rows)
        s.cells.push_back(CellScore{field_int<std::uint32_t>(row[ck], "key"), field_double(row[cp], "performance")});
    std::sort(s.cells.begin(), s.cells.end(), [](const CellScore& a, const CellScore& b) { return a.key < b.key; });
    return s;
}

} // namespace

// ---------------------------------------------------------------------------

std::string_view preset_name(Preset p)
{
    return p == Preset::Paper ? "paper" : "desk";
}

Preset parse_preset(std::string_view name)
{
    if (name == "desk")
        return Preset::Desk;
    if (name == "paper")
        return Preset::Paper;
    fail("config", "unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

ExperimentConfig ExperimentConfig::for_preset(Preset preset)
{
    ExperimentConfig c;
    c.preset = preset;
    if (preset == Preset::Paper) {
        c.evolution = EvolutionConfig::paper();
        c.replicates = 5;
        c.faults_per_map = 50;
        c.sdbc_cvt = {100000, 100};
        c.spirit_cvt = {1000000, 100};
    } else {
        c.evolution = EvolutionConfig::desk();
        // k-means on a single core: fewer Lloyd passes and a smaller SPIRIT cloud
        c.sdbc_cvt = {100000, 20};
        c.spirit_cvt = {8192, 5};
    }
    return c;
}

void ExperimentConfig::validate() const
{
    try {
        evolution.validate();
    } catch (const std::invalid_argument& e) {
        fail("config", e.what());
    }
    if (replicates == 0)
        fail("config", "replicates must be at least 1");
    if (recovery_trials == 0)
        fail("config", "recovery trials must be at least 1");
    if (faults_per_map == 0)
        fail("config", "faults_per_map must be at least 1");
    for (const CvtSettings* s : {&sdbc_cvt, &spirit_cvt}) {
        if (s->seed_points < kArchiveCells)
            fail("config", "CVT seed points must be at least the number of centroids (4096)");
        if (s->iterations < 1)
            fail("config", "CVT iterations must be at least 1");
    }
}

std::string ExperimentConfig::canonical() const
{
    std::map<std::string, std::string> kv;
    kv["experiment.task"] = task_name(evolution.task);
    kv["experiment.algorithm"] = descriptor_name(evolution.descriptor);
    kv["experiment.seed"] = seed_text(seed);
    kv["experiment.replicates"] = std::to_string(replicates);
    kv["evolution.initial_population"] = std::to_string(evolution.initial_population);
    kv["evolution.generations"] = std::to_string(evolution.generations);
    kv["evolution.batch_size"] = std::to_string(evolution.batch_size);
    kv["evolution.trials"] = std::to_string(evolution.trials);
    kv["evolution.trial_duration"] = format_double(evolution.trial_duration);
    kv["mutation.node_add"] = format_double(evolution.mutation.node_add);
    kv["mutation.node_delete"] = format_double(evolution.mutation.node_delete);
    kv["mutation.connection_add"] = format_double(evolution.mutation.connection_add);
    kv["mutation.connection_delete"] = format_double(evolution.mutation.connection_delete);
    kv["mutation.connection_modify"] = format_double(evolution.mutation.connection_modify);
    kv["mutation.weight_rate"] = format_double(evolution.mutation.weight);
    kv["mutation.eta"] = format_double(evolution.mutation.eta_m);
    kv["recovery.trials"] = std::to_string(recovery_trials);
    kv["recovery.faults_per_map"] = std::to_string(faults_per_map);
    kv["cvt.sdbc_seed_points"] = std::to_string(sdbc_cvt.seed_points);
    kv["cvt.sdbc_iterations"] = std::to_string(sdbc_cvt.iterations);
    kv["cvt.spirit_seed_points"] = std::to_string(spirit_cvt.seed_points);
    kv["cvt.spirit_iterations"] = std::to_string(spirit_cvt.iterations);
    std::string out;
    for (const auto& [k, v] : kv)
        out += k + "=" + v + "\n";
    return out;
}

std::string ExperimentConfig::hash() const
{
    return sha256_hex(canonical());
}

ExperimentConfig parse_config(std::istream& is, Preset preset)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        fail("config", std::string("malformed config: ") + e.what());
    }
    ExperimentConfig c = ExperimentConfig::for_preset(preset);
    EvolutionConfig& ev = c.evolution;
    MutationParams& mu = ev.mutation;

    for (const auto& [section, keys] : tree) {
        if (!keys.data().empty())
            fail("config", "key '" + section + "' outside of a section");
        for (const auto& [key, node] : keys) {
            const std::string name = section + "." + key;
            const std::string value = trim(node.data());
            try {
                if (name == "experiment.task")
                    ev.task = parse_task(value);
                else if (name == "experiment.algorithm")
                    ev.descriptor = parse_descriptor(value);
                else if (name == "experiment.seed")
                    c.seed = parse_number<std::uint64_t>(value, name);
                else if (name == "experiment.replicates")
                    c.replicates = parse_number<std::size_t>(value, name);
                else if (name == "evolution.initial_population")
                    ev.initial_population = parse_number<std::size_t>(value, name);
                else if (name == "evolution.generations")
                    ev.generations = parse_number<std::size_t>(value, name);
                else if (name == "evolution.batch_size")
                    ev.batch_size = parse_number<std::size_t>(value, name);
                else if (name == "evolution.trials")
                    ev.trials = parse_number<std::size_t>(value, name);
                else if (name == "evolution.trial_duration")
                    ev.trial_duration = parse_number<double>(value, name);
                else if (name == "mutation.node_add")
                    mu.node_add = parse_number<double>(value, name);
                else if (name == "mutation.node_delete")
                    mu.node_delete = parse_number<double>(value, name);
                else if (name == "mutation.connection_add")
                    mu.connection_add = parse_number<double>(value, name);
                else if (name == "mutation.connection_delete")
                    mu.connection_delete = parse_number<double>(value, name);
                else if (name == "mutation.connection_modify")
                    mu.connection_modify = parse_number<double>(value, name);
                else if (name == "mutation.weight_rate")
                    mu.weight = parse_number<double>(value, name);
                else if (name == "mutation.eta")
                    mu.eta_m = parse_number<double>(value, name);
                else if (name == "recovery.trials")
                    c.recovery_trials = parse_number<std::size_t>(value, name);
                else if (name == "recovery.faults_per_map")
                    c.faults_per_map = parse_number<std::size_t>(value, name);
                else if (name == "cvt.sdbc_seed_points")
                    c.sdbc_cvt.seed_points = parse_number<std::size_t>(value, name);
                else if (name == "cvt.sdbc_iterations")
                    c.sdbc_cvt.iterations = parse_number<int>(value, name);
                else if (name == "cvt.spirit_seed_points")
                    c.spirit_cvt.seed_points = parse_number<std::size_t>(value, name);
                else if (name == "cvt.spirit_iterations")
                    c.spirit_cvt.iterations = parse_number<int>(value, name);
                else
                    fail("config", "unknown key '" + name + "'");
            } catch (const std::invalid_argument& e) {
                fail("config", name + ": " + e.what());
            }
        }
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& file, Preset preset)
{
    std::ifstream is(file);
    if (!is)
        fail("config", "cannot open config file " + file.string());
    return parse_config(is, preset);
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t replicate)
{
    return derive_seed(master, "replicate", replicate);
}

CvtOptions cvt_options(const ExperimentConfig& config, DescriptorKind kind)
{
    CvtOptions o;
    o.k = kArchiveCells;
    o.tolerance = 1e-6;
    if (kind == DescriptorKind::Sdbc) {
        o.dim = 10;
        o.seed_points = config.sdbc_cvt.seed_points;
        o.max_iterations = config.sdbc_cvt.iterations;
        o.simplex_block = 0;
    } else if (kind == DescriptorKind::Spirit) {
        o.dim = kSpiritDimension;
        o.seed_points = config.spirit_cvt.seed_points;
        o.max_iterations = config.spirit_cvt.iterations;
        o.simplex_block = kSpiritActions;
    } else {
        fail("config", "descriptor " + std::string(descriptor_name(kind)) + " does not use centroids");
    }
    o.seed = derive_seed(config.seed, "centroids", static_cast<std::uint64_t>(kind));
    return o;
}

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i)
        os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

std::string sha256_file(const fs::path& file)
{
    std::ifstream is(file, std::ios::binary);
    if (!is)
        fail("missing", "cannot read " + file.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    std::vector<char> buffer(1 << 16);
    while (is) {
        is.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(is.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i)
        os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

std::string format_double(double v)
{
    // shortest representation that reads back to the same value
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{})
        throw std::runtime_error("cannot format number");
    return std::string(buf, ptr);
}

std::string provenance_line(std::string_view config_hash, std::string_view seed, std::string_view stage)
{
    std::string s = "# swarmqd config=";
    s += config_hash;
    s += " seed=";
    s += seed;
    s += " stage=";
    s += stage;
    return s;
}

// ---------------------------------------------------------------------------

void save_archive(const fs::path& dir, const Archive& archive, std::string_view provenance)
{
    std::ostringstream index;
    std::ostringstream descriptors;
    index << provenance << "\n"
          << "key,performance,max_linear_speed,swarm_size,arena_area,obstacle_count,rab_range,proximity_range,"
             "genome_file,trial_seeds\n";
    descriptors << provenance << "\n";
    std::size_t dim = 0;
    for (std::uint32_t key : archive.keys())
        dim = std::max(dim, archive.at(key).descriptor.size());
    descriptors << "key";
    for (std::size_t k = 0; k < dim; ++k)
        descriptors << ",d" << k;
    descriptors << "\n";

    std::error_code ec;
    fs::create_directories(dir / "genomes", ec);
    for (std::uint32_t key : archive.keys()) {
        const ArchiveCell& cell = archive.at(key);
        const std::string genome_file = "genomes/cell_" + std::to_string(key) + ".genome";
        const EnvironmentSpec& e = cell.environment;
        index << key << ',' << format_double(cell.performance) << ',' << format_double(e.max_linear_speed) << ','
              << e.swarm_size << ',' << format_double(e.arena_area) << ',' << e.obstacle_count << ','
              << format_double(e.rab_range) << ',' << format_double(e.proximity_range) << ',' << genome_file << ',';
        for (std::size_t j = 0; j < cell.trial_seeds.size(); ++j)
            index << (j ? ";" : "") << cell.trial_seeds[j];
        index << "\n";

        descriptors << key;
        for (double v : cell.descriptor)
            descriptors << ',' << format_double(v);
        for (std::size_t k = cell.descriptor.size(); k < dim; ++k)
            descriptors << ',';
        descriptors << "\n";

        std::ostringstream g;
        g << provenance << "\n";
        write_genome(g, cell.genome);
        write_file(dir / genome_file, g.str());
    }
    write_file(dir / "descriptors.csv", descriptors.str());
    write_file(dir / "index.csv", index.str());
}

Archive load_archive(const fs::path& dir, std::size_t capacity)
{
    const CsvTable index = read_csv_file(dir / "index.csv");
    std::map<std::uint32_t, std::vector<double>> descriptors;
    if (fs::exists(dir / "descriptors.csv")) {
        const CsvTable d = read_csv_file(dir / "descriptors.csv");
        for (const auto& row : d.rows) {
            std::vector<double> v;
            for (std::size_t k = 1; k < row.size() && !row[k].empty(); ++k)
                v.push_back(field_double(row[k], "descriptor"));
            descriptors[field_int<std::uint32_t>(row[0], "key")] = std::move(v);
        }
    }
    const std::size_t c_key = index.column("key");
    const std::size_t c_perf = index.column("performance");
    const std::size_t c_speed = index.column("max_linear_speed");
    const std::size_t c_size = index.column("swarm_size");
    const std::size_t c_area = index.column("arena_area");
    const std::size_t c_obst = index.column("obstacle_count");
    const std::size_t c_rab = index.column("rab_range");
    const std::size_t c_prox = index.column("proximity_range");
    const std::size_t c_file = index.column("genome_file");
    const std::size_t c_seeds = index.column("trial_seeds");

    Archive archive(capacity);
    for (const auto& row : index.rows) {
        const auto key = field_int<std::uint32_t>(row[c_key], "key");
        ArchiveCell cell;
        const fs::path gfile = dir / row[c_file];
        std::ifstream gs(gfile);
        if (!gs)
            fail("missing", "genome file " + gfile.string() + " is missing");
        try {
            cell.genome = read_genome(gs);
        } catch (const std::exception& e) {
            fail("format", gfile.string() + ": " + e.what());
        }
        cell.performance = field_double(row[c_perf], "performance");
        cell.environment.max_linear_speed = field_double(row[c_speed], "max_linear_speed");
        cell.environment.swarm_size = field_int<int>(row[c_size], "swarm_size");
        cell.environment.arena_area = field_double(row[c_area], "arena_area");
        cell.environment.obstacle_count = field_int<int>(row[c_obst], "obstacle_count");
        cell.environment.rab_range = field_double(row[c_rab], "rab_range");
        cell.environment.proximity_range = field_double(row[c_prox], "proximity_range");
        if (!row[c_seeds].empty())
            for (const std::string& s : split(row[c_seeds], ';'))
                cell.trial_seeds.push_back(field_int<std::uint64_t>(s, "trial seed"));
        if (auto it = descriptors.find(key); it != descriptors.end())
            cell.descriptor = it->second;
        try {
            if (!archive.try_insert(key, std::move(cell)))
                fail("format", "duplicate archive key " + std::to_string(key));
        } catch (const std::out_of_range& e) {
            fail("format", e.what());
        }
    }
    return archive;
}

void save_centroids(const fs::path& file, const Centroids& centroids, std::string_view provenance)
{
    std::ostringstream os;
    os << provenance << "\n";
    for (int k = 0; k < centroids.dim; ++k)
        os << (k ? "," : "") << 'c' << k;
    os << "\n";
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        const auto row = centroids.row(i);
        for (int k = 0; k < centroids.dim; ++k)
            os << (k ? "," : "") << format_double(row[k]);
        os << "\n";
    }
    write_file(file, os.str());
}

Centroids load_centroids(const fs::path& file)
{
    const CsvTable t = read_csv_file(file);
    Centroids c;
    c.dim = static_cast<int>(t.header.size());
    c.data.reserve(t.rows.size() * t.header.size());
    for (const auto& row : t.rows)
        for (const std::string& v : row)
            c.data.push_back(field_double(v, "centroid"));
    return c;
}

void write_stats_csv(std::ostream& os, std::span<const GenerationStats> stats)
{
    os << "generation,coverage,best,mean,evaluations,failures\n";
    for (const GenerationStats& s : stats)
        os << s.generation << ',' << s.coverage << ',' << format_double(s.best) << ',' << format_double(s.mean)
           << ',' << s.evaluations << ',' << s.failures << "\n";
}

void write_insertions_csv(std::ostream& os, std::span<const InsertionEvent> events)
{
    os << "generation,evaluation,key,performance,accepted,cell_performance\n";
    for (const InsertionEvent& e : events) {
        os << e.generation << ',' << e.evaluation << ',';
        if (e.key)
            os << *e.key;
        os << ',' << format_double(e.performance) << ',' << (e.accepted ? 1 : 0) << ',';
        if (e.key)
            os << format_double(e.cell_performance);
        os << "\n";
    }
}

void write_records_csv(std::ostream& os, std::span<const RecordRow> rows)
{
    const int robots = normal_environment().swarm_size;
    os << "task,algorithm,replicate,fault_id";
    for (int r = 0; r < robots; ++r)
        os << ",fault_r" << r;
    os << ",impact,recovered_perf,resilience,distance,best_cell_key,normal_best_key,normal_best_perf,"
          "transferred_perf\n";
    for (const RecordRow& row : rows) {
        const RecoveryRecord& r = row.record;
        if (static_cast<int>(r.fault.faults.size()) != robots)
            throw std::invalid_argument("record fault vector does not match the normal swarm size");
        os << task_name(r.task) << ',' << row.algorithm << ',' << row.replicate << ',' << r.fault.id;
        for (FaultType f : r.fault.faults)
            os << ',' << fault_code(f);
        os << ',' << format_double(r.impact) << ',' << format_double(r.recovered_perf) << ','
           << format_double(r.resilience) << ',' << format_double(r.distance) << ',' << r.best_key << ','
           << r.normal_best_key << ',' << format_double(r.normal_best_perf) << ','
           << format_double(r.transferred_perf) << "\n";
    }
}

std::vector<RecordRow> read_records_csv(std::istream& is)
{
    const CsvTable t = read_csv(is);
    const int robots = normal_environment().swarm_size;
    std::vector<std::size_t> fault_cols;
    for (int r = 0; r < robots; ++r)
        fault_cols.push_back(t.column("fault_r" + std::to_string(r)));
    const std::size_t c_task = t.column("task"), c_alg = t.column("algorithm"), c_rep = t.column("replicate"),
                      c_id = t.column("fault_id"), c_imp = t.column("impact"), c_rec = t.column("recovered_perf"),
                      c_res = t.column("resilience"), c_dist = t.column("distance"),
                      c_best = t.column("best_cell_key"), c_nkey = t.column("normal_best_key"),
                      c_nperf = t.column("normal_best_perf"), c_tperf = t.column("transferred_perf");
    std::vector<RecordRow> rows;
    for (const auto& f : t.rows) {
        RecordRow row;
        try {
            row.record.task = parse_task(f[c_task]);
            for (std::size_t c : fault_cols)
                row.record.fault.faults.push_back(parse_fault_code(f[c]));
        } catch (const std::invalid_argument& e) {
            fail("format", e.what());
        }
        row.algorithm = f[c_alg];
        row.replicate = field_int<std::size_t>(f[c_rep], "replicate");
        row.record.fault.id = field_int<std::size_t>(f[c_id], "fault_id");
        row.record.impact = field_double(f[c_imp], "impact");
        row.record.recovered_perf = field_double(f[c_rec], "recovered_perf");
        row.record.resilience = field_double(f[c_res], "resilience");
        row.record.distance = field_double(f[c_dist], "distance");
        row.record.best_key = field_int<std::uint32_t>(f[c_best], "best_cell_key");
        row.record.normal_best_key = field_int<std::uint32_t>(f[c_nkey], "normal_best_key");
        row.record.normal_best_perf = field_double(f[c_nperf], "normal_best_perf");
        row.record.transferred_perf = field_double(f[c_tperf], "transferred_perf");
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------

void run_evolve(const ExperimentConfig& config, const StageOptions& o)
{
    config.validate();
    Manifest manifest(o.out);
    const std::string settings = evolve_settings(config);
    const std::string config_hash = config.hash();
    std::optional<CellMapper> mapper;
    for (std::size_t r = 0; r < config.replicates; ++r) {
        const std::string stage = "evolve/" + replicate_dir(r);
        if (manifest.up_to_date(stage, settings, o.force)) {
            note(o, stage + ": up to date");
            continue;
        }
        if (!mapper)
            mapper = make_mapper(config, o, manifest);
        EvolutionConfig ev = config.evolution;
        ev.seed = replicate_seed(config.seed, r);
        ev.threads = o.threads;
        const SwarmEvaluator evaluator(ev.task, ev.descriptor, TrialOptions{ev.trial_duration});
        const std::size_t every = std::max<std::size_t>(1, ev.generations / 20);
        const EvolutionResult result = evolve(ev, evaluator, *mapper, [&](const GenerationStats& s) {
            if (s.generation % every == 0 || s.generation == ev.generations)
                note(o, stage + ": generation " + std::to_string(s.generation) + " coverage " +
                            std::to_string(s.coverage) + " best " + format_double(s.best));
        });

        const std::string prov = provenance_line(config_hash, seed_text(config.seed), stage);
        const fs::path dir = o.out / replicate_dir(r);
        save_archive(dir / "archive", result.archive, prov);
        std::ostringstream stats, insertions;
        stats << prov << "\n";
        write_stats_csv(stats, result.stats);
        insertions << prov << "\n";
        write_insertions_csv(insertions, result.events);
        write_file(dir / "stats.csv", stats.str());
        write_file(dir / "insertions.csv", insertions.str());

        std::vector<fs::path> files{dir / "archive" / "index.csv", dir / "archive" / "descriptors.csv",
                                    dir / "stats.csv", dir / "insertions.csv"};
        for (std::uint32_t key : result.archive.keys())
            files.push_back(dir / "archive" / "genomes" / ("cell_" + std::to_string(key) + ".genome"));
        manifest.record(stage, settings, files);
    }
}

void run_reevaluate(const ExperimentConfig& config, const StageOptions& o)
{
    config.validate();
    Manifest manifest(o.out);
    const std::string settings = reevaluate_settings(config);
    const std::string config_hash = config.hash();
    std::optional<Centroids> projection;
    for (std::size_t r = 0; r < config.replicates; ++r) {
        const std::string stage = "reevaluate/" + replicate_dir(r);
        manifest.require("evolve/" + replicate_dir(r), evolve_settings(config));
        if (manifest.up_to_date(stage, settings, o.force)) {
            note(o, stage + ": up to date");
            continue;
        }
        if (!projection)
            projection = ensure_centroids(config, DescriptorKind::Spirit, o, manifest);
        const fs::path dir = o.out / replicate_dir(r);
        const Archive archive = load_archive(dir / "archive", kArchiveCells);
        if (archive.empty())
            fail("empty", "archive of " + replicate_dir(r) + " is empty; nothing to re-evaluate");
        const std::vector<std::uint64_t> seeds = recovery_seeds(config.seed, r, config.recovery_trials);
        note(o, stage + ": replaying " + std::to_string(archive.coverage()) + " elites");
        const ArchiveReplay replayed =
            replay_archive(archive, config.evolution.task, seeds, o.threads, TrialOptions{config.evolution.trial_duration});
        const Projection proj = project_archive(replayed.scores.cells, replayed.spirit, *projection);

        const std::string prov = provenance_line(config_hash, seed_text(config.seed), stage);
        std::ostringstream table, summary;
        table << prov << "\nkey,performance,projected_centroid\n";
        for (std::size_t i = 0; i < replayed.scores.cells.size(); ++i)
            table << replayed.scores.cells[i].key << ',' << format_double(replayed.scores.cells[i].performance) << ','
                  << nearest_centroid(replayed.spirit[i], *projection) << "\n";
        const CellScore best = replayed.scores.best();
        summary << prov << "\ncoverage,best_key,best_performance,mean_performance,projected_coverage,"
                           "projected_diversity\n"
                << archive.coverage() << ',' << best.key << ',' << format_double(best.performance) << ','
                << format_double(replayed.scores.mean()) << ',' << proj.coverage << ','
                << format_double(proj.diversity) << "\n";
        write_file(dir / "reevaluation.csv", table.str());
        write_file(dir / "reevaluation_summary.csv", summary.str());
        manifest.record(stage, settings, {dir / "reevaluation.csv", dir / "reevaluation_summary.csv"});
    }
}

void run_faults(const ExperimentConfig& config, const StageOptions& o)
{
    config.validate();
    Manifest manifest(o.out);
    const std::string settings = faults_settings(config);
    const std::string config_hash = config.hash();
    const TrialOptions trial{config.evolution.trial_duration};
    const int robots = normal_environment().swarm_size;
    for (std::size_t r = 0; r < config.replicates; ++r) {
        const std::string stage = "faults/" + replicate_dir(r);
        manifest.require("reevaluate/" + replicate_dir(r), reevaluate_settings(config));
        if (manifest.up_to_date(stage, settings, o.force)) {
            note(o, stage + ": up to date");
            continue;
        }
        const fs::path dir = o.out / replicate_dir(r);
        const Archive archive = load_archive(dir / "archive", kArchiveCells);
        const ArchiveScores normal = read_normal_scores(dir / "reevaluation.csv");
        if (normal.cells.size() != archive.coverage())
            fail("integrity", "reevaluation.csv does not cover the archive of " + replicate_dir(r));
        const std::vector<std::uint64_t> seeds = recovery_seeds(config.seed, r, config.recovery_trials);
        NormalBehaviour behaviour(archive, config.evolution.task, seeds, trial);

        std::vector<RecordRow> rows;
        for (std::size_t i = 0; i < config.faults_per_map; ++i) {
            CombinedFault fault = experiment_fault(config.seed, r, i, robots);
            fault.id = r * config.faults_per_map + i;
            RecoveryRecord rec;
            try {
                rec = assess_fault(archive, config.evolution.task, normal, fault, seeds, o.threads, behaviour, trial);
            } catch (const std::domain_error& e) {
                fail("undefined", stage + ": " + e.what());
            }
            note(o, stage + ": fault " + std::to_string(i + 1) + "/" + std::to_string(config.faults_per_map) +
                        " impact " + format_double(rec.impact) + " resilience " + format_double(rec.resilience));
            rows.push_back(RecordRow{std::string(descriptor_name(config.evolution.descriptor)), r, std::move(rec)});
        }
        std::ostringstream os;
        os << provenance_line(config_hash, seed_text(config.seed), stage) << "\n";
        write_records_csv(os, rows);
        write_file(dir / "recovery.csv", os.str());
        manifest.record(stage, settings, {dir / "recovery.csv"});
    }
}

namespace {

struct Provenance {
    std::string config;
    std::string seed;
};

Provenance parse_provenance(const std::vector<std::string>& comments)
{
    for (const std::string& c : comments) {
        if (!c.starts_with("# swarmqd "))
            continue;
        Provenance p;
        std::istringstream is(c.substr(10));
        std::string token;
        while (is >> token) {
            if (token.starts_with("config="))
                p.config = token.substr(7);
            else if (token.starts_with("seed="))
                p.seed = token.substr(5);
        }
        return p;
    }
    return {};
}

void write_signature(const fs::path& out, const std::string& algorithm, const std::string& kind,
                     const std::vector<double>& x, const std::vector<double>& y, const std::string& prov,
                     std::ostringstream& summary, std::vector<fs::path>& files)
{
    summary << algorithm << ',' << kind << ',' << x.size() << ',';
    if (x.size() < 2) {
        summary << ",,,,\n";
        return;
    }
    const Signature s = signature(x, y);
    if (s.fit)
        summary << format_double(s.fit->slope) << ',' << format_double(s.fit->intercept) << ','
                << format_double(s.fit->correlation) << ',';
    else
        summary << ",,,";
    summary << (s.kde ? "signature_" + algorithm + "_" + kind + ".csv" : std::string()) << "\n";
    if (!s.kde)
        return;
    std::ostringstream grid;
    grid << prov << "\nx,y,density\n";
    for (int j = 0; j < s.kde->ny; ++j)
        for (int i = 0; i < s.kde->nx; ++i)
            grid << format_double(s.kde->x_at(i)) << ',' << format_double(s.kde->y_at(j)) << ','
                 << format_double(s.kde->at(i, j)) << "\n";
    const fs::path file = out / ("signature_" + algorithm + "_" + kind + ".csv");
    write_file(file, grid.str());
    files.push_back(file);
}

} // namespace

void run_analyze(const std::vector<fs::path>& inputs, const StageOptions& o)
{
    if (inputs.empty())
        fail("usage", "analyze needs at least one input directory");
    std::vector<fs::path> record_files;
    for (const fs::path& in : inputs) {
        if (fs::is_regular_file(in)) {
            record_files.push_back(in);
            continue;
        }
        if (!fs::is_directory(in))
            fail("missing", "input " + in.string() + " does not exist");
        std::vector<fs::path> found;
        for (const auto& entry : fs::directory_iterator(in))
            if (entry.is_directory() && entry.path().filename().string().starts_with("replicate_") &&
                fs::exists(entry.path() / "recovery.csv"))
                found.push_back(entry.path() / "recovery.csv");
        if (found.empty())
            fail("missing", "no replicate_*/recovery.csv below " + in.string() + "; run the faults stage first");
        std::sort(found.begin(), found.end());
        record_files.insert(record_files.end(), found.begin(), found.end());
    }

    std::vector<RecordRow> rows;
    std::string digest_input;
    std::set<std::string> seeds;
    for (const fs::path& f : record_files) {
        std::ifstream is(f);
        if (!is)
            fail("missing", "cannot open " + f.string());
        std::stringstream content;
        content << is.rdbuf();
        digest_input += sha256_hex(content.str()) + "\n";
        std::istringstream header_scan(content.str());
        const CsvTable t = read_csv(header_scan);
        seeds.insert(parse_provenance(t.comments).seed);
        std::istringstream body(content.str());
        std::vector<RecordRow> part = read_records_csv(body);
        rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    const std::string hash = sha256_hex(digest_input);
    Manifest manifest(o.out);
    if (manifest.up_to_date("analyze", hash, o.force)) {
        note(o, "analyze: up to date");
        return;
    }
    std::string seed_list;
    for (const std::string& s : seeds)
        seed_list += (seed_list.empty() ? "" : ";") + (s.empty() ? std::string("?") : s);
    const std::string prov = provenance_line(hash, seed_list, "analyze");

    // empirical maximum per task over everything observed
    std::map<std::string, double> emax;
    std::map<std::string, std::map<std::string, std::vector<const RecoveryRecord*>>> groups;
    for (const RecordRow& row : rows) {
        const std::string task(task_name(row.record.task));
        double& m = emax[task];
        m = std::max({m, row.record.normal_best_perf, row.record.recovered_perf, row.record.transferred_perf});
        groups[task][row.algorithm].push_back(&row.record);
    }

    std::vector<fs::path> files;
    {
        std::ostringstream os;
        os << prov << "\ntask,algorithm,replicate,fault_id,impact,impact_emax,recovered_perf,recovered_norm,"
                      "resilience,distance\n";
        for (const RecordRow& row : rows) {
            const RecoveryRecord& r = row.record;
            const double m = emax[std::string(task_name(r.task))];
            const double impact_emax = m > 0.0 ? (r.transferred_perf - r.normal_best_perf) / m : 0.0;
            const double recovered_norm = m > 0.0 ? r.recovered_perf / m : 0.0;
            os << task_name(r.task) << ',' << row.algorithm << ',' << row.replicate << ',' << r.fault.id << ','
               << format_double(r.impact) << ',' << format_double(impact_emax) << ','
               << format_double(r.recovered_perf) << ',' << format_double(recovered_norm) << ','
               << format_double(r.resilience) << ',' << format_double(r.distance) << "\n";
        }
        files.push_back(o.out / "records.csv");
        write_file(files.back(), os.str());
    }

    auto column = [&](const std::vector<const RecoveryRecord*>& recs, auto get) {
        std::vector<double> v;
        v.reserve(recs.size());
        for (const RecoveryRecord* r : recs)
            v.push_back(get(*r));
        return v;
    };
    const auto impact_of = [](const RecoveryRecord& r) { return r.impact; };
    const auto resilience_of = [](const RecoveryRecord& r) { return r.resilience; };
    const auto distance_of = [](const RecoveryRecord& r) { return r.distance; };

    {
        std::ostringstream os;
        os << prov << "\ntask,algorithm,n,empirical_max,median_impact,median_resilience,median_recovered_norm,"
                      "median_distance\n";
        for (const auto& [task, algs] : groups)
            for (const auto& [alg, recs] : algs) {
                const double m = emax[task];
                const auto norm = column(recs, [&](const RecoveryRecord& r) { return m > 0 ? r.recovered_perf / m : 0.0; });
                os << task << ',' << alg << ',' << recs.size() << ',' << format_double(m) << ','
                   << format_double(median(column(recs, impact_of))) << ','
                   << format_double(median(column(recs, resilience_of))) << ',' << format_double(median(norm)) << ','
                   << format_double(median(column(recs, distance_of))) << "\n";
            }
        files.push_back(o.out / "summary.csv");
        write_file(files.back(), os.str());
    }

    bool pairwise = false;
    for (const auto& [task, algs] : groups)
        pairwise = pairwise || algs.size() > 1;
    if (pairwise) {
        std::ostringstream os;
        os << prov << "\ntask,algorithm_a,algorithm_b,n_a,n_b,p_resilience,delta_resilience,magnitude_resilience,"
                      "p_recovered,delta_recovered,magnitude_recovered\n";
        for (const auto& [task, algs] : groups)
            for (auto a = algs.begin(); a != algs.end(); ++a)
                for (auto b = std::next(a); b != algs.end(); ++b) {
                    const StatResult res =
                        compare_samples(column(a->second, resilience_of), column(b->second, resilience_of));
                    const auto rec_of = [](const RecoveryRecord& r) { return r.recovered_perf; };
                    const StatResult rec = compare_samples(column(a->second, rec_of), column(b->second, rec_of));
                    os << task << ',' << a->first << ',' << b->first << ',' << a->second.size() << ','
                       << b->second.size() << ',' << format_double(res.p_value) << ',' << format_double(res.delta)
                       << ',' << magnitude_name(res.magnitude) << ',' << format_double(rec.p_value) << ','
                       << format_double(rec.delta) << ',' << magnitude_name(rec.magnitude) << "\n";
                }
        files.push_back(o.out / "pairwise.csv");
        write_file(files.back(), os.str());
    }

    {
        // pooled over tasks per algorithm; extreme impacts (< -0.5) left out
        std::map<std::string, std::vector<const RecoveryRecord*>> by_alg;
        for (const RecordRow& row : rows)
            if (row.record.impact >= -0.5)
                by_alg[row.algorithm].push_back(&row.record);
        std::ostringstream summary;
        summary << prov << "\nalgorithm,signature,n,slope,intercept,correlation,grid_file\n";
        for (const auto& [alg, recs] : by_alg) {
            const auto imp = column(recs, impact_of);
            const auto res = column(recs, resilience_of);
            const auto dist = column(recs, distance_of);
            write_signature(o.out, alg, "impact_resilience", imp, res, prov, summary, files);
            write_signature(o.out, alg, "resilience_distance", res, dist, prov, summary, files);
            write_signature(o.out, alg, "impact_distance", imp, dist, prov, summary, files);
        }
        files.push_back(o.out / "signatures.csv");
        write_file(files.back(), summary.str());
    }
    manifest.record("analyze", hash, files);
    note(o, "analyze: " + std::to_string(rows.size()) + " records from " + std::to_string(record_files.size()) +
                " files");
}

void run_export(const ExperimentConfig& config, const StageOptions& o, const ExportRequest& request)
{
    const fs::path dir = o.out / replicate_dir(request.replicate) / "archive";
    const Archive archive = load_archive(dir, kArchiveCells);
    const ArchiveCell* cell = archive.find(request.cell);
    if (!cell)
        fail("missing", "cell " + std::to_string(request.cell) + " is empty in " + dir.string());
    const EnvironmentSpec env = request.own_environment ? cell->environment : normal_environment();
    FaultAssignment faults = request.faults.empty() ? no_faults(env.swarm_size) : request.faults;
    if (static_cast<int>(faults.size()) != env.swarm_size)
        fail("usage", "fault list has " + std::to_string(faults.size()) + " entries for a swarm of " +
                          std::to_string(env.swarm_size));
    const TrialLog log =
        run_trial(env, cell->genome, faults, request.trial_seed, TrialOptions{config.evolution.trial_duration});
    std::ostringstream os;
    os << provenance_line(config.hash(), seed_text(config.seed), "export") << "\n";
    write_trial_csv(os, log);
    write_file(request.file, os.str());
}

} // namespace swarmqd
