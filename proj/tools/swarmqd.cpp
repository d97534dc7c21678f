// Command-line driver: evolve, reevaluate, faults, analyze, export.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "swarmqd/experiment.hpp"

namespace {

using namespace swarmqd;

int exit_code_for(const std::string& kind)
{
    if (kind == "usage" || kind == "config")
        return 2;
    if (kind == "missing" || kind == "io" || kind == "format")
        return 3;
    if (kind == "conflict" || kind == "integrity")
        return 4;
    return 5;
}

// One line, key=value pairs, message last and quoted.
void report(const std::string& command, const std::string& kind, const std::string& message)
{
    std::string quoted;
    for (char c : message)
        quoted += (c == '"' || c == '\\') ? std::string("\\") + c : std::string(1, c == '\n' ? ' ' : c);
    std::cerr << "swarmqd: error command=" << (command.empty() ? "-" : command) << " kind=" << kind
              << " message=\"" << quoted << "\"" << std::endl;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quality-diversity evolution and fault recovery for robot swarms"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string config_file;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string preset = "desk";
    bool force = false;
    bool quiet = false;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_file, "INI experiment configuration");
        if (needs_config)
            c->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
        sub->add_option("--preset", preset, "defaults: desk or paper")
            ->check(CLI::IsMember({"desk", "paper"}))
            ->capture_default_str();
        sub->add_flag("--force", force, "replace outputs produced with different settings");
        sub->add_flag("--quiet", quiet, "no progress messages");
    };

    CLI::App* evolve = app.add_subcommand("evolve", "evolve archives for every replicate");
    CLI::App* reeval = app.add_subcommand("reevaluate", "re-score elites in the normal environment");
    CLI::App* faults = app.add_subcommand("faults", "inject combined faults and recover from the archive");
    CLI::App* analyze = app.add_subcommand("analyze", "statistics and signatures over recovery records");
    CLI::App* exporter = app.add_subcommand("export", "write the trial log of one elite");
    for (CLI::App* s : {evolve, reeval, faults, exporter})
        common(s, true);

    std::vector<std::string> inputs;
    analyze->add_option("--out", out, "analysis output directory")->capture_default_str();
    analyze->add_option("inputs", inputs, "experiment directories or recovery CSV files")->required();
    analyze->add_flag("--force", force, "replace outputs produced from different inputs");
    analyze->add_flag("--quiet", quiet, "no progress messages");

    ExportRequest request;
    std::string fault_list;
    std::string export_file;
    exporter->add_option("--replicate", request.replicate, "replicate index")->capture_default_str();
    exporter->add_option("--cell", request.cell, "archive key")->required();
    exporter->add_option("--trial-seed", request.trial_seed, "trial seed")->capture_default_str();
    exporter->add_flag("--own-environment", request.own_environment, "use the environment the elite was evolved in");
    exporter->add_option("--faults", fault_list, "comma-separated fault codes, one per robot");
    exporter->add_option("--file", export_file, "CSV to write")->required();

    std::string command;
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code != 0)
            report("", "usage", e.what());
        return code == 0 ? 0 : 2;
    }

    try {
        StageOptions options;
        options.out = out;
        options.threads = threads;
        options.force = force;
        options.log = quiet ? nullptr : &std::cerr;

        if (analyze->parsed()) {
            command = "analyze";
            std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
            run_analyze(paths, options);
            return 0;
        }

        const Preset p = parse_preset(preset);
        ExperimentConfig config = config_file.empty() ? ExperimentConfig::for_preset(p) : load_config(config_file, p);
        if (seed)
            config.seed = *seed;
        config.validate();

        if (evolve->parsed()) {
            command = "evolve";
            run_evolve(config, options);
        } else if (reeval->parsed()) {
            command = "reevaluate";
            run_reevaluate(config, options);
        } else if (faults->parsed()) {
            command = "faults";
            run_faults(config, options);
        } else if (exporter->parsed()) {
            command = "export";
            if (!fault_list.empty()) {
                std::string code;
                std::istringstream is(fault_list);
                while (std::getline(is, code, ','))
                    request.faults.push_back(parse_fault_code(code));
            }
            request.file = export_file;
            run_export(config, options, request);
        }
    } catch (const ExperimentError& e) {
        report(command, e.kind(), e.what());
        return exit_code_for(e.kind());
    } catch (const std::invalid_argument& e) {
        report(command, "usage", e.what());
        return 2;
    } catch (const std::exception& e) {
        report(command, "runtime", e.what());
        return 5;
    }
    return 0;
}
