#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "subtrack/control.hpp"

namespace subtrack::cli {

struct CommandOptions {
    std::filesystem::path config;
    std::filesystem::path out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool baseline = false;
    std::filesystem::path chain; // solve: chain archive
    std::filesystem::path log_a; // compare
    std::filesystem::path log_b;
};

/// Artifact record written as manifest.json at the end of every command.
struct RunManifest {
    std::string command;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> versions;
    std::vector<std::pair<std::string, std::uint64_t>> outputs; // file name, content hash
    std::vector<std::pair<std::string, double>> phase_seconds;

    /// Hash over everything except the wall-clock timings.
    std::uint64_t hash() const;
    nlohmann::json to_json() const;
};

/// Config with the --seed / --workers overrides applied, and its hash. The hash covers the
/// parsed document minus `workers`, so it does not depend on the worker count.
struct LoadedConfig {
    control::ScenarioConfig config;
    std::uint64_t hash = 0;
};
LoadedConfig load(const CommandOptions& options);

/// Chain used by `quantize` and `solve`: the prior chain of the scenario over the horizon
/// the controller plans on (whole run for known targets, one subinterval for BOT).
quantize::QuantizedChain scenario_chain(const control::ScenarioConfig& config);

RunManifest cmd_diagram(const CommandOptions& options);
RunManifest cmd_quantize(const CommandOptions& options);
RunManifest cmd_solve(const CommandOptions& options);
RunManifest cmd_run(const CommandOptions& options);
RunManifest cmd_compare(const CommandOptions& options);

/// Runs a subcommand and maps exceptions to exit codes: 0 ok, 2 config, 3 numerical, 4 I/O.
int dispatch(const std::string& command, const CommandOptions& options, std::ostream& err);

} // namespace subtrack::cli
