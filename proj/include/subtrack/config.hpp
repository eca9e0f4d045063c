#pragma once

#include <filesystem>

#include "json.hpp"

#include "subtrack/control.hpp"

namespace subtrack::control {

/// Parses a scenario document. Unknown keys anywhere are rejected with ConfigError.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Reads a JSON file; IoError when unreadable, ConfigError when malformed.
nlohmann::json read_json_file(const std::filesystem::path& path);

} // namespace subtrack::control
