#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "subtrack/dp.hpp"
#include "subtrack/quantize.hpp"

namespace subtrack::archive {

/// Textual chain archive. Doubles are written in shortest round-trip form, so
/// chain_from_json(chain_to_json(c)) == c exactly.
nlohmann::json chain_to_json(const quantize::QuantizedChain& chain);
quantize::QuantizedChain chain_from_json(const nlohmann::json& doc);

void save_chain(const quantize::QuantizedChain& chain, const std::filesystem::path& path);
quantize::QuantizedChain load_chain(const std::filesystem::path& path);

/// One entry per reachable (t, carrier offset, grid index): J value and action counts.
/// Terminal entries carry a zero action.
nlohmann::json solution_to_json(const dp::DpSolution& solution);

/// Writes `text` to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace subtrack::archive
