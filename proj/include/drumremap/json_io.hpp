#pragma once

#include <filesystem>

#include "json.hpp"

namespace drumremap {

/// Parse a JSON file; I/O and syntax problems become DataError.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Pretty-printed. Doubles are written with round-trip precision.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace drumremap
