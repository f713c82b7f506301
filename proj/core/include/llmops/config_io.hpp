#pragma once

#include <filesystem>
#include <string>

#include "llmops/types.hpp"

namespace llmops {

// JSON keys match the struct field names. Missing keys keep the
// default_config() value, so partial override documents are accepted.
// budget_usd_per_hour: null means unbounded. The result is validated.

std::string config_to_json(const SimConfig& cfg);
SimConfig config_from_json(const std::string& text);

SimConfig load_config(const std::filesystem::path& path);
void save_config(const SimConfig& cfg, const std::filesystem::path& path);

}  // namespace llmops
