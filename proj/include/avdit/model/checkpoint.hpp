#pragma once

#include <filesystem>

#include <json.hpp>

#include "avdit/numerics/nn.hpp"

namespace avdit {

/// Writes `dir/params.avt` (one AVT1 record per parameter, in list order) and
/// `dir/manifest.json` (names, shapes, config and its hash).
void save_checkpoint(const std::filesystem::path& dir, const ParamList& params, const nlohmann::json& config);

/// Loads into existing parameters in place. Names and shapes must match the
/// manifest exactly; returns the stored config.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, const ParamList& params);

/// 64-bit FNV-1a of `dir/params.avt`, 16 hex digits; names the weights.
std::string checkpoint_id(const std::filesystem::path& dir);

}  // namespace avdit
