#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "avdit/flowtrain/pipeline.hpp"
#include "avdit/flowtrain/trainer.hpp"
#include "avdit/model/config.hpp"
#include "avdit/sampler/pipeline.hpp"

namespace avdit::cli {

/// Everything a train or sample run depends on.
struct RunConfig {
    model::ModelConfig model;
    flow::DataConfig data;
    flow::TrainConfig train;
    sampler::SampleConfig sample;

    /// Tiny model, small codecs and a few steps everywhere: a complete run
    /// in seconds, for smoke tests and probes.
    static RunConfig tiny();
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// JSON Schema (draft-07 subset: type, properties, additionalProperties,
/// items, minItems, maxItems, minimum, enum) derived from the defaults.
/// config/schema.json is this output.
nlohmann::json config_schema();

/// Diagnostics for `j` against `schema`, one "path: problem" line each.
/// Partial documents are fine; unknown keys and wrong types are not.
std::vector<std::string> validate_against(const nlohmann::json& j, const nlohmann::json& schema);

/// Sets one dotted path from "a.b.c=value". The value is parsed as JSON
/// when it parses, otherwise taken as a string. Unknown paths throw.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults, then the file (if any), then overrides in order, so a later
/// override of the same key wins. Throws with every schema diagnostic.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);
RunConfig resolve_config(const nlohmann::json& doc, const std::vector<std::string>& overrides);

std::string run_config_hash(const RunConfig& c);

}  // namespace avdit::cli
