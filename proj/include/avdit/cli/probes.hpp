#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace avdit::cli {

enum class ProbeStatus { pass, fail, skip };
std::string status_name(ProbeStatus s);

/// One automated check per documented invariant.
struct ProbeInfo {
    std::string id;         // "<module>.<name>"
    std::string module;
    std::string invariant;  // what is checked, in one line
    bool trained = false;   // needs a trained run directory
};

const std::vector<ProbeInfo>& probe_catalog();

struct ProbeOptions {
    std::string suite = "all";               // "all" or a module name
    std::optional<std::filesystem::path> run;  // trained run for trained-only probes
    /// Deliberate faults for mutation testing. "rope-base" makes the RoPE
    /// base depend on position inside the relative-position probe.
    std::set<std::string> mutations;
};

struct ProbeResult {
    ProbeInfo info;
    ProbeStatus status = ProbeStatus::skip;
    std::string detail;
    double seconds = 0.0;
};

struct ProbeReport {
    std::vector<ProbeResult> results;

    std::size_t count(ProbeStatus s) const;
    bool ok() const { return count(ProbeStatus::fail) == 0; }
    nlohmann::json to_json() const;
    std::string text() const;
};

/// Runs the selected probes in catalog order. Trained-only probes are
/// skipped, not failed, when no usable run is given.
ProbeReport run_probes(const ProbeOptions& opts);

}  // namespace avdit::cli
