#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aie/agents.hpp"
#include "aie/core.hpp"
#include "aie/planning.hpp"
#include "aie/protocols.hpp"
#include "aie/remote_client.hpp"

namespace aie {

// A fully resolved run configuration. Fixture paths are stored resolved
// (relative paths taken against the config file's directory), so a saved
// copy loads identically from anywhere.
struct RunConfig {
    std::string profile_path;
    std::string plan_path;  // empty when no correlation experiment needs it
    AgentProfile profile;
    std::optional<PlanMaster> plan_master;

    std::string backend = "scripted";  // "scripted" | "remote"
    ScriptedDriftConfig scripted;      // base_attributes filled from the profile
    std::optional<RemoteChatConfig> remote;
    std::optional<RemoteChatConfig> judge;  // remote judge; mock judge when absent

    ScoringSpec scoring;
    GenerationParams generation;
    std::vector<ExperimentSpec> experiments;

    std::int64_t base_seed = 0;
    std::string out_dir = "runs";
    int concurrency = 4;
};

// Parses and validates a run config document (JSON). Defaults: delta 0.2,
// delta_c 0.3, epsilon 1e-9, tau_rec 0.9, trials 30, concurrency 4. Every
// validation failure names the offending key and its constraint.
RunConfig load_config(const std::string& path);

AgentProfile load_profile(const std::string& path);
PlanMaster load_plan_master(const std::string& path);

// Serializes the resolved config back to its document form; load_config on
// the result reproduces the same RunConfig. Used for the per-run config echo.
std::string config_to_json(const RunConfig& config);

// Backend factory per the config's backend selection; scripted backends get
// the trial seed, remote ones pass it through generation params.
BackendFactory make_backend_factory(const RunConfig& config);

}  // namespace aie
