#include "aie/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aie/errors.hpp"

namespace aie {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

json parse_document(const std::string& path) {
    if (!std::filesystem::exists(path)) throw NotFound("file does not exist: " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// typed field access that names the offending key on type mismatches
template <typename T>
T field_or(const json& node, const std::string& key, const T& fallback) {
    if (!node.contains(key) || node.at(key).is_null()) return fallback;
    try {
        return node.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError("key '" + key + "': " + e.what());
    }
}

template <typename T>
T require_field(const json& node, const std::string& key) {
    if (!node.contains(key)) throw ValidationError(key, "required key is missing");
    try {
        return node.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError("key '" + key + "': " + e.what());
    }
}

void require_unit_interval(double value, const char* key) {
    if (value < 0.0 || value > 1.0) throw ValidationError(key, "must be in [0,1]");
}

std::string resolve_path(const std::filesystem::path& config_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return p.lexically_normal().string();
    return (config_dir / p).lexically_normal().string();
}

DistanceSpec parse_distance(const json& scoring, const std::string& key, double threshold,
                            const std::optional<LocalEmbedderConfig>& embedding) {
    DistanceSpec spec;
    spec.kind = distance_kind_from_string(field_or<std::string>(scoring, key, "normalized-edit"));
    spec.threshold = threshold;
    if (spec.kind == DistanceKind::cosine_embedding) spec.embedder_config = embedding;
    return spec;
}

FactItem parse_fact(const json& node) {
    return {require_field<std::string>(node, "key"), require_field<std::string>(node, "value")};
}

ExperimentSpec parse_experiment(const json& node, int default_trials) {
    ExperimentSpec spec;
    spec.experiment =
        experiment_kind_from_string(require_field<std::string>(node, "experiment"));
    spec.name = require_field<std::string>(node, "name");
    spec.condition = field_or<std::string>(node, "condition", "");
    spec.trials = field_or<int>(node, "trials", default_trials);

    spec.probes = field_or<int>(node, "probes", spec.probes);
    spec.probe_texts = field_or<std::vector<std::string>>(node, "probe_texts", {});
    spec.attribute_probes = field_or<bool>(node, "attribute_probes", false);
    if (node.contains("perturb_after_probe") && !node.at("perturb_after_probe").is_null())
        spec.perturb_after_probe = field_or<int>(node, "perturb_after_probe", 0);

    if (node.contains("facts"))
        for (const json& fact : node.at("facts")) spec.facts.push_back(parse_fact(fact));
    spec.recall_start = field_or<int>(node, "recall_start", 0);
    spec.distractors = field_or<std::vector<std::string>>(node, "distractors", {});

    if (node.contains("scenarios")) {
        for (const json& scenario : node.at("scenarios")) {
            ConsistencyScenario parsed;
            parsed.name = field_or<std::string>(scenario, "name", "");
            parsed.paraphrases =
                require_field<std::vector<std::string>>(scenario, "paraphrases");
            spec.scenarios.push_back(std::move(parsed));
        }
    }
    spec.reset_between_paraphrases = field_or<bool>(node, "reset_between_paraphrases", true);

    spec.sessions = field_or<int>(node, "sessions", spec.sessions);
    if (node.contains("critical_fact") && !node.at("critical_fact").is_null())
        spec.critical_fact = parse_fact(node.at("critical_fact"));

    spec.recovery_steps = field_or<int>(node, "recovery_steps", spec.recovery_steps);
    spec.perturbation_prompt = field_or<std::string>(node, "perturbation_prompt", "");
    spec.correction_prompt_weak = field_or<std::string>(node, "correction_prompt_weak", "");
    spec.correction_prompt_strong = field_or<std::string>(node, "correction_prompt_strong", "");

    spec.task_steps = field_or<int>(node, "task_steps", spec.task_steps);
    spec.perturb_step = field_or<int>(node, "perturb_step", spec.perturb_step);
    spec.performance_floor = field_or<double>(node, "performance_floor", spec.performance_floor);

    if (node.contains("variants")) {
        for (const json& variant : node.at("variants")) {
            CorrelationVariant parsed;
            parsed.label = require_field<std::string>(variant, "label");
            parsed.drift_per_turn = field_or<int>(variant, "drift_per_turn", 0);
            parsed.drift_start_turn = field_or<int>(variant, "drift_start_turn", 1);
            parsed.correction_rho = field_or<double>(variant, "correction_rho", 1.0);
            parsed.plan_quality = field_or<double>(variant, "plan_quality", 1.0);
            spec.variants.push_back(std::move(parsed));
        }
    }
    spec.planning_turns = field_or<int>(node, "planning_turns", spec.planning_turns);

    apply_default_texts(spec);
    spec.validate();
    return spec;
}

RemoteChatConfig parse_remote(const json& node) {
    RemoteChatConfig config;
    config.base_url = require_field<std::string>(node, "base_url");
    config.model = require_field<std::string>(node, "model");
    config.api_key_env = require_field<std::string>(node, "api_key_env");
    config.timeout_ms = field_or<int>(node, "timeout_ms", config.timeout_ms);
    config.max_retries = field_or<int>(node, "max_retries", config.max_retries);
    config.retry_backoff_ms = field_or<int>(node, "retry_backoff_ms", config.retry_backoff_ms);
    config.validate();
    return config;
}

ordered_json fact_to_json(const FactItem& fact) {
    return ordered_json{{"key", fact.key}, {"value", fact.value}};
}

}  // namespace

AgentProfile load_profile(const std::string& path) {
    const json doc = parse_document(path);
    AgentProfile profile;
    profile.profile_id = require_field<std::string>(doc, "profile_id");
    profile.system_prompt = require_field<std::string>(doc, "system_prompt");
    profile.structured_template = require_field<AttributeMap>(doc, "structured_template");
    profile.concise_template = require_field<std::string>(doc, "concise_template");
    profile.validate();
    return profile;
}

PlanMaster load_plan_master(const std::string& path) {
    const json doc = parse_document(path);
    PlanMaster master;
    master.objective = require_field<std::string>(doc, "objective");
    master.toolkit = require_field<std::map<std::string, std::string>>(doc, "toolkit");
    if (!doc.contains("stages")) throw ValidationError("stages", "required key is missing");
    for (const json& stage : doc.at("stages")) {
        PlanMaster::Stage parsed;
        parsed.intended_tool = require_field<std::string>(stage, "intended_tool");
        parsed.usage_description = require_field<std::string>(stage, "usage_description");
        master.stages.push_back(std::move(parsed));
    }
    master.validate();
    return master;
}

RunConfig load_config(const std::string& path) {
    const json doc = parse_document(path);
    const std::filesystem::path config_dir = std::filesystem::path(path).parent_path();

    RunConfig config;
    if (!doc.contains("profile"))
        throw ValidationError("profile", "required fixture path is missing");
    config.profile_path = resolve_path(config_dir, require_field<std::string>(doc, "profile"));
    if (!std::filesystem::exists(config.profile_path))
        throw ValidationError("profile", "fixture file does not exist: " + config.profile_path);
    config.profile = load_profile(config.profile_path);

    if (doc.contains("plan") && !doc.at("plan").is_null()) {
        config.plan_path = resolve_path(config_dir, require_field<std::string>(doc, "plan"));
        if (!std::filesystem::exists(config.plan_path))
            throw ValidationError("plan", "fixture file does not exist: " + config.plan_path);
        config.plan_master = load_plan_master(config.plan_path);
    }

    config.backend = field_or<std::string>(doc, "backend", "scripted");
    if (config.backend != "scripted" && config.backend != "remote")
        throw ValidationError("backend", "must be one of: scripted remote");

    const json scripted = doc.contains("scripted") ? doc.at("scripted") : json::object();
    config.scripted.base_attributes = config.profile.structured_template;
    config.scripted.drift_per_turn = field_or<int>(scripted, "drift_per_turn", 0);
    config.scripted.drift_start_turn = field_or<int>(scripted, "drift_start_turn", 1);
    if (scripted.contains("memory_window") && !scripted.at("memory_window").is_null())
        config.scripted.memory_window = field_or<int>(scripted, "memory_window", 0);
    config.scripted.perturbation_attributes =
        field_or<AttributeMap>(scripted, "perturbation", {});
    config.scripted.correction_behavior = correction_behavior_from_string(
        field_or<std::string>(scripted, "correction_behavior", "partial-on-weak"));
    config.scripted.correction_rho = field_or<double>(scripted, "correction_rho", 0.5);
    config.scripted.plan_quality = field_or<double>(scripted, "plan_quality", 1.0);
    require_unit_interval(config.scripted.correction_rho, "correction_rho");
    require_unit_interval(config.scripted.plan_quality, "plan_quality");

    if (doc.contains("remote") && !doc.at("remote").is_null())
        config.remote = parse_remote(doc.at("remote"));
    if (config.backend == "remote" && !config.remote)
        throw ValidationError("remote", "remote backend selected but no remote section given");
    if (doc.contains("judge") && !doc.at("judge").is_null())
        config.judge = parse_remote(doc.at("judge"));

    const json scoring = doc.contains("scoring") ? doc.at("scoring") : json::object();
    MetricThresholds thresholds;
    thresholds.delta = field_or<double>(scoring, "delta", 0.2);
    thresholds.delta_c = field_or<double>(scoring, "delta_c", 0.3);
    thresholds.epsilon = field_or<double>(scoring, "epsilon", 1e-9);
    thresholds.tau_rec = field_or<double>(scoring, "tau_rec", 0.9);
    require_unit_interval(thresholds.delta, "delta");
    require_unit_interval(thresholds.delta_c, "delta_c");
    require_unit_interval(thresholds.epsilon, "epsilon");
    require_unit_interval(thresholds.tau_rec, "tau_rec");

    std::optional<LocalEmbedderConfig> embedding;
    if (scoring.contains("embedding") && !scoring.at("embedding").is_null()) {
        const json& node = scoring.at("embedding");
        LocalEmbedderConfig parsed;
        parsed.dim = field_or<std::size_t>(node, "dim", parsed.dim);
        parsed.seed = field_or<std::uint64_t>(node, "seed", parsed.seed);
        embedding = parsed;
    }
    config.scoring.identity_distance =
        parse_distance(scoring, "identity_distance", thresholds.delta, embedding);
    config.scoring.consistency_distance =
        parse_distance(scoring, "consistency_distance", thresholds.delta_c, embedding);
    config.scoring.snapshot_distance =
        parse_distance(scoring, "snapshot_distance", thresholds.delta, embedding);
    config.scoring.attribute_distance =
        parse_distance(scoring, "attribute_distance", thresholds.delta, embedding);
    config.scoring.thresholds = thresholds;

    const json generation = doc.contains("generation") ? doc.at("generation") : json::object();
    config.generation.temperature = field_or<double>(generation, "temperature", 0.0);
    config.generation.max_output_tokens =
        field_or<int>(generation, "max_output_tokens", config.generation.max_output_tokens);

    const int default_trials = field_or<int>(doc, "trials", 30);
    if (default_trials < 1) throw ValidationError("trials", "must be positive");
    config.base_seed = field_or<std::int64_t>(doc, "seed", 0);
    config.out_dir = field_or<std::string>(doc, "out", "runs");
    config.concurrency = field_or<int>(doc, "concurrency", 4);
    if (config.concurrency < 1) throw ValidationError("concurrency", "must be positive");

    if (!doc.contains("experiments") || !doc.at("experiments").is_array() ||
        doc.at("experiments").empty())
        throw ValidationError("experiments", "must be a non-empty array");
    for (const json& node : doc.at("experiments"))
        config.experiments.push_back(parse_experiment(node, default_trials));

    for (const ExperimentSpec& spec : config.experiments)
        if (spec.experiment == ExperimentKind::correlation && !config.plan_master)
            throw ValidationError("plan",
                                  "correlation experiment '" + spec.name +
                                      "' needs a plan fixture path");
    return config;
}

std::string config_to_json(const RunConfig& config) {
    ordered_json doc;
    doc["profile"] = config.profile_path;
    if (!config.plan_path.empty()) doc["plan"] = config.plan_path;
    doc["backend"] = config.backend;

    ordered_json scripted;
    scripted["drift_per_turn"] = config.scripted.drift_per_turn;
    scripted["drift_start_turn"] = config.scripted.drift_start_turn;
    if (config.scripted.memory_window) scripted["memory_window"] = *config.scripted.memory_window;
    scripted["perturbation"] = config.scripted.perturbation_attributes;
    scripted["correction_behavior"] = to_string(config.scripted.correction_behavior);
    scripted["correction_rho"] = config.scripted.correction_rho;
    scripted["plan_quality"] = config.scripted.plan_quality;
    doc["scripted"] = std::move(scripted);

    auto remote_to_json = [](const RemoteChatConfig& remote) {
        ordered_json node;
        node["base_url"] = remote.base_url;
        node["model"] = remote.model;
        node["api_key_env"] = remote.api_key_env;
        node["timeout_ms"] = remote.timeout_ms;
        node["max_retries"] = remote.max_retries;
        node["retry_backoff_ms"] = remote.retry_backoff_ms;
        return node;
    };
    if (config.remote) doc["remote"] = remote_to_json(*config.remote);
    if (config.judge) doc["judge"] = remote_to_json(*config.judge);

    ordered_json scoring;
    scoring["delta"] = config.scoring.thresholds.delta;
    scoring["delta_c"] = config.scoring.thresholds.delta_c;
    scoring["epsilon"] = config.scoring.thresholds.epsilon;
    scoring["tau_rec"] = config.scoring.thresholds.tau_rec;
    scoring["identity_distance"] = to_string(config.scoring.identity_distance.kind);
    scoring["consistency_distance"] = to_string(config.scoring.consistency_distance.kind);
    scoring["snapshot_distance"] = to_string(config.scoring.snapshot_distance.kind);
    scoring["attribute_distance"] = to_string(config.scoring.attribute_distance.kind);
    for (const DistanceSpec* spec :
         {&config.scoring.identity_distance, &config.scoring.consistency_distance,
          &config.scoring.snapshot_distance, &config.scoring.attribute_distance}) {
        if (spec->embedder_config) {
            scoring["embedding"] = {{"dim", spec->embedder_config->dim},
                                    {"seed", spec->embedder_config->seed}};
            break;
        }
    }
    doc["scoring"] = std::move(scoring);

    doc["generation"] = {{"temperature", config.generation.temperature},
                         {"max_output_tokens", config.generation.max_output_tokens}};
    doc["seed"] = config.base_seed;
    doc["out"] = config.out_dir;
    doc["concurrency"] = config.concurrency;

    ordered_json experiments = ordered_json::array();
    for (const ExperimentSpec& spec : config.experiments) {
        ordered_json node;
        node["experiment"] = to_string(spec.experiment);
        node["name"] = spec.name;
        node["condition"] = spec.condition;
        node["trials"] = spec.trials;
        switch (spec.experiment) {
            case ExperimentKind::identifiability:
                node["probes"] = spec.probes;
                node["probe_texts"] = spec.probe_texts;
                node["attribute_probes"] = spec.attribute_probes;
                if (spec.perturb_after_probe) {
                    node["perturb_after_probe"] = *spec.perturb_after_probe;
                    node["perturbation_prompt"] = spec.perturbation_prompt;
                }
                break;
            case ExperimentKind::continuity: {
                ordered_json facts = ordered_json::array();
                for (const FactItem& fact : spec.facts) facts.push_back(fact_to_json(fact));
                node["facts"] = std::move(facts);
                node["recall_start"] = spec.recall_start;
                node["distractors"] = spec.distractors;
                break;
            }
            case ExperimentKind::consistency: {
                ordered_json scenarios = ordered_json::array();
                for (const ConsistencyScenario& scenario : spec.scenarios)
                    scenarios.push_back(ordered_json{{"name", scenario.name},
                                                     {"paraphrases", scenario.paraphrases}});
                node["scenarios"] = std::move(scenarios);
                node["reset_between_paraphrases"] = spec.reset_between_paraphrases;
                break;
            }
            case ExperimentKind::persistence:
                node["sessions"] = spec.sessions;
                if (spec.critical_fact) node["critical_fact"] = fact_to_json(*spec.critical_fact);
                break;
            case ExperimentKind::recovery:
                node["recovery_steps"] = spec.recovery_steps;
                node["perturbation_prompt"] = spec.perturbation_prompt;
                node["correction_prompt_weak"] = spec.correction_prompt_weak;
                node["correction_prompt_strong"] = spec.correction_prompt_strong;
                break;
            case ExperimentKind::correlation: {
                ordered_json variants = ordered_json::array();
                for (const CorrelationVariant& variant : spec.variants)
                    variants.push_back(ordered_json{{"label", variant.label},
                                                    {"drift_per_turn", variant.drift_per_turn},
                                                    {"drift_start_turn", variant.drift_start_turn},
                                                    {"correction_rho", variant.correction_rho},
                                                    {"plan_quality", variant.plan_quality}});
                node["variants"] = std::move(variants);
                node["planning_turns"] = spec.planning_turns;
                node["probes"] = spec.probes;
                node["probe_texts"] = spec.probe_texts;
                ordered_json facts = ordered_json::array();
                for (const FactItem& fact : spec.facts) facts.push_back(fact_to_json(fact));
                node["facts"] = std::move(facts);
                node["recall_start"] = spec.recall_start;
                node["distractors"] = spec.distractors;
                ordered_json scenarios = ordered_json::array();
                for (const ConsistencyScenario& scenario : spec.scenarios)
                    scenarios.push_back(ordered_json{{"name", scenario.name},
                                                     {"paraphrases", scenario.paraphrases}});
                node["scenarios"] = std::move(scenarios);
                node["sessions"] = spec.sessions;
                if (spec.critical_fact) node["critical_fact"] = fact_to_json(*spec.critical_fact);
                node["recovery_steps"] = spec.recovery_steps;
                node["perturbation_prompt"] = spec.perturbation_prompt;
                node["correction_prompt_weak"] = spec.correction_prompt_weak;
                break;
            }
            case ExperimentKind::causality:
                node["task_steps"] = spec.task_steps;
                node["perturb_step"] = spec.perturb_step;
                node["performance_floor"] = spec.performance_floor;
                node["perturbation_prompt"] = spec.perturbation_prompt;
                node["correction_prompt_strong"] = spec.correction_prompt_strong;
                break;
        }
        experiments.push_back(std::move(node));
    }
    doc["experiments"] = std::move(experiments);
    return doc.dump(2) + "\n";
}

BackendFactory make_backend_factory(const RunConfig& config) {
    if (config.backend == "remote") {
        const RemoteChatConfig remote = *config.remote;
        return [remote](std::int64_t) {
            return std::unique_ptr<AgentBackend>(new RemoteChatBackend(remote));
        };
    }
    const ScriptedDriftConfig scripted = config.scripted;
    return [scripted](std::int64_t seed) {
        ScriptedDriftConfig per_trial = scripted;
        per_trial.seed = static_cast<std::uint64_t>(seed);
        return std::unique_ptr<AgentBackend>(new ScriptedAgent(per_trial));
    };
}

}  // namespace aie
