#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aie/agents.hpp"
#include "aie/core.hpp"
#include "aie/metrics.hpp"
#include "aie/planning.hpp"

namespace aie {

enum class ExperimentKind {
    identifiability,
    continuity,
    consistency,
    persistence,
    recovery,
    correlation,
    causality
};

const char* to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(std::string_view name);

struct FactItem {
    std::string key;
    std::string value;

    bool operator==(const FactItem&) const = default;
};

struct ConsistencyScenario {
    std::string name;
    std::vector<std::string> paraphrases;  // each needs >= 2 entries
};

// One configuration of the correlation study: scripted drift/correction
// knobs plus the planning oracle quality for that variant.
struct CorrelationVariant {
    std::string label;
    int drift_per_turn = 0;
    int drift_start_turn = 1;
    double correction_rho = 1.0;
    double plan_quality = 1.0;
};

// Everything one experiment needs beyond the shared run-level config.
// Fields outside the active experiment's section are ignored.
struct ExperimentSpec {
    ExperimentKind experiment = ExperimentKind::identifiability;
    std::string name;       // report label; also names the trace file
    std::string condition;  // closed vocabulary per experiment, see validate()
    int trials = 30;

    // identifiability
    int probes = 5;
    std::vector<std::string> probe_texts;  // cycled when probes > size
    bool attribute_probes = false;         // emit per-attribute radar series
    std::optional<int> perturb_after_probe;

    // continuity
    std::vector<FactItem> facts;
    int recall_start = 0;  // 0 = default schedule (2 * facts + 2)
    std::vector<std::string> distractors;

    // consistency
    std::vector<ConsistencyScenario> scenarios;
    bool reset_between_paraphrases = true;

    // persistence
    int sessions = 3;
    std::optional<FactItem> critical_fact;  // injected in session 1 only

    // recovery (prompts shared with causality)
    int recovery_steps = 3;
    std::string perturbation_prompt;
    std::string correction_prompt_weak;
    std::string correction_prompt_strong;

    // causality
    int task_steps = 12;
    int perturb_step = 4;
    double performance_floor = 0.2;

    // correlation
    std::vector<CorrelationVariant> variants;
    int planning_turns = 3;

    void validate() const;  // throws ValidationError naming the field
};

// Fills empty text fields (probe texts, distractors, perturbation and
// correction prompts, condition) with the stock wording for the experiment.
void apply_default_texts(ExperimentSpec& spec);

struct MetricThresholds {
    double delta = 0.2;      // identifiability match radius
    double delta_c = 0.3;    // consistency pair radius
    double epsilon = 1e-9;   // denominator guard
    double tau_rec = 0.9;    // recovery speed threshold
};

// Distance/checker choices shared by the runners and by re-scoring stored
// traces; identical inputs here guarantee identical scores there.
struct ScoringSpec {
    DistanceSpec identity_distance;     // identifiability + drift series
    DistanceSpec consistency_distance;  // pairwise output distance
    DistanceSpec snapshot_distance;     // persistence + recovery
    DistanceSpec attribute_distance;    // radar similarity
    CheckerSpec continuity_checker;
    MetricThresholds thresholds;
};

ScoringSpec default_scoring();

using BackendFactory = std::function<std::unique_ptr<AgentBackend>(std::int64_t trial_seed)>;

// Records protocol events into a trace while driving the backend. Every
// event is one protocol step: the backend's clock advances exactly once per
// step, before the event lands.
class TrialRecorder {
public:
    TrialRecorder(Trace& trace, AgentBackend& backend, GenerationParams params);

    // records the instantiating system turn; not a protocol step
    void system_prompt(const std::string& text);

    // new session: notional reset; records the system turn tagged
    // session-start + session:<d>
    void begin_session(int session, const std::string& system_text);

    // one probe step: probe turn, backend answer turn; returns the answer
    std::string probe(const Probe& probe, Tags probe_tags, Tags answer_tags);

    // one fact step: environment turn "[fact:key] value" tagged fact:<key>
    void fact(const FactItem& fact, Tags extra_tags = {});

    void distractor(const std::string& text);
    void perturb(const std::string& prompt);
    void correct(const std::string& prompt, CorrectionStrength strength);

    // one retrieval step: re-injects stored context verbatim as an
    // environment turn tagged "retrieval"; refresh re-registers a fact with
    // stateful backends (remote ones see only the text)
    void retrieved_context(const std::string& text, const std::optional<FactItem>& refresh);

    const std::vector<ChatMessage>& history() const { return history_; }

private:
    Tags with_session(Tags tags) const;

    Trace& trace_;
    AgentBackend& backend_;
    GenerationParams params_;
    std::vector<ChatMessage> history_;
    int session_ = 0;
};

// The chat history a backend saw when the turn at end_index was produced:
// turns from the latest session start (or the trace head) up to but not
// including end_index. judge turns are skipped; system maps to system,
// agent to assistant, everything else to user.
std::vector<ChatMessage> history_from_trace(const Trace& trace, std::size_t end_index);

struct TrialResult {
    int trial = 0;
    std::int64_t seed = 0;
    Trace trace;
    MetricReport report;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::string run_id;
    std::vector<TrialResult> trials;
};

// Re-derive a trial's metrics from its recorded trace alone (plus profile
// references). The runners score through this exact path, so re-scoring a
// stored trace is bit-identical to the run's own report.
MetricReport score_trace(const Trace& trace, const ExperimentSpec& spec,
                         const AgentProfile& profile, const ScoringSpec& scoring);

// Single-metric entry points used by score_trace and by trace re-scoring;
// each throws NoSuchProbe when the trace lacks the turns it needs.
double score_identifiability(const Trace& trace, const AgentProfile& profile,
                             const ScoringSpec& scoring);
double score_continuity(const Trace& trace, const ScoringSpec& scoring);
double score_consistency(const Trace& trace, const ScoringSpec& scoring);
double score_persistence(const Trace& trace, const ScoringSpec& scoring);
RecoveryResult score_recovery(const Trace& trace, const ScoringSpec& scoring);
DriftSeries trace_drift_series(const Trace& trace, const AgentProfile& profile,
                               const ScoringSpec& scoring);
AttributeDrift trace_attribute_drift(const Trace& trace, const AgentProfile& profile,
                                     const ScoringSpec& scoring);

// Runs spec.trials independent trials (trial i seeds with base_seed + i) at
// the given concurrency and scores each trace. Covers the five single-metric
// experiments; correlation/causality have their own entry points.
ExperimentResult run_experiment(const ExperimentSpec& spec, const AgentProfile& profile,
                                const ScoringSpec& scoring, const BackendFactory& factory,
                                const GenerationParams& params, std::int64_t base_seed,
                                int concurrency);

struct PlanningTurnResult {
    bool parsed = false;
    PlanCandidate candidate;
    StructuralPlanMetrics structural;
    JudgeVerdict verdict;
};

// N_p planning turns: prompt built from the skeleton, distractor injected,
// response parsed and scored structurally and by the judge. Parse failures
// score zero and the run continues. Turns are recorded into *trace when
// given.
std::vector<PlanningTurnResult> run_planning_task(
    AgentBackend& backend, const PlanSkeleton& skeleton, const PlanMaster& master, Judge& judge,
    const std::function<std::string(int turn)>& distractor_source, int n_turns,
    DistractorPlacement placement, const GenerationParams& params, Trace* trace = nullptr);

std::string build_planning_prompt(const PlanSkeleton& skeleton);

struct CorrelationRow {
    std::string label;
    // means over the variant's trials
    double identifiability = 0.0;
    double continuity = 0.0;
    double consistency = 0.0;
    double persistence = 0.0;
    double recovery = 0.0;
    double composite = 0.0;
    // means over planning turns
    StructuralPlanMetrics structural;
    double tool_appropriateness = 0.0;
    double description_consistency = 0.0;
    double overall_quality = 0.0;
};

struct CorrelationCell {
    std::optional<double> pearson;   // nullopt = undefined (zero variance)
    std::optional<double> spearman;
};

struct CorrelationResult {
    std::vector<CorrelationRow> rows;
    std::vector<std::string> failed_labels;  // variants excluded after errors
    // identity metric name -> planning metric name -> coefficients
    std::map<std::string, std::map<std::string, CorrelationCell>> table;
    std::vector<ExperimentResult> sub_results;  // traces for persistence to disk
    std::vector<Trace> planning_traces;         // one per surviving variant
};

// One five-metric suite plus the fixed planning task per variant, then
// Pearson/Spearman between identity metrics (and composite) and planning
// metrics across variants. Variants vary scripted-backend knobs, so this
// study always runs the scripted backend built from base_backend.
CorrelationResult run_correlation_study(const ExperimentSpec& spec, const AgentProfile& profile,
                                        const ScoringSpec& scoring,
                                        const ScriptedDriftConfig& base_backend,
                                        const PlanMaster& master, Judge& judge,
                                        const GenerationParams& params, std::int64_t base_seed,
                                        int concurrency);

// The fixed sub-experiment conditions the correlation study runs, in run
// order; variants differ only through backend knobs, never protocol shape.
const std::vector<std::pair<ExperimentKind, std::string>>& correlation_sub_conditions();

// Sub-experiment spec for one variant and metric; run id pattern
// "<study>:<label>:<kind>" (planning trace: "<study>:<label>:planning").
ExperimentSpec correlation_sub_spec(const ExperimentSpec& spec, const std::string& label,
                                    ExperimentKind kind, const std::string& condition);

// (Re)computes result.table from result.rows; cells with undefined
// coefficients (fewer than two rows, or zero variance) stay empty optionals.
void fill_correlation_table(CorrelationResult& result);

// group labels in run order: control, perturb-norecovery, perturb-recovery
const std::vector<std::string>& causality_groups();

// step score for one causality task step, given the probe answer
using StepScorer = std::function<double(int step, const std::string& answer)>;

// the built-in oracle task: full credit iff the answer equals the profile's
// identity line, the configured floor otherwise
StepScorer oracle_step_scorer(const AgentProfile& profile, double floor);

struct CausalityGroupResult {
    std::string group;
    std::vector<std::vector<double>> per_trial_steps;  // [trial][step]
    std::vector<Trace> traces;
};

struct CausalityResult {
    std::vector<CausalityGroupResult> groups;  // control, perturb-norecovery, perturb-recovery
    int perturb_step = 0;
    double floor = 0.0;
};

// Three groups over the same multi-step task: control untouched; both
// perturb groups get the perturbation before step perturb_step's prompt;
// the recovery group gets a strong correction after step perturb_step+1.
CausalityResult run_causality_study(const ExperimentSpec& spec, const AgentProfile& profile,
                                    const BackendFactory& factory,
                                    const GenerationParams& params, std::int64_t base_seed,
                                    int concurrency, const StepScorer& scorer = {});

// Runs body(trial) for trial in [0, trials) across worker threads capped at
// concurrency; the first failing trial's exception is rethrown after all
// workers finish.
void parallel_trials(int trials, int concurrency, const std::function<void(int)>& body);

}  // namespace aie
