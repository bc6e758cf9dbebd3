#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aie/core.hpp"

namespace aie {

enum class ChatRole { system, user, assistant };

struct ChatMessage {
    ChatRole role = ChatRole::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

const char* to_string(ChatRole role);

struct GenerationParams {
    double temperature = 0.0;
    std::optional<std::int64_t> seed;
    int max_output_tokens = 512;
};

enum class CorrectionStrength { weak, strong };

const char* to_string(CorrectionStrength strength);

// A typed probe. Probe content carries a machine-parsable marker prefix
// ("[probe:identity] ...") so scripted backends can route it and traces stay
// auditable; freeform probes carry no marker.
struct Probe {
    enum class Kind { identity, attribute, recall, plan, freeform };
    Kind kind = Kind::freeform;
    std::string arg;   // attribute key / fact key
    std::string text;  // human-readable question

    std::string content() const;
    static std::optional<Probe> parse(std::string_view content);
};

// Fact messages are presented to backends as "[fact:<key>] <value>".
std::string fact_message(const std::string& key, const std::string& value);

// Pluggable agent. respond() is the only required operation; the remaining
// hooks carry protocol events that a stateful scripted backend must observe
// and a stateless remote backend sees purely through history (defaults are
// no-ops).
class AgentBackend {
public:
    virtual ~AgentBackend() = default;

    virtual std::string respond(const std::vector<ChatMessage>& history,
                                const GenerationParams& params) = 0;

    virtual void advance() {}       // one protocol step
    virtual void begin_session() {} // session break: notional reset, profile kept
    virtual void note_fact(const std::string& /*key*/, const std::string& /*value*/) {}
    virtual void perturb() {}
    virtual void correct(CorrectionStrength /*strength*/) {}
};

enum class CorrectionBehavior { restore_on_strong, partial_on_weak, ignore };

const char* to_string(CorrectionBehavior behavior);
CorrectionBehavior correction_behavior_from_string(std::string_view name);

// Deterministic drift agent configuration. Drift mutates drift_per_turn
// character positions per attribute per advance once the turn counter
// reaches drift_start_turn; positions and replacement characters derive
// from the seed alone.
struct ScriptedDriftConfig {
    AttributeMap base_attributes;
    int drift_per_turn = 0;
    int drift_start_turn = 1;
    std::optional<int> memory_window;  // nullopt = unbounded
    AttributeMap perturbation_attributes;
    CorrectionBehavior correction_behavior = CorrectionBehavior::partial_on_weak;
    double correction_rho = 0.5;
    double plan_quality = 1.0;  // fraction of plan stages emitted with valid tools
    std::uint64_t seed = 0;
};

// The ground-truth oracle backend. Fully deterministic in (config, history):
// identity probes render the current name/role line, attribute probes the
// current value, recall probes the stored fact when it is inside the memory
// window, plan probes a round-robin tool per stage, anything else echoes the
// last user message.
class ScriptedAgent final : public AgentBackend {
public:
    explicit ScriptedAgent(ScriptedDriftConfig config);

    std::string respond(const std::vector<ChatMessage>& history,
                        const GenerationParams& params) override;
    void advance() override;
    void begin_session() override;
    void note_fact(const std::string& key, const std::string& value) override;
    void perturb() override;
    void correct(CorrectionStrength strength) override;

    // direct probe entry point (respond() routes here after marker parsing)
    std::string respond_probe(const Probe& probe, const std::vector<ChatMessage>& history);

    const AttributeMap& attributes() const { return current_; }
    const ScriptedDriftConfig& config() const { return config_; }
    int current_turn() const { return turn_; }

private:
    std::string render_identity() const;
    std::string recall(const std::string& key) const;
    std::string build_plan(const std::string& prompt) const;

    ScriptedDriftConfig config_;
    AttributeMap current_;
    int turn_ = 0;
    struct Fact {
        std::string value;
        int turn = 0;
    };
    std::map<std::string, Fact> facts_;
    // mutations applied so far per flattened attribute key; drives the
    // fresh-positions-first visit order
    std::map<std::string, std::size_t> mutation_counts_;
};

// prompt with the distractor spliced in, wrapped in delimiter lines
enum class DistractorPlacement { prefix, suffix, interleave };

std::string inject_distractor(const std::string& prompt, const std::string& distractor,
                              DistractorPlacement placement);

// Appends an environment turn tagged "perturbation" (plus extra_tags) and
// flips the backend into its perturbed state (remote backends see only the
// text).
void apply_perturbation(Trace& trace, AgentBackend& backend,
                        const std::string& perturbation_prompt, Tags extra_tags = {});

// Appends a corrector turn tagged "correction:<strength>" (plus extra_tags)
// and lets the backend react per its correction behavior.
void apply_correction(Trace& trace, AgentBackend& backend, const std::string& correction_prompt,
                      CorrectionStrength strength, Tags extra_tags = {});

}  // namespace aie
