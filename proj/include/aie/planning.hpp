#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aie/remote_client.hpp"

namespace aie {

// The ideal plan: named toolkit plus ordered stages, each naming its
// intended tool and how it should be used.
struct PlanMaster {
    struct Stage {
        std::string intended_tool;
        std::string usage_description;

        bool operator==(const Stage&) const = default;
    };

    std::string objective;
    std::map<std::string, std::string> toolkit;  // name -> description
    std::vector<Stage> stages;

    // 3..5 stages, every intended tool present in the toolkit
    void validate() const;
};

// The master with all stage slots blanked; what the agent is asked to fill.
struct PlanSkeleton {
    std::string objective;
    std::map<std::string, std::string> toolkit;
    int n_stages = 0;
};

// An agent's populated plan. May have more or fewer stages than the
// skeleton; it is scored, never rejected.
struct PlanCandidate {
    struct Stage {
        std::string chosen_tool;
        std::string description;

        bool operator==(const Stage&) const = default;
    };

    std::vector<Stage> stages;
    std::string raw_text;
};

struct StructuralPlanMetrics {
    double toolkit_integrity = 0.0;
    double stage_count_accuracy = 0.0;
    double structural_completeness = 0.0;

    bool operator==(const StructuralPlanMetrics&) const = default;
};

struct JudgeVerdict {
    double tool_appropriateness = 0.0;
    double description_consistency = 0.0;
    double overall_quality = 0.0;
    std::string rationale;
};

// Parses a recorded judge turn ("tool_appropriateness=..; description_
// consistency=..; overall_quality=..; rationale=..") back into a verdict;
// nullopt when the line does not carry all three scores.
std::optional<JudgeVerdict> parse_judge_verdict_line(const std::string& content);

class Judge {
public:
    virtual ~Judge() = default;
    virtual JudgeVerdict evaluate(const PlanMaster& master, const PlanCandidate& candidate) = 0;
};

PlanSkeleton derive_skeleton(const PlanMaster& master);

// Primary grammar: "Stage <i>: tool=<name>; description=<text>" lines inside
// a ===PLAN=== / ===END=== fence; falls back to any "Stage <i>:" line with a
// "tool=" token. Duplicate stage indices: last wins. Throws ParseFailure
// when no stage line is found.
PlanCandidate parse_plan_candidate(const std::string& raw, int expected_stages);

StructuralPlanMetrics structural_plan_metrics(const PlanCandidate& candidate,
                                              const PlanMaster& master);

// Deterministic stand-in judge: tool choice graded against the intended
// tool (exact 1.0 / in-toolkit 0.5 / foreign 0.0), descriptions by
// normalized-edit similarity, overall as the mean of those two plus the
// three structural metrics.
class MockJudge final : public Judge {
public:
    JudgeVerdict evaluate(const PlanMaster& master, const PlanCandidate& candidate) override;
};

// Asks a chat endpoint to grade the candidate and return a JSON verdict.
// Any transport/parse failure downgrades to the mock judge; the fallback
// count surfaces in reports as a warning.
class RemoteJudge final : public Judge {
public:
    explicit RemoteJudge(RemoteChatConfig config);

    JudgeVerdict evaluate(const PlanMaster& master, const PlanCandidate& candidate) override;

    int fallback_count() const { return fallback_count_; }

private:
    RemoteChatConfig config_;
    MockJudge fallback_;
    int fallback_count_ = 0;
};

}  // namespace aie
