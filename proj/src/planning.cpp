#include "aie/planning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "aie/distance.hpp"
#include "aie/errors.hpp"

namespace aie {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// "Stage <i>: tool=<name>; description=<text>" -> (i, stage); nullopt when
// the line is not a stage line with a tool token
std::optional<std::pair<int, PlanCandidate::Stage>> parse_stage_line(const std::string& line) {
    std::string t = trim(line);
    if (t.rfind("Stage ", 0) != 0) return std::nullopt;
    std::size_t colon = t.find(':');
    if (colon == std::string::npos) return std::nullopt;
    int index = 0;
    try {
        index = std::stoi(t.substr(6, colon - 6));
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (index < 1) return std::nullopt;
    std::size_t tool_at = t.find("tool=", colon);
    if (tool_at == std::string::npos) return std::nullopt;
    std::size_t tool_end = t.find(';', tool_at);
    PlanCandidate::Stage stage;
    stage.chosen_tool = trim(tool_end == std::string::npos
                                 ? t.substr(tool_at + 5)
                                 : t.substr(tool_at + 5, tool_end - (tool_at + 5)));
    std::size_t desc_at = t.find("description=", colon);
    if (desc_at != std::string::npos) stage.description = trim(t.substr(desc_at + 12));
    return std::make_pair(index, stage);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double edit_similarity(const std::string& a, const std::string& b) {
    return 1.0 - std::min(1.0, normalized_edit_distance(a, b));
}

std::string format2(double v) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << v;
    return out.str();
}

}  // namespace

void PlanMaster::validate() const {
    if (stages.size() < 3 || stages.size() > 5)
        throw ValidationError("stages", "plan master needs 3 to 5 stages");
    for (const Stage& stage : stages)
        if (toolkit.find(stage.intended_tool) == toolkit.end())
            throw ValidationError("stages", "intended tool '" + stage.intended_tool +
                                                "' is not in the toolkit");
}

PlanSkeleton derive_skeleton(const PlanMaster& master) {
    master.validate();
    PlanSkeleton skeleton;
    skeleton.objective = master.objective;
    skeleton.toolkit = master.toolkit;
    skeleton.n_stages = static_cast<int>(master.stages.size());
    return skeleton;
}

PlanCandidate parse_plan_candidate(const std::string& raw, int expected_stages) {
    (void)expected_stages;  // stage mismatches are scored, not rejected
    std::vector<std::string> lines;
    {
        std::istringstream in(raw);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    }

    // locate the fenced block if present
    std::size_t begin = lines.size();
    std::size_t end = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]) == "===PLAN===") {
            begin = i + 1;
            break;
        }
    }
    if (begin < lines.size()) {
        for (std::size_t i = begin; i < lines.size(); ++i) {
            if (trim(lines[i]) == "===END===") {
                end = i;
                break;
            }
        }
    }

    std::map<int, PlanCandidate::Stage> by_index;
    auto scan = [&](std::size_t from, std::size_t to) {
        for (std::size_t i = from; i < to; ++i)
            if (auto parsed = parse_stage_line(lines[i])) by_index[parsed->first] = parsed->second;
    };
    if (begin < lines.size() && end <= lines.size()) scan(begin, std::min(end, lines.size()));
    if (by_index.empty()) scan(0, lines.size());  // fallback: whole text
    if (by_index.empty()) throw ParseFailure("no plan stage line found");

    PlanCandidate candidate;
    candidate.raw_text = raw;
    for (auto& [index, stage] : by_index) candidate.stages.push_back(std::move(stage));
    return candidate;
}

StructuralPlanMetrics structural_plan_metrics(const PlanCandidate& candidate,
                                              const PlanMaster& master) {
    StructuralPlanMetrics out;
    const std::size_t n_c = candidate.stages.size();
    const std::size_t n_m = master.stages.size();
    if (n_c == 0) return out;  // all-zero by convention

    std::size_t in_toolkit = 0;
    std::size_t filled = 0;
    for (const auto& stage : candidate.stages) {
        if (master.toolkit.find(stage.chosen_tool) != master.toolkit.end()) ++in_toolkit;
        if (!stage.chosen_tool.empty() && !stage.description.empty()) ++filled;
    }
    out.toolkit_integrity = static_cast<double>(in_toolkit) / static_cast<double>(n_c);
    out.stage_count_accuracy =
        static_cast<double>(std::min(n_c, n_m)) / static_cast<double>(std::max(n_c, n_m));
    out.structural_completeness =
        std::min(1.0, static_cast<double>(filled) / static_cast<double>(n_m));
    return out;
}

JudgeVerdict MockJudge::evaluate(const PlanMaster& master, const PlanCandidate& candidate) {
    JudgeVerdict verdict;
    StructuralPlanMetrics structural = structural_plan_metrics(candidate, master);
    const std::size_t n_c = candidate.stages.size();

    if (n_c > 0) {
        double tool_sum = 0.0;
        double desc_sum = 0.0;
        for (std::size_t i = 0; i < n_c; ++i) {
            const auto& stage = candidate.stages[i];
            const PlanMaster::Stage* intended =
                i < master.stages.size() ? &master.stages[i] : nullptr;
            if (intended && stage.chosen_tool == intended->intended_tool)
                tool_sum += 1.0;
            else if (master.toolkit.find(stage.chosen_tool) != master.toolkit.end())
                tool_sum += 0.5;
            desc_sum += edit_similarity(stage.description,
                                        intended ? intended->usage_description : std::string());
        }
        verdict.tool_appropriateness = tool_sum / static_cast<double>(n_c);
        verdict.description_consistency = desc_sum / static_cast<double>(n_c);
    }
    verdict.overall_quality =
        (verdict.tool_appropriateness + verdict.description_consistency +
         structural.toolkit_integrity + structural.stage_count_accuracy +
         structural.structural_completeness) /
        5.0;
    verdict.rationale = "structural rubric: tools " + format2(verdict.tool_appropriateness) +
                        ", descriptions " + format2(verdict.description_consistency) +
                        ", integrity " + format2(structural.toolkit_integrity) +
                        ", stage count " + format2(structural.stage_count_accuracy) +
                        ", completeness " + format2(structural.structural_completeness);
    return verdict;
}

RemoteJudge::RemoteJudge(RemoteChatConfig config) : config_(std::move(config)) {
    config_.validate();
}

JudgeVerdict RemoteJudge::evaluate(const PlanMaster& master, const PlanCandidate& candidate) {
    std::string prompt =
        "Grade the candidate plan against the master plan.\n"
        "Objective: " +
        master.objective + "\nToolkit:";
    for (const auto& [name, description] : master.toolkit)
        prompt += "\n- " + name + ": " + description;
    prompt += "\nMaster stages:";
    for (std::size_t i = 0; i < master.stages.size(); ++i)
        prompt += "\nStage " + std::to_string(i + 1) + ": tool=" + master.stages[i].intended_tool +
                  "; description=" + master.stages[i].usage_description;
    prompt += "\nCandidate:\n" + candidate.raw_text;
    prompt +=
        "\nReply with one JSON object: {\"tool_appropriateness\": x, "
        "\"description_consistency\": y, \"overall_quality\": z, \"rationale\": \"...\"} "
        "with x, y, z in [0,1].";

    try {
        GenerationParams params;
        params.temperature = 0.0;
        std::string reply = remote_respond(
            config_, {{ChatRole::system, "You are a strict plan-quality grader."},
                      {ChatRole::user, prompt}},
            params);
        std::size_t open = reply.find('{');
        std::size_t close = reply.rfind('}');
        if (open == std::string::npos || close == std::string::npos || close < open)
            throw MalformedResponse("judge reply contains no JSON object");
        nlohmann::json parsed = nlohmann::json::parse(reply.substr(open, close - open + 1));
        JudgeVerdict verdict;
        verdict.tool_appropriateness = clamp01(parsed.at("tool_appropriateness").get<double>());
        verdict.description_consistency =
            clamp01(parsed.at("description_consistency").get<double>());
        verdict.overall_quality = clamp01(parsed.at("overall_quality").get<double>());
        verdict.rationale = parsed.value("rationale", std::string("(none)"));
        return verdict;
    } catch (const std::exception&) {
        ++fallback_count_;
        JudgeVerdict verdict = fallback_.evaluate(master, candidate);
        verdict.rationale = "remote judge unavailable; " + verdict.rationale;
        return verdict;
    }
}

std::optional<JudgeVerdict> parse_judge_verdict_line(const std::string& content) {
    auto score_after = [&](const std::string& key) -> std::optional<double> {
        const std::string marker = key + "=";
        const std::size_t at = content.find(marker);
        if (at == std::string::npos) return std::nullopt;
        const std::size_t start = at + marker.size();
        const std::size_t end = content.find(';', start);
        const std::string token =
            content.substr(start, end == std::string::npos ? std::string::npos : end - start);
        try {
            std::size_t used = 0;
            const double value = std::stod(token, &used);
            if (used == 0) return std::nullopt;
            return value;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };
    const auto tools = score_after("tool_appropriateness");
    const auto descriptions = score_after("description_consistency");
    const auto overall = score_after("overall_quality");
    if (!tools || !descriptions || !overall) return std::nullopt;
    JudgeVerdict verdict;
    verdict.tool_appropriateness = *tools;
    verdict.description_consistency = *descriptions;
    verdict.overall_quality = *overall;
    const std::string marker = "rationale=";
    const std::size_t at = content.find(marker);
    if (at != std::string::npos) verdict.rationale = content.substr(at + marker.size());
    return verdict;
}

}  // namespace aie
