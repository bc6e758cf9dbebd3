#include "aie/report_io.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "aie/errors.hpp"
#include "aie/planning.hpp"
#include "aie/stats.hpp"
#include "aie/trace_io.hpp"

namespace aie {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kUndefinedCell = "undefined (zero variance)";

ordered_json json_number(double value) { return ordered_json(value); }

ordered_json recovery_to_json(const RecoveryResult& recovery) {
    ordered_json out;
    out["r_k"] = recovery.r_k;
    if (recovery.speed)
        out["speed"] = *recovery.speed;
    else
        out["speed"] = nullptr;
    out["stability"] = recovery.stability;
    return out;
}

ordered_json series_to_json(const DriftSeries& series) {
    ordered_json out = ordered_json::array();
    for (const auto& [turn, value] : series) out.push_back({turn, value});
    return out;
}

ordered_json report_to_json(const MetricReport& report) {
    ordered_json out;
    if (report.identifiability) out["identifiability"] = json_number(*report.identifiability);
    if (report.continuity) out["continuity"] = json_number(*report.continuity);
    if (report.consistency) out["consistency"] = json_number(*report.consistency);
    if (report.persistence) out["persistence"] = json_number(*report.persistence);
    if (report.recovery) out["recovery"] = recovery_to_json(*report.recovery);
    if (report.composite) out["composite"] = json_number(*report.composite);
    if (report.drift) out["drift"] = series_to_json(*report.drift);
    if (report.attribute_drift) {
        ordered_json radar;
        for (const auto& [attr, series] : *report.attribute_drift)
            radar[attr] = series_to_json(series);
        out["radar"] = std::move(radar);
    }
    return out;
}

ordered_json summary_to_json(const SampleSummary& summary) {
    ordered_json out;
    out["n"] = summary.n;
    out["mean"] = summary.mean;
    if (summary.sd) out["sd"] = *summary.sd;
    out["ci_low"] = summary.ci_low;
    out["ci_high"] = summary.ci_high;
    out["ci_level"] = summary.ci_level;
    return out;
}

ordered_json experiment_to_json(const ExperimentResult& result) {
    ordered_json out;
    out["run_id"] = result.run_id;
    out["experiment"] = to_string(result.spec.experiment);
    out["condition"] = result.spec.condition;

    ordered_json trials = ordered_json::array();
    std::map<std::string, std::vector<double>> per_metric;
    for (const auto& trial : result.trials) {
        ordered_json row;
        row["trial"] = trial.trial;
        row["seed"] = trial.seed;
        row["metrics"] = report_to_json(trial.report);
        trials.push_back(std::move(row));
        for (const auto& [name, value] : trial.report.present_scores())
            per_metric[name].push_back(value);
        if (trial.report.composite)
            per_metric["composite"].push_back(*trial.report.composite);
    }
    out["trials"] = std::move(trials);

    ordered_json aggregate;
    for (const auto& [name, values] : per_metric)
        aggregate[name] = summary_to_json(summarize(values, 0.95, 2000, 0));
    out["aggregate"] = std::move(aggregate);
    return out;
}

ordered_json cell_value_to_json(const std::optional<double>& value) {
    if (!value) return ordered_json(kUndefinedCell);
    return json_number(*value);
}

ordered_json correlation_to_json(const CorrelationResult& correlation) {
    ordered_json out;
    ordered_json rows = ordered_json::array();
    for (const auto& row : correlation.rows) {
        ordered_json entry;
        entry["label"] = row.label;
        entry["identifiability"] = row.identifiability;
        entry["continuity"] = row.continuity;
        entry["consistency"] = row.consistency;
        entry["persistence"] = row.persistence;
        entry["recovery"] = row.recovery;
        entry["composite"] = row.composite;
        entry["toolkit_integrity"] = row.structural.toolkit_integrity;
        entry["stage_count_accuracy"] = row.structural.stage_count_accuracy;
        entry["structural_completeness"] = row.structural.structural_completeness;
        entry["tool_appropriateness"] = row.tool_appropriateness;
        entry["description_consistency"] = row.description_consistency;
        entry["overall_quality"] = row.overall_quality;
        rows.push_back(std::move(entry));
    }
    out["rows"] = std::move(rows);
    out["failed"] = correlation.failed_labels;

    ordered_json table;
    for (const auto& [identity_name, cells] : correlation.table) {
        ordered_json inner;
        for (const auto& [planning_name, cell] : cells) {
            ordered_json pair;
            pair["pearson"] = cell_value_to_json(cell.pearson);
            pair["spearman"] = cell_value_to_json(cell.spearman);
            inner[planning_name] = std::move(pair);
        }
        table[identity_name] = std::move(inner);
    }
    out["table"] = std::move(table);
    return out;
}

ordered_json causality_to_json(const CausalityResult& causality) {
    ordered_json out;
    out["perturb_step"] = causality.perturb_step;
    out["floor"] = causality.floor;
    ordered_json groups = ordered_json::array();
    for (const auto& group : causality.groups) {
        ordered_json entry;
        entry["group"] = group.group;
        entry["per_trial_steps"] = group.per_trial_steps;
        std::vector<double> means;
        if (!group.per_trial_steps.empty()) {
            const std::size_t steps = group.per_trial_steps.front().size();
            means.assign(steps, 0.0);
            for (const auto& trial : group.per_trial_steps)
                for (std::size_t i = 0; i < steps && i < trial.size(); ++i) means[i] += trial[i];
            for (double& m : means) m /= static_cast<double>(group.per_trial_steps.size());
        }
        entry["step_means"] = means;
        groups.push_back(std::move(entry));
    }
    out["groups"] = std::move(groups);
    return out;
}

std::string optional_cell(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string{};
}

void metrics_rows_for(const ExperimentResult& result, std::string& out) {
    for (const auto& trial : result.trials) {
        const MetricReport& r = trial.report;
        out += csv_escape(to_string(result.spec.experiment));
        out += ',';
        out += csv_escape(result.spec.condition);
        out += ',';
        out += std::to_string(trial.trial);
        out += ',';
        out += optional_cell(r.identifiability);
        out += ',';
        out += optional_cell(r.continuity);
        out += ',';
        out += optional_cell(r.consistency);
        out += ',';
        out += optional_cell(r.persistence);
        out += ',';
        out += r.recovery ? format_double(r.recovery->final_r()) : std::string{};
        out += ',';
        out += optional_cell(r.composite);
        out += '\n';
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

// Re-derives one variant's correlation row from its stored sub-traces and
// planning trace. Throws when any piece is missing or malformed; the caller
// records the variant under failed_labels, matching the live runner.
CorrelationRow rebuild_correlation_row(const RunConfig& config, const ExperimentSpec& spec,
                                       const CorrelationVariant& variant,
                                       const std::string& runs_dir, CorrelationResult& result) {
    CorrelationRow row;
    row.label = variant.label;

    std::map<std::string, double> metric_means;
    for (const auto& [kind, condition] : correlation_sub_conditions()) {
        ExperimentSpec sub = correlation_sub_spec(spec, variant.label, kind, condition);
        const std::string path = trace_file_path(runs_dir, sub.name);
        std::vector<Trace> traces = read_traces(path);
        if (traces.empty()) throw IoError("no traces in " + path);

        ExperimentResult sub_result;
        sub_result.spec = sub;
        sub_result.run_id = sub.name;
        std::vector<double> values;
        for (const auto& trace : traces) {
            TrialResult trial;
            trial.trial = trace.trial;
            trial.seed = trace.seed;
            trial.report = score_trace(trace, sub, config.profile, config.scoring);
            trial.trace = trace;
            const auto scores = trial.report.present_scores();
            const auto it = scores.find(to_string(kind));
            if (it != scores.end()) values.push_back(it->second);
            sub_result.trials.push_back(std::move(trial));
        }
        if (values.empty()) throw IoError("no scored trials in " + path);
        metric_means[to_string(kind)] = std::accumulate(values.begin(), values.end(), 0.0) /
                                        static_cast<double>(values.size());
        result.sub_results.push_back(std::move(sub_result));
    }

    row.identifiability = metric_means.at("identifiability");
    row.continuity = metric_means.at("continuity");
    row.consistency = metric_means.at("consistency");
    row.persistence = metric_means.at("persistence");
    row.recovery = metric_means.at("recovery");
    row.composite = composite_stability(metric_means);

    const std::string plan_path =
        trace_file_path(runs_dir, spec.name + ":" + variant.label + ":planning");
    std::vector<Trace> plan_traces = read_traces(plan_path);
    if (plan_traces.empty()) throw IoError("no planning trace in " + plan_path);
    const Trace& plan_trace = plan_traces.front();

    if (!config.plan_master)
        throw ValidationError("plan", "correlation report rebuild needs the plan fixture");
    const PlanMaster& master = *config.plan_master;

    std::vector<StructuralPlanMetrics> structurals;
    std::vector<JudgeVerdict> verdicts;
    for (const auto& turn : plan_trace.turns) {
        if (turn.role == Role::agent && turn.tags.count("plan-answer")) {
            PlanCandidate candidate;
            try {
                candidate = parse_plan_candidate(turn.content,
                                                 static_cast<int>(master.stages.size()));
            } catch (const ParseFailure&) {
                candidate = PlanCandidate{{}, turn.content};
            }
            structurals.push_back(structural_plan_metrics(candidate, master));
        } else if (turn.role == Role::judge && turn.tags.count("judge-verdict")) {
            auto verdict = parse_judge_verdict_line(turn.content);
            if (!verdict)
                throw ParseError("unreadable judge verdict in " + plan_path + " turn " +
                                 std::to_string(turn.index));
            verdicts.push_back(std::move(*verdict));
        }
    }
    if (structurals.empty() || verdicts.size() != structurals.size())
        throw ParseError("planning trace " + plan_path + " has mismatched answer/verdict turns");

    for (const auto& s : structurals) {
        row.structural.toolkit_integrity += s.toolkit_integrity;
        row.structural.stage_count_accuracy += s.stage_count_accuracy;
        row.structural.structural_completeness += s.structural_completeness;
    }
    const double n_turns = static_cast<double>(structurals.size());
    row.structural.toolkit_integrity /= n_turns;
    row.structural.stage_count_accuracy /= n_turns;
    row.structural.structural_completeness /= n_turns;
    for (const auto& v : verdicts) {
        row.tool_appropriateness += v.tool_appropriateness;
        row.description_consistency += v.description_consistency;
        row.overall_quality += v.overall_quality;
    }
    row.tool_appropriateness /= n_turns;
    row.description_consistency /= n_turns;
    row.overall_quality /= n_turns;

    result.planning_traces.push_back(plan_trace);
    return row;
}

int count_judge_fallbacks(const CorrelationResult& correlation) {
    int count = 0;
    for (const auto& trace : correlation.planning_traces)
        for (const auto& turn : trace.turns)
            if (turn.role == Role::judge &&
                turn.content.find("remote judge unavailable") != std::string::npos)
                ++count;
    return count;
}

}  // namespace

std::string csv_escape(const std::string& field) {
    const bool needs_quotes =
        field.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out;
    out.reserve(field.size() + 2);
    out += '"';
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string report_json_text(const RunReports& reports) {
    ordered_json out;
    const auto now = std::chrono::time_point_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now());
    out["created"] = format_timestamp(now);

    ordered_json experiments = ordered_json::array();
    for (const auto& result : reports.experiments)
        experiments.push_back(experiment_to_json(result));
    if (reports.correlation)
        for (const auto& sub : reports.correlation->sub_results)
            experiments.push_back(experiment_to_json(sub));
    out["experiments"] = std::move(experiments);

    if (reports.correlation) out["correlation"] = correlation_to_json(*reports.correlation);
    if (reports.causality) out["causality"] = causality_to_json(*reports.causality);
    out["warnings"] = reports.warnings;
    return out.dump(2) + "\n";
}

std::string metrics_csv_text(const RunReports& reports) {
    std::string out = "experiment,condition,trial,I,C,S,P,R_K,composite\n";
    for (const auto& result : reports.experiments) metrics_rows_for(result, out);
    if (reports.correlation)
        for (const auto& sub : reports.correlation->sub_results) metrics_rows_for(sub, out);
    return out;
}

std::string drift_csv_text(const RunReports& reports) {
    std::string out = "run,trial,turn,distance\n";
    auto emit = [&out](const ExperimentResult& result) {
        for (const auto& trial : result.trials) {
            if (!trial.report.drift) continue;
            for (const auto& [turn, distance] : *trial.report.drift) {
                out += csv_escape(result.run_id);
                out += ',';
                out += std::to_string(trial.trial);
                out += ',';
                out += std::to_string(turn);
                out += ',';
                out += format_double(distance);
                out += '\n';
            }
        }
    };
    for (const auto& result : reports.experiments) emit(result);
    if (reports.correlation)
        for (const auto& sub : reports.correlation->sub_results) emit(sub);
    return out;
}

std::string radar_csv_text(const RunReports& reports) {
    std::string out = "run,trial,turn,attribute,similarity\n";
    auto emit = [&out](const ExperimentResult& result) {
        for (const auto& trial : result.trials) {
            if (!trial.report.attribute_drift) continue;
            for (const auto& [attribute, series] : *trial.report.attribute_drift) {
                for (const auto& [turn, similarity] : series) {
                    out += csv_escape(result.run_id);
                    out += ',';
                    out += std::to_string(trial.trial);
                    out += ',';
                    out += std::to_string(turn);
                    out += ',';
                    out += csv_escape(attribute);
                    out += ',';
                    out += format_double(similarity);
                    out += '\n';
                }
            }
        }
    };
    for (const auto& result : reports.experiments) emit(result);
    if (reports.correlation)
        for (const auto& sub : reports.correlation->sub_results) emit(sub);
    return out;
}

std::string correlations_csv_text(const CorrelationResult& correlation) {
    std::string out = "identity_metric,planning_metric,pearson,spearman\n";
    auto cell = [](const std::optional<double>& value) {
        return value ? format_double(*value) : std::string(kUndefinedCell);
    };
    for (const auto& [identity_name, cells] : correlation.table) {
        for (const auto& [planning_name, c] : cells) {
            out += csv_escape(identity_name);
            out += ',';
            out += csv_escape(planning_name);
            out += ',';
            out += csv_escape(cell(c.pearson));
            out += ',';
            out += csv_escape(cell(c.spearman));
            out += '\n';
        }
    }
    return out;
}

ReportPaths write_report(const std::string& dir, const RunReports& reports) {
    if (reports.empty()) throw EmptyReports("nothing to report: no experiment results present");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create report directory " + dir + ": " + ec.message());

    ReportPaths paths;
    paths.report_json = (std::filesystem::path(dir) / "report.json").string();
    paths.metrics_csv = (std::filesystem::path(dir) / "metrics.csv").string();
    paths.drift_csv = (std::filesystem::path(dir) / "drift.csv").string();
    paths.radar_csv = (std::filesystem::path(dir) / "radar.csv").string();

    write_text_file(paths.report_json, report_json_text(reports));
    write_text_file(paths.metrics_csv, metrics_csv_text(reports));
    write_text_file(paths.drift_csv, drift_csv_text(reports));
    write_text_file(paths.radar_csv, radar_csv_text(reports));
    if (reports.correlation) {
        paths.correlations_csv = (std::filesystem::path(dir) / "correlations.csv").string();
        write_text_file(paths.correlations_csv, correlations_csv_text(*reports.correlation));
    }
    return paths;
}

RunReports rebuild_reports(const RunConfig& config, const std::string& runs_dir) {
    RunReports reports;

    for (const auto& spec : config.experiments) {
        if (spec.experiment == ExperimentKind::correlation) {
            reports.correlation_spec = spec;
            CorrelationResult correlation;
            for (const auto& variant : spec.variants) {
                try {
                    correlation.rows.push_back(
                        rebuild_correlation_row(config, spec, variant, runs_dir, correlation));
                } catch (const std::exception& e) {
                    correlation.failed_labels.push_back(variant.label + ": " + e.what());
                }
            }
            fill_correlation_table(correlation);
            const int fallbacks = count_judge_fallbacks(correlation);
            if (fallbacks > 0)
                reports.warnings.push_back("remote judge unavailable for " +
                                           std::to_string(fallbacks) +
                                           " verdict(s); mock judge used");
            reports.correlation = std::move(correlation);
            continue;
        }
        if (spec.experiment == ExperimentKind::causality) {
            reports.causality_spec = spec;
            CausalityResult causality;
            causality.perturb_step = spec.perturb_step;
            causality.floor = spec.performance_floor;
            const StepScorer scorer =
                oracle_step_scorer(config.profile, spec.performance_floor);
            for (const auto& group : causality_groups()) {
                CausalityGroupResult group_result;
                group_result.group = group;
                const std::string path = trace_file_path(runs_dir, spec.name + ":" + group);
                for (const auto& trace : read_traces(path)) {
                    std::vector<double> steps;
                    for (int i = 1; i <= spec.task_steps; ++i) {
                        const auto answers = probe_answers(trace, "step:" + std::to_string(i));
                        if (answers.empty()) break;
                        steps.push_back(scorer(i, answers.front().second));
                    }
                    group_result.per_trial_steps.push_back(std::move(steps));
                    group_result.traces.push_back(trace);
                }
                causality.groups.push_back(std::move(group_result));
            }
            reports.causality = std::move(causality);
            continue;
        }

        ExperimentResult result;
        result.spec = spec;
        result.run_id = spec.name;
        const std::string path = trace_file_path(runs_dir, spec.name);
        for (const auto& trace : read_traces(path)) {
            TrialResult trial;
            trial.trial = trace.trial;
            trial.seed = trace.seed;
            trial.report = score_trace(trace, spec, config.profile, config.scoring);
            trial.trace = trace;
            result.trials.push_back(std::move(trial));
        }
        reports.experiments.push_back(std::move(result));
    }
    return reports;
}

}  // namespace aie
