#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aie/config.hpp"
#include "aie/protocols.hpp"

namespace aie {

// Everything one run produced. Reports are deterministic functions of the
// traces plus the config; only report.json's "created" stamp varies.
struct RunReports {
    std::vector<ExperimentResult> experiments;  // the five single-metric kinds
    std::optional<ExperimentSpec> correlation_spec;
    std::optional<CorrelationResult> correlation;
    std::optional<ExperimentSpec> causality_spec;
    std::optional<CausalityResult> causality;
    std::vector<std::string> warnings;

    bool empty() const { return experiments.empty() && !correlation && !causality; }
};

struct ReportPaths {
    std::string report_json;
    std::string metrics_csv;
    std::string drift_csv;
    std::string radar_csv;
    std::string correlations_csv;  // empty when no correlation study ran
};

// RFC-4180: quotes fields containing comma, quote, CR or LF
std::string csv_escape(const std::string& field);

std::string report_json_text(const RunReports& reports);
std::string metrics_csv_text(const RunReports& reports);
std::string drift_csv_text(const RunReports& reports);
std::string radar_csv_text(const RunReports& reports);
std::string correlations_csv_text(const CorrelationResult& correlation);

// Writes report.json, metrics.csv, drift.csv, radar.csv and, when a
// correlation study ran, correlations.csv under dir.
ReportPaths write_report(const std::string& dir, const RunReports& reports);

// Rebuilds the full report set from stored traces under runs_dir and the
// config that produced them: every metric is re-derived through the same
// scoring path the run used, judge verdicts are read back from the recorded
// judge turns.
RunReports rebuild_reports(const RunConfig& config, const std::string& runs_dir);

}  // namespace aie
