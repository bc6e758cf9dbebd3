#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aie/config.hpp"
#include "aie/errors.hpp"
#include "aie/planning.hpp"
#include "aie/protocols.hpp"
#include "aie/report_io.hpp"
#include "aie/trace_io.hpp"

namespace {

using aie::ExperimentKind;
using ordered_json = nlohmann::ordered_json;

// 0 success, 1 usage, 2 config/scoring input, 3 backend transport, 4 internal
int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const aie::NotFound& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const aie::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const aie::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const aie::NoSuchProbe& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const aie::UnknownFactKey& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const aie::MissingApiKey& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const aie::Transport& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const aie::HttpStatus& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const aie::MalformedResponse& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const aie::EmptyCompletion& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

void write_config_echo(const aie::RunConfig& config) {
    const std::string path =
        (std::filesystem::path(config.out_dir) / "config.json").string();
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec)
        throw aie::IoError("cannot create output directory " + config.out_dir + ": " +
                           ec.message());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw aie::IoError("cannot open for writing: " + path);
    const std::string text = aie::config_to_json(config);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw aie::IoError("write failed: " + path);
}

void run_command(const std::string& config_path, std::optional<int> trials,
                 std::optional<std::int64_t> seed, const std::string& backend,
                 const std::string& out_dir) {
    aie::RunConfig config = aie::load_config(config_path);
    if (trials)
        for (auto& spec : config.experiments) spec.trials = *trials;
    if (seed) config.base_seed = *seed;
    if (!backend.empty()) config.backend = backend;
    if (!out_dir.empty()) config.out_dir = out_dir;
    for (const auto& spec : config.experiments) spec.validate();

    const aie::BackendFactory factory = aie::make_backend_factory(config);

    std::unique_ptr<aie::Judge> judge;
    aie::RemoteJudge* remote_judge = nullptr;
    if (config.judge) {
        auto owned = std::make_unique<aie::RemoteJudge>(*config.judge);
        remote_judge = owned.get();
        judge = std::move(owned);
    } else {
        judge = std::make_unique<aie::MockJudge>();
    }

    aie::RunReports reports;
    for (const auto& spec : config.experiments) {
        std::cerr << "running " << aie::to_string(spec.experiment) << " '" << spec.name
                  << "' (" << spec.trials << " trials)\n";
        if (spec.experiment == ExperimentKind::correlation) {
            if (!config.plan_master)
                throw aie::ValidationError("plan",
                                           "correlation experiment '" + spec.name +
                                               "' needs a plan fixture path");
            aie::CorrelationResult correlation = aie::run_correlation_study(
                spec, config.profile, config.scoring, config.scripted, *config.plan_master,
                *judge, config.generation, config.base_seed, config.concurrency);
            for (const auto& sub : correlation.sub_results)
                for (const auto& trial : sub.trials) aie::write_trace(config.out_dir, trial.trace);
            for (const auto& trace : correlation.planning_traces)
                aie::write_trace(config.out_dir, trace);
            for (const auto& failed : correlation.failed_labels)
                reports.warnings.push_back("correlation variant failed, excluded: " + failed);
            if (remote_judge && remote_judge->fallback_count() > 0)
                reports.warnings.push_back(
                    "remote judge unavailable for " +
                    std::to_string(remote_judge->fallback_count()) +
                    " verdict(s); mock judge used");
            reports.correlation_spec = spec;
            reports.correlation = std::move(correlation);
        } else if (spec.experiment == ExperimentKind::causality) {
            aie::CausalityResult causality =
                aie::run_causality_study(spec, config.profile, factory, config.generation,
                                         config.base_seed, config.concurrency);
            for (const auto& group : causality.groups)
                for (const auto& trace : group.traces) aie::write_trace(config.out_dir, trace);
            reports.causality_spec = spec;
            reports.causality = std::move(causality);
        } else {
            aie::ExperimentResult result =
                aie::run_experiment(spec, config.profile, config.scoring, factory,
                                    config.generation, config.base_seed, config.concurrency);
            for (const auto& trial : result.trials) aie::write_trace(config.out_dir, trial.trace);
            reports.experiments.push_back(std::move(result));
        }
    }

    const aie::ReportPaths paths = aie::write_report(config.out_dir, reports);
    write_config_echo(config);
    std::cout << "wrote " << paths.report_json << "\n";
    std::cout << "wrote " << paths.metrics_csv << "\n";
    std::cout << "wrote " << paths.drift_csv << "\n";
    std::cout << "wrote " << paths.radar_csv << "\n";
    if (!paths.correlations_csv.empty()) std::cout << "wrote " << paths.correlations_csv << "\n";
    for (const auto& warning : reports.warnings) std::cerr << "warning: " << warning << "\n";
}

void score_command(const std::string& trace_path, const std::string& metric,
                   const std::string& config_path) {
    const aie::RunConfig config = aie::load_config(config_path);
    const std::vector<aie::Trace> traces = aie::read_traces(trace_path);
    if (traces.empty()) throw aie::IoError("no traces in " + trace_path);

    ordered_json out;
    out["trace"] = trace_path;
    out["metric"] = metric;
    ordered_json rows = ordered_json::array();
    for (const auto& trace : traces) {
        ordered_json row;
        row["trial"] = trace.trial;
        if (metric == "identifiability") {
            row["value"] = aie::score_identifiability(trace, config.profile, config.scoring);
        } else if (metric == "continuity") {
            row["value"] = aie::score_continuity(trace, config.scoring);
        } else if (metric == "consistency") {
            row["value"] = aie::score_consistency(trace, config.scoring);
        } else if (metric == "persistence") {
            row["value"] = aie::score_persistence(trace, config.scoring);
        } else if (metric == "recovery") {
            const aie::RecoveryResult recovery = aie::score_recovery(trace, config.scoring);
            row["r_k"] = recovery.r_k;
            if (recovery.speed)
                row["speed"] = *recovery.speed;
            else
                row["speed"] = nullptr;
            row["stability"] = recovery.stability;
            row["value"] = recovery.final_r();
        } else if (metric == "composite") {
            const aie::ExperimentSpec* spec = nullptr;
            for (const auto& candidate : config.experiments)
                if (candidate.name == trace.run_id) spec = &candidate;
            if (!spec)
                throw aie::ValidationError(
                    "metric", "composite needs an experiment named '" + trace.run_id +
                                  "' in the config");
            const aie::MetricReport report =
                aie::score_trace(trace, *spec, config.profile, config.scoring);
            if (!report.composite)
                throw aie::ValidationError("metric", "trace yields no composite score");
            row["value"] = *report.composite;
        } else {
            throw aie::ValidationError(
                "metric",
                "must be one of: identifiability, continuity, consistency, persistence, "
                "recovery, composite");
        }
        rows.push_back(std::move(row));
    }
    out["trials"] = std::move(rows);
    std::cout << out.dump(2) << "\n";
}

void report_command(const std::string& runs_dir, const std::string& format) {
    const std::string config_path =
        (std::filesystem::path(runs_dir) / "config.json").string();
    const aie::RunConfig config = aie::load_config(config_path);
    const aie::RunReports reports = aie::rebuild_reports(config, runs_dir);
    if (format == "csv")
        std::cout << aie::metrics_csv_text(reports);
    else
        std::cout << aie::report_json_text(reports);
}

void validate_command(const std::string& config_path) {
    aie::load_config(config_path);
    std::cout << "ok: " << config_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agent identity metrics over recorded interaction traces"};
    app.require_subcommand(1);

    std::string config_path;
    std::string trace_path;
    std::string metric;
    std::string runs_dir;
    std::string format = "json";
    std::string backend;
    std::string out_dir;
    std::optional<int> trials;
    std::optional<std::int64_t> seed;

    CLI::App* run = app.add_subcommand("run", "execute configured experiments, write traces and reports");
    run->add_option("--config", config_path, "run config document")->required();
    run->add_option("--trials", trials, "override trial count for every experiment");
    run->add_option("--seed", seed, "override the base seed");
    run->add_option("--backend", backend, "override the backend")
        ->check(CLI::IsMember({"scripted", "remote"}));
    run->add_option("--out", out_dir, "override the output directory");

    CLI::App* score = app.add_subcommand("score", "recompute one metric from a stored trace file");
    score->add_option("--trace", trace_path, "trace file (.jsonl)")->required();
    score->add_option("--metric", metric, "metric name")->required();
    score->add_option("--config", config_path, "run config document")->required();

    CLI::App* report = app.add_subcommand("report", "re-aggregate reports from stored traces");
    report->add_option("--runs", runs_dir, "run output directory")->required();
    report->add_option("--format", format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));

    CLI::App* validate = app.add_subcommand("validate", "parse and validate a config, write nothing");
    validate->add_option("--config", config_path, "run config document")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (run->parsed())
        return guarded([&] { run_command(config_path, trials, seed, backend, out_dir); });
    if (score->parsed()) return guarded([&] { score_command(trace_path, metric, config_path); });
    if (report->parsed()) return guarded([&] { report_command(runs_dir, format); });
    return guarded([&] { validate_command(config_path); });
}
