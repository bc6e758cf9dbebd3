#include "aie/trace_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>

#include <json.hpp>

#include "aie/errors.hpp"

namespace aie {

namespace {

using ordered_json = nlohmann::ordered_json;

// serializes appends per file path, so concurrent runs over distinct files
// never contend and same-file writers never interleave records
std::mutex& file_mutex(const std::string& path) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::mutex> registry;
    std::lock_guard<std::mutex> lock(registry_mutex);
    return registry[path];
}

}  // namespace

std::string format_timestamp(std::chrono::system_clock::time_point tp) {
    using namespace std::chrono;
    const auto ms_point = time_point_cast<milliseconds>(tp);
    const auto seconds_point = floor<seconds>(ms_point);
    const int millis = static_cast<int>((ms_point - seconds_point).count());
    const std::time_t tt = system_clock::to_time_t(seconds_point);
    std::tm utc{};
    gmtime_r(&tt, &utc);
    char buffer[96];
    std::snprintf(buffer, sizeof(buffer), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                  utc.tm_year + 1900, utc.tm_mon + 1, utc.tm_mday, utc.tm_hour, utc.tm_min,
                  utc.tm_sec, millis);
    return buffer;
}

std::chrono::system_clock::time_point parse_timestamp(const std::string& iso) {
    std::tm utc{};
    int millis = 0;
    if (std::sscanf(iso.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3dZ", &utc.tm_year, &utc.tm_mon,
                    &utc.tm_mday, &utc.tm_hour, &utc.tm_min, &utc.tm_sec, &millis) != 7)
        throw ParseError("timestamp '" + iso + "' is not ISO-8601 with milliseconds");
    utc.tm_year -= 1900;
    utc.tm_mon -= 1;
    const std::time_t tt = timegm(&utc);
    return std::chrono::system_clock::from_time_t(tt) + std::chrono::milliseconds(millis);
}

std::string trace_file_path(const std::string& dir, const std::string& run_id) {
    return (std::filesystem::path(dir) / "traces" / (run_id + ".jsonl")).string();
}

std::string turn_to_json_line(const Trace& trace, const Turn& turn) {
    ordered_json record;
    record["run_id"] = trace.run_id;
    record["trial"] = trace.trial;
    record["turn"] = turn.index;
    record["role"] = to_string(turn.role);
    record["content"] = turn.content;
    record["tags"] = turn.tags;
    record["seed"] = trace.seed;
    record["conditions"] = trace.condition_labels;
    record["ts"] = format_timestamp(turn.wall_time);
    return record.dump();
}

std::string write_trace(const std::string& dir, const Trace& trace) {
    const std::string path = trace_file_path(dir, trace.run_id);
    std::error_code ec;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path(), ec);
    if (ec) throw IoError("cannot create " + path + ": " + ec.message());
    std::lock_guard<std::mutex> lock(file_mutex(path));
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for appending");
    for (const Turn& turn : trace.turns) out << turn_to_json_line(trace, turn) << '\n';
    out.flush();
    if (!out) throw IoError("write to " + path + " failed");
    return path;
}

std::vector<Trace> read_traces(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file + " for reading");
    std::map<int, Trace> by_trial;
    std::map<int, std::vector<Turn>> turns_by_trial;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json record;
        try {
            record = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(file + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            const int trial = record.at("trial").get<int>();
            Trace& trace = by_trial[trial];
            if (trace.turns.empty() && turns_by_trial[trial].empty()) {
                trace.run_id = record.at("run_id").get<std::string>();
                trace.trial = trial;
                trace.seed = record.at("seed").get<std::int64_t>();
                trace.condition_labels = record.at("conditions").get<Tags>();
            }
            Turn turn;
            turn.index = record.at("turn").get<int>();
            turn.role = role_from_string(record.at("role").get<std::string>());
            turn.content = record.at("content").get<std::string>();
            turn.tags = record.at("tags").get<Tags>();
            turn.wall_time = parse_timestamp(record.at("ts").get<std::string>());
            turns_by_trial[trial].push_back(std::move(turn));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(file + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    std::vector<Trace> traces;
    traces.reserve(by_trial.size());
    for (auto& [trial, trace] : by_trial) {
        auto& turns = turns_by_trial[trial];
        std::stable_sort(turns.begin(), turns.end(),
                         [](const Turn& a, const Turn& b) { return a.index < b.index; });
        trace.turns = std::move(turns);
        traces.push_back(std::move(trace));
    }
    return traces;
}

}  // namespace aie
