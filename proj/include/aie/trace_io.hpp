#pragma once

#include <string>
#include <vector>

#include "aie/core.hpp"

namespace aie {

// <dir>/traces/<run_id>.jsonl
std::string trace_file_path(const std::string& dir, const std::string& run_id);

// One JSON object per line. Lossless for arbitrary content (newlines,
// quotes, unicode); timestamps carry millisecond precision, matching what
// append_turn records.
std::string turn_to_json_line(const Trace& trace, const Turn& turn);

// Appends one record per turn to the trace's file under dir, creating
// directories as needed; the write is serialized per file path and flushed
// before return. Returns the file path.
std::string write_trace(const std::string& dir, const Trace& trace);

// Reads every record in the file and reassembles traces grouped by trial,
// ordered by (trial, turn). Throws ParseError on malformed lines, IoError
// when the file cannot be read.
std::vector<Trace> read_traces(const std::string& file);

std::string format_timestamp(std::chrono::system_clock::time_point tp);
std::chrono::system_clock::time_point parse_timestamp(const std::string& iso);

}  // namespace aie
