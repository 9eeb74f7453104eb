// SPDX-License-Identifier: Apache-2.0
//
// Run artifacts: trace and timing CSVs, metrics JSON, plot frames and the
// run manifest. Every CSV starts with its header row; numbers use the
// shortest decimal form that round-trips.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "impdr/sim.hpp"

namespace impdr::io {

inline constexpr int kSchemaVersion = 1;

[[nodiscard]] std::string format_number(double v);

/// One row per step:
///
///     step,time,solved,status,min_distance,
///     q0_x,q0_y,v0_x,v0_y,a0_x,a0_y, ...      per vehicle
///     t0_x,t0_y,r_model_0,r_eval_0, ...       per target
///
/// Acceleration cells are empty on the last row, target cells are empty
/// before a target is injected. Solver timings live in the timings file so
/// that reruns produce identical bytes.
void write_trace_csv(std::ostream& out, const sim::RunTrace& trace);

/// step,solved,solver_ms,status
void write_timings_csv(std::ostream& out, const sim::RunTrace& trace);

/// Metrics summary with schema_version, scenario, planner and failure fields.
[[nodiscard]] std::string metrics_json(const sim::RunTrace& trace);

/// The parts of a trace file that the plot exporter needs.
struct TraceTable {
    std::vector<double> time;
    std::vector<std::vector<Vec2>> vehicles;                   // [row][vehicle]
    std::vector<std::vector<std::optional<Vec2>>> targets;     // [row][target]
    std::vector<std::vector<std::optional<double>>> r_eval;    // [row][target]
};

/// Throws ParseError naming the line on malformed input.
[[nodiscard]] TraceTable read_trace_csv(std::istream& in, const std::string& source);

/// Row of the table closest to `t`, or none for an empty table.
[[nodiscard]] std::optional<std::size_t> row_at_time(const TraceTable& table, double t);

/// target,x,y,r_eval for the given row.
void write_frame_csv(std::ostream& out, const TraceTable& table, std::size_t row);

/// step,time,vehicle,x,y
void write_paths_csv(std::ostream& out, const TraceTable& table);

[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
    std::string command;
    std::optional<std::string> config_path;
    std::map<std::string, std::string> overrides;
    std::uint64_t seed{0};
    std::filesystem::path output_dir;
    std::vector<std::string> files;  // relative to output_dir
};

/// Hashes every listed file and writes manifest.json next to them.
void write_manifest(const RunManifest& manifest);

/// `flag` if given, else $IMPDR_OUTPUT_DIR, else ./impdr-out. Created if missing.
[[nodiscard]] std::filesystem::path output_directory(const std::optional<std::string>& flag);

/// Writes a whole file; throws InputError if it cannot.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace impdr::io
