#pragma once

// File and wire formats: topology JSON, workload CSV, telemetry line-JSON,
// and the JSON shape of reports, calibrations and recommendations.

#include "dctwin/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dctwin {

using json = nlohmann::json;

void to_json(json& j, const PowerModelParams& p);
void from_json(const json& j, PowerModelParams& p);
void to_json(json& j, const Window& w);
void from_json(const json& j, Window& w);
void to_json(json& j, const TelemetrySample& s);
void from_json(const json& j, TelemetrySample& s);
void to_json(json& j, const CalibrationResult& c);
void from_json(const json& j, CalibrationResult& c);
void to_json(json& j, const TimedValue& v);
void from_json(const json& j, TimedValue& v);
void to_json(json& j, const Recommendation& r);
void from_json(const json& j, Recommendation& r);
void to_json(json& j, const Fragment& f);
void from_json(const json& j, Fragment& f);
void to_json(json& j, const WorkloadTask& t);
void from_json(const json& j, WorkloadTask& t);

std::string to_string(SampleSource s);
std::string to_string(RecommendationKind k);
std::string to_string(RecommendationStatus s);
RecommendationStatus parse_status(const std::string& text);

std::int64_t to_epoch_ms(WallClock::time_point t);
WallClock::time_point from_epoch_ms(std::int64_t ms);

/// Topology file: {name, hosts:[{id, core_count, core_frequency_mhz, memory_mib,
/// p_idle_w, p_max_w}]}. Missing power fields are an InvalidTopology error.
Topology topology_from_json(const json& j, double default_r = 2.0);
json topology_to_json(const Topology& t);
Topology read_topology_file(const std::filesystem::path& path, double default_r = 2.0);
void write_topology_file(const std::filesystem::path& path, const Topology& t);

inline constexpr const char* kWorkloadCsvHeader =
    "task_id,submit_time_s,core_request,fragment_index,duration_s,cpu_demand_mhz";

/// One row per fragment; fragment_index is 0-based and contiguous per task.
std::vector<WorkloadTask> read_workload_csv(std::istream& in);
std::vector<WorkloadTask> read_workload_file(const std::filesystem::path& path);
void write_workload_csv(std::ostream& out, const std::vector<WorkloadTask>& tasks);

/// Telemetry record: {"ts", "power_w", "cpu_util", "source"}.
std::string format_telemetry_line(const TelemetrySample& s);
TelemetrySample parse_telemetry_line(const std::string& line, std::size_t line_no);
std::vector<TelemetrySample> read_telemetry_file(const std::filesystem::path& path);

/// Wall-clock timestamps are left out unless requested so that report files are
/// reproducible byte for byte.
json report_to_json(const WindowReport& r, bool include_wall_clock = false);
WindowReport report_from_json(const json& j);
json metadata_to_json(const RunMetadata& m, bool include_wall_clock = true);
RunMetadata metadata_from_json(const json& j);

} // namespace dctwin
