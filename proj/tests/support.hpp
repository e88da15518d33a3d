#pragma once

// Helpers shared by the integration-style tests: scratch directories and
// ready-to-run twin configurations over synthetic traces.

#include "dctwin/orchestrator.hpp"
#include "dctwin/telemetry.hpp"

#include <filesystem>
#include <string>

namespace support {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / ("dctwin_" + name)) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

struct Scenario {
    dctwin::TwinConfig config;
    dctwin::telemetry::SyntheticTrace trace;
};

/// Writes a synthetic trace into `dir` and returns a Maximum-mode config that
/// replays it into `dir/workspace`.
inline Scenario make_scenario(const std::filesystem::path& dir, const dctwin::telemetry::GroundTruthProfile& profile,
                              dctwin::Seconds horizon, std::uint64_t seed) {
    Scenario s;
    s.trace = dctwin::telemetry::synthesize_ground_truth(profile, horizon, seed);
    dctwin::telemetry::write_trace(dir, profile, s.trace);
    auto& c = s.config;
    c.window_duration = profile.window_duration;
    c.horizon = horizon;
    c.sim.topology = profile.topology;
    c.sim.sampling_granularity = profile.granularity;
    c.initial_r = profile.initial_r;
    c.calibration.history_span = 4 * profile.window_duration;
    c.telemetry.kind = dctwin::telemetry::TelemetrySource::Kind::FileReplay;
    c.telemetry.path = dir / "telemetry.jsonl";
    c.telemetry.granularity = profile.granularity;
    c.topology_path = dir / "topology.json";
    c.workload_path = dir / "workload.csv";
    c.workspace = dir / "workspace";
    c.run_label = profile.name;
    return s;
}

} // namespace support
