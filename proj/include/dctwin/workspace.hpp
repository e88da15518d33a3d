#pragma once

// Shared file workspace:
//   config.json, state.json, telemetry.jsonl, calibrations.jsonl,
//   recommendations.jsonl, metadata.jsonl, reports/window-<k>.json

#include "dctwin/codec.hpp"
#include "dctwin/model.hpp"

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace dctwin {

/// Committed progress; written after each report so readers never see a
/// window whose report is missing.
struct WorkspaceState {
    std::int64_t committed_windows = 0;
    PowerModelParams current_params;
    bool current_params_calibrated = false;
};

class Workspace {
public:
    explicit Workspace(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path report_path(std::int64_t k) const;
    std::filesystem::path telemetry_log() const { return root_ / "telemetry.jsonl"; }
    std::filesystem::path calibrations_log() const { return root_ / "calibrations.jsonl"; }
    std::filesystem::path recommendations_log() const { return root_ / "recommendations.jsonl"; }
    std::filesystem::path metadata_log() const { return root_ / "metadata.jsonl"; }
    std::filesystem::path state_file() const { return root_ / "state.json"; }
    std::filesystem::path config_file() const { return root_ / "config.json"; }

    /// Creates the layout and removes derived outputs of a previous run. The
    /// telemetry log is append-only and kept.
    void prepare_fresh_run(const json& config);

    void write_report(const WindowReport& report) const;
    void append_calibration(const CalibrationResult& result) const;
    void append_metadata(std::int64_t window, const RunMetadata& metadata) const;
    void write_state(const WorkspaceState& state) const;

    bool readable() const;
    std::optional<WorkspaceState> read_state() const;
    /// Raw persisted report text, byte for byte.
    std::optional<std::string> read_report_text(std::int64_t k) const;
    std::optional<WindowReport> read_report(std::int64_t k) const;
    /// Reports of all committed windows, in order.
    std::vector<WindowReport> committed_reports() const;
    std::vector<json> read_metadata() const;

private:
    void append_line(const std::filesystem::path& path, const std::string& line) const;

    std::filesystem::path root_;
    mutable std::mutex append_mutex_;
};

/// Writes `content` to a temporary sibling and renames it into place.
void write_file_atomically(const std::filesystem::path& path, const std::string& content);

} // namespace dctwin
