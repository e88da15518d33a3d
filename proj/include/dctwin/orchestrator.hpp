#pragma once

// Lock-step twinning loop: per window of operation it collects ground truth,
// simulates with the current power exponent, runs the next calibration
// concurrently, and commits the window report before the next window starts.

#include "dctwin/calibrator.hpp"
#include "dctwin/model.hpp"
#include "dctwin/recommendations.hpp"
#include "dctwin/sim.hpp"
#include "dctwin/telemetry.hpp"
#include "dctwin/workspace.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <vector>

namespace dctwin {

struct ApiConfig {
    bool enabled = false;
    std::string address = "127.0.0.1:8080";
    bool control_enabled = false;
    std::string cors_origin = "*";
};

struct TwinConfig {
    Seconds window_duration = kDefaultWindowDuration;
    std::optional<Seconds> horizon;
    AccelerationMode acceleration = AccelerationMode::maximum();
    sim::SimConfig sim;
    calib::CalibrationConfig calibration;
    double initial_r = 2.0;
    std::filesystem::path workspace = "workspace";
    double nfr1_threshold = 10.0;
    double nfr1_fraction = 0.90;
    std::size_t recommendation_trailing_windows = 24;
    double underutilization_threshold = 0.30;
    ApiConfig api;
    std::string run_label = "dc-twin";
    telemetry::TelemetrySource telemetry;
    std::filesystem::path topology_path;
    std::filesystem::path workload_path;
    std::size_t telemetry_buffer = 1024;

    RecommendationRules recommendation_rules() const;
};

/// Throws InvalidConfig (or the topology/calibration validation errors).
void validate(const TwinConfig& config);

/// Reads a config file; relative paths resolve against its directory. Loads
/// the topology it references. Throws InvalidConfig / InvalidTopology.
TwinConfig load_config(const std::filesystem::path& path);
json config_to_json(const TwinConfig& config);

/// Wall-clock budget for one window: RealTime -> duration, Fixed(f) ->
/// duration / f, Maximum -> none. Maximum over a live source throws
/// LiveSourceWithMaxAcceleration.
std::optional<std::chrono::duration<double>> select_acceleration_deadline(const AccelerationMode& mode,
                                                                          const Window& window, bool live_source);

/// Throws InvalidMetadata when finished < started.
RunMetadata record_metadata(const Window& window, WallClock::time_point started, WallClock::time_point finished,
                            std::string correlation_id, AccelerationMode mode);

/// Runtime control shared between the loop and the API. Changes take effect
/// at window boundaries only.
class TwinControl {
public:
    void pause();
    void resume();
    void request_acceleration(AccelerationMode mode);
    void stop();

    bool paused() const;
    bool stop_requested() const;
    std::optional<AccelerationMode> take_acceleration_request();

    /// Blocks while paused. Returns true when resumed after having waited.
    bool wait_while_paused();

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    bool paused_ = false;
    bool stopped_ = false;
    std::optional<AccelerationMode> requested_;
};

struct RunOptions {
    std::shared_ptr<TwinControl> control;
    std::shared_ptr<RecommendationStore> recommendations;
    /// Live feed used instead of opening config.telemetry (Stream sources).
    std::shared_ptr<telemetry::TelemetryFeed> feed;
    std::function<void(const WindowReport&)> on_report;
    /// Called once the workspace is prepared, before window 0.
    std::function<void()> on_started;
};

struct RunSummary {
    std::vector<WindowReport> reports;
    std::size_t stalled_windows = 0;
    std::size_t calibrations_succeeded = 0;
    std::size_t calibrations_failed = 0;
    std::size_t late_samples = 0;
    std::size_t duplicate_samples = 0;
    std::chrono::duration<double> wall_time{0};
};

/// Drives windows until the horizon or until the telemetry source is exhausted.
RunSummary run_loop(const TwinConfig& config, const std::vector<WorkloadTask>& workload, RunOptions options = {});

} // namespace dctwin
