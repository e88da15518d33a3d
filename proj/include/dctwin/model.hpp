#pragma once

// Shared domain types of the datacenter twin. All types are plain values.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dctwin {

/// Discrete time: integer seconds since the trace epoch.
using Seconds = std::int64_t;

inline constexpr Seconds kDefaultGranularity = 300;
inline constexpr Seconds kDefaultWindowDuration = 3600;
inline constexpr double kMinR = 0.5;
inline constexpr double kMaxR = 4.0;
/// Ground-truth samples below this power (W) are excluded from relative errors.
inline constexpr double kMapeEpsilonWatts = 1.0;

struct PowerModelParams {
    double p_idle = 0.0; // W
    double p_max = 0.0;  // W
    double r = 2.0;      // calibration exponent

    friend bool operator==(const PowerModelParams&, const PowerModelParams&) = default;
};

struct HostSpec {
    std::string id;
    int core_count = 0;
    double core_frequency_mhz = 0.0;
    std::int64_t memory_mib = 0;
    PowerModelParams power;

    double capacity_mhz() const { return static_cast<double>(core_count) * core_frequency_mhz; }

    friend bool operator==(const HostSpec&, const HostSpec&) = default;
};

struct Topology {
    std::string name;
    std::vector<HostSpec> hosts;

    int max_core_count() const;
    friend bool operator==(const Topology&, const Topology&) = default;
};

struct Fragment {
    Seconds duration = 0;
    double cpu_demand_mhz = 0.0; // aggregate over the task's cores

    friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct WorkloadTask {
    std::string id;
    Seconds submit_time = 0;
    int core_request = 1;
    std::vector<Fragment> fragments;

    Seconds total_duration() const;
    friend bool operator==(const WorkloadTask&, const WorkloadTask&) = default;
};

enum class SampleSource { GroundTruth, Prediction };

struct TelemetrySample {
    Seconds timestamp = 0;
    double power_w = 0.0;
    double cpu_utilization = 0.0;
    SampleSource source = SampleSource::GroundTruth;

    friend bool operator==(const TelemetrySample&, const TelemetrySample&) = default;
};

/// Half-open window of operation [start, end).
struct Window {
    std::int64_t index = 0;
    Seconds start = 0;
    Seconds end = 0;

    Seconds duration() const { return end - start; }
    bool contains(Seconds t) const { return t >= start && t < end; }
    friend bool operator==(const Window&, const Window&) = default;
};

Window window_at(std::int64_t index, Seconds duration);

/// Contiguous windows partitioning [0, horizon). The last window is included
/// whole when the horizon is not a multiple of the duration.
std::vector<Window> make_windows(Seconds duration, Seconds horizon);

struct CandidateScore {
    double r = 0.0;
    double mape_percent = 0.0;

    friend bool operator==(const CandidateScore&, const CandidateScore&) = default;
};

struct CalibrationResult {
    std::vector<CandidateScore> evaluated;
    double selected_r = 0.0;
    Seconds history_start = 0;
    Seconds history_end = 0;
    std::int64_t produced_in_window = 0;
    std::int64_t applies_from_window = 1;

    friend bool operator==(const CalibrationResult&, const CalibrationResult&) = default;
};

/// Index of the minimal-MAPE candidate; ties go to the smallest r.
std::size_t best_candidate(const std::vector<CandidateScore>& evaluated);

struct AccelerationMode {
    enum class Kind { RealTime, Fixed, Maximum };
    Kind kind = Kind::Maximum;
    double factor = 1.0; // only meaningful for Fixed

    static AccelerationMode real_time() { return {Kind::RealTime, 1.0}; }
    static AccelerationMode fixed(double f) { return {Kind::Fixed, f}; }
    static AccelerationMode maximum() { return {Kind::Maximum, 1.0}; }

    /// Parses "realtime", "fixed:<f>" or "max".
    static AccelerationMode parse(const std::string& text);
    std::string to_string() const;

    /// Simulated seconds per wall second; 0 means unpaced.
    double speedup() const;

    friend bool operator==(const AccelerationMode&, const AccelerationMode&) = default;
};

using WallClock = std::chrono::system_clock;

struct RunMetadata {
    WallClock::time_point simulation_started_at{};
    WallClock::time_point simulation_finished_at{};
    AccelerationMode acceleration_mode;
    std::string correlation_id;

    friend bool operator==(const RunMetadata&, const RunMetadata&) = default;
};

struct TimedValue {
    Seconds timestamp = 0;
    double value = 0.0;

    friend bool operator==(const TimedValue&, const TimedValue&) = default;
};

struct BiasCounts {
    std::int64_t over = 0;
    std::int64_t under = 0;
    std::int64_t exact = 0;

    std::int64_t total() const { return over + under + exact; }
    friend bool operator==(const BiasCounts&, const BiasCounts&) = default;
};

struct WindowReport {
    Window window;
    std::vector<TelemetrySample> predictions;
    std::vector<TelemetrySample> ground_truth;
    std::optional<double> mape_percent;
    PowerModelParams params_used;
    bool params_calibrated = false;
    std::optional<CalibrationResult> calibration;
    std::vector<TimedValue> performance_tflops;
    /// Keyed by hour bucket start (seconds).
    std::vector<TimedValue> efficiency_tflops_per_kwh;
    BiasCounts bias;
    bool complete = true;
    RunMetadata metadata;

    double mean_predicted_utilization() const;
    friend bool operator==(const WindowReport&, const WindowReport&) = default;
};

enum class RecommendationKind { Underutilization, AccuracyDegraded };
enum class RecommendationStatus { Pending, Approved, Rejected };

struct Recommendation {
    std::string id;
    std::int64_t created_in_window = 0;
    RecommendationKind kind = RecommendationKind::Underutilization;
    std::string summary;
    std::map<std::string, double> evidence;
    RecommendationStatus status = RecommendationStatus::Pending;
    std::optional<std::string> decided_by;
    std::optional<WallClock::time_point> decided_at;

    /// Pending -> Approved/Rejected, exactly once. Throws InvalidTransition.
    void decide(bool approve, std::string operator_name, WallClock::time_point when);

    friend bool operator==(const Recommendation&, const Recommendation&) = default;
};

/// Checks every HostSpec and Topology invariant; throws InvalidTopology naming
/// the first violation.
Topology validate_topology(Topology raw);

/// Checks task invariants and returns the tasks sorted by (submit_time, id).
std::vector<WorkloadTask> validate_workload(std::vector<WorkloadTask> tasks);

void validate_params(const PowerModelParams& params);

} // namespace dctwin
