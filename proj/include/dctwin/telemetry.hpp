#pragma once

// Physical-twin stand-in and ingestion path: trace replay with pacing, live
// stream intake, the persisted telemetry log, and the synthetic ground-truth
// generator used by the acceptance suite.

#include "dctwin/bounded_queue.hpp"
#include "dctwin/model.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace dctwin::telemetry {

using SteadyClock = std::chrono::steady_clock;

/// Samples with window.start <= ts < window.end, order preserved.
std::vector<TelemetrySample> clip_to_window(std::span<const TelemetrySample> samples, const Window& window);

/// Maps simulated time to wall time under an acceleration mode. The mapping is
/// rebased whenever the mode changes so that pacing stays continuous.
class PacingClock {
public:
    PacingClock(AccelerationMode mode, Seconds anchor_sim, SteadyClock::time_point anchor_wall = SteadyClock::now());

    /// Wall time at which `sim_time` is due; nullopt when unpaced (Maximum).
    std::optional<SteadyClock::time_point> wall_time(Seconds sim_time) const;

    AccelerationMode mode() const;
    void set_mode(AccelerationMode mode, Seconds sim_now);

    /// Blocks until `sim_time` is due. Returns false if stop was requested.
    bool wait_until_due(Seconds sim_time, std::stop_token stop) const;

private:
    std::optional<SteadyClock::time_point> wall_time_locked(Seconds sim_time) const;

    mutable std::mutex mutex_;
    mutable std::condition_variable_any changed_;
    AccelerationMode mode_;
    Seconds anchor_sim_;
    SteadyClock::time_point anchor_wall_;
};

struct TelemetrySource {
    enum class Kind { FileReplay, Stream };
    Kind kind = Kind::FileReplay;
    std::filesystem::path path;
    std::string endpoint;
    Seconds granularity = kDefaultGranularity;

    bool live() const { return kind == Kind::Stream; }
};

class TelemetryFeed {
public:
    enum class Status { Sample, Exhausted, Timeout };

    virtual ~TelemetryFeed() = default;
    virtual Status next(TelemetrySample& out, std::optional<SteadyClock::time_point> deadline) = 0;
    virtual bool live() const = 0;
};

/// Replays a line-JSON telemetry file on a background thread, pacing each
/// sample by the shared clock. Parse failures surface from next() as
/// ParseError(line) after the preceding samples were delivered.
class ReplayFeed final : public TelemetryFeed {
public:
    ReplayFeed(std::filesystem::path path, Seconds granularity, std::shared_ptr<const PacingClock> clock,
               std::size_t capacity = 1024);
    ~ReplayFeed() override;

    Status next(TelemetrySample& out, std::optional<SteadyClock::time_point> deadline) override;
    bool live() const override { return false; }

private:
    void run(std::stop_token stop);

    std::filesystem::path path_;
    Seconds granularity_;
    std::shared_ptr<const PacingClock> clock_;
    BoundedQueue<TelemetrySample> queue_;
    std::jthread worker_;
};

/// Live intake: records are pushed by a transport (socket reader, HTTP
/// handler) and drained by the orchestrator.
class StreamFeed final : public TelemetryFeed {
public:
    explicit StreamFeed(Seconds granularity, std::size_t capacity = 4096);

    /// Throws GranularityMismatch for misaligned timestamps.
    bool push(TelemetrySample sample);
    /// Parses one telemetry record; throws ParseError.
    bool push_line(const std::string& line);
    void close();

    Status next(TelemetrySample& out, std::optional<SteadyClock::time_point> deadline) override;
    bool live() const override { return true; }

private:
    Seconds granularity_;
    std::size_t lines_ = 0;
    std::mutex push_mutex_;
    BoundedQueue<TelemetrySample> queue_;
};

/// Opens the feed for a source. File replays are paced by `clock`.
std::unique_ptr<TelemetryFeed> replay(const TelemetrySource& source, std::shared_ptr<const PacingClock> clock);

/// Append-only `telemetry.jsonl`. A sample whose (source, timestamp) was already
/// logged, including by an earlier process, is rejected and counted.
class TelemetryLog {
public:
    explicit TelemetryLog(std::filesystem::path path);

    bool append(const TelemetrySample& sample);
    std::size_t lines() const { return lines_; }
    std::size_t duplicates() const { return duplicates_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::set<std::pair<int, Seconds>> seen_;
    std::size_t lines_ = 0;
    std::size_t duplicates_ = 0;
};

struct IngestStats {
    std::size_t appended = 0;
    std::size_t duplicates = 0;
};

/// Drains `feed` into `workspace/telemetry.jsonl`.
IngestStats ingest_and_persist(TelemetryFeed& feed, const std::filesystem::path& workspace);

struct WorkloadProfile {
    double target_utilization = 0.5;
    double diurnal_amplitude = 0.3; // relative swing of the arrival rate
    double mean_task_duration_s = 7200.0;
    int min_fragments = 1;
    int max_fragments = 4;
    double min_demand_fraction = 0.5; // of the task's allocated cores
    double max_demand_fraction = 1.0;
    std::vector<int> core_choices{4, 8, 12, 16};
};

struct GroundTruthProfile {
    std::string name;
    Topology topology;
    /// Piecewise-constant exponent: (from_ts, r), ascending.
    std::vector<std::pair<Seconds, double>> r_schedule{{0, 2.0}};
    double noise_stddev_w = 0.0;
    /// Additional noise as a fraction of the mean noiseless power.
    double noise_relative = 0.0;
    WorkloadProfile task_arrival;
    Seconds granularity = kDefaultGranularity;
    Seconds window_duration = kDefaultWindowDuration;
    double initial_r = 2.0;

    double r_at(Seconds t) const;
};

/// Throws InvalidProfile.
void validate(const GroundTruthProfile& profile);

/// Built-in profiles: "drift-step", "constant", "nfr2", "small".
GroundTruthProfile named_profile(const std::string& name);
std::vector<std::string> profile_names();

struct SyntheticTrace {
    std::vector<WorkloadTask> tasks;
    std::vector<TelemetrySample> telemetry;  // ground truth, noise included
    std::vector<double> noiseless_power_w;   // aligned with telemetry
};

/// Truth is the reference simulation's cluster power under r_at(t) plus
/// Gaussian noise clamped at 0 W. Deterministic for a given seed.
SyntheticTrace synthesize_ground_truth(const GroundTruthProfile& profile, Seconds horizon, std::uint64_t seed);

/// Writes topology.json, workload.csv and telemetry.jsonl into `dir`.
void write_trace(const std::filesystem::path& dir, const GroundTruthProfile& profile, const SyntheticTrace& trace);

} // namespace dctwin::telemetry
