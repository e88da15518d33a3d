#include "dctwin/telemetry.hpp"

#include "dctwin/codec.hpp"
#include "dctwin/error.hpp"
#include "dctwin/power.hpp"
#include "dctwin/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace dctwin::telemetry {

std::vector<TelemetrySample> clip_to_window(std::span<const TelemetrySample> samples, const Window& window) {
    std::vector<TelemetrySample> out;
    for (const auto& s : samples)
        if (window.contains(s.timestamp)) out.push_back(s);
    return out;
}

// --- PacingClock -------------------------------------------------------------

PacingClock::PacingClock(AccelerationMode mode, Seconds anchor_sim, SteadyClock::time_point anchor_wall)
    : mode_(mode), anchor_sim_(anchor_sim), anchor_wall_(anchor_wall) {}

std::optional<SteadyClock::time_point> PacingClock::wall_time_locked(Seconds sim_time) const {
    const double speed = mode_.speedup();
    if (speed <= 0.0) return std::nullopt;
    const std::chrono::duration<double> offset(static_cast<double>(sim_time - anchor_sim_) / speed);
    return anchor_wall_ + std::chrono::duration_cast<SteadyClock::duration>(offset);
}

std::optional<SteadyClock::time_point> PacingClock::wall_time(Seconds sim_time) const {
    std::lock_guard lock(mutex_);
    return wall_time_locked(sim_time);
}

AccelerationMode PacingClock::mode() const {
    std::lock_guard lock(mutex_);
    return mode_;
}

void PacingClock::set_mode(AccelerationMode mode, Seconds sim_now) {
    {
        std::lock_guard lock(mutex_);
        const auto now = SteadyClock::now();
        // Keep sim_now's due time if it is still ahead so queued samples are not released early.
        auto due = wall_time_locked(sim_now);
        mode_ = mode;
        anchor_sim_ = sim_now;
        anchor_wall_ = due && *due > now ? *due : now;
    }
    changed_.notify_all();
}

bool PacingClock::wait_until_due(Seconds sim_time, std::stop_token stop) const {
    std::unique_lock lock(mutex_);
    while (!stop.stop_requested()) {
        auto due = wall_time_locked(sim_time);
        if (!due || SteadyClock::now() >= *due) return true;
        const auto mode_before = mode_;
        const auto anchor_before = anchor_wall_;
        changed_.wait_until(lock, stop, *due, [&] { return mode_ != mode_before || anchor_wall_ != anchor_before; });
    }
    return false;
}

// --- Feeds -----------------------------------------------------------------

ReplayFeed::ReplayFeed(std::filesystem::path path, Seconds granularity, std::shared_ptr<const PacingClock> clock,
                       std::size_t capacity)
    : path_(std::move(path)), granularity_(granularity), clock_(std::move(clock)), queue_(capacity) {
    if (!std::filesystem::exists(path_)) throw TwinError(ErrorCode::ParseError, "0", "cannot open " + path_.string());
    worker_ = std::jthread([this](std::stop_token stop) { run(stop); });
}

ReplayFeed::~ReplayFeed() {
    worker_.request_stop();
    queue_.close();
}

void ReplayFeed::run(std::stop_token stop) {
    try {
        std::ifstream in(path_);
        if (!in) throw TwinError(ErrorCode::ParseError, "0", "cannot open " + path_.string());
        std::string line;
        std::size_t line_no = 0;
        std::optional<Seconds> previous;
        while (!stop.stop_requested() && std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto sample = parse_telemetry_line(line, line_no);
            if (sample.timestamp % granularity_ != 0)
                throw TwinError(ErrorCode::GranularityMismatch, std::to_string(line_no),
                                "timestamp " + std::to_string(sample.timestamp) + " not aligned to " + std::to_string(granularity_));
            if (previous && sample.timestamp < *previous)
                throw TwinError(ErrorCode::ParseError, std::to_string(line_no), "timestamps not ascending");
            previous = sample.timestamp;
            if (clock_ && !clock_->wait_until_due(sample.timestamp, stop)) break;
            if (!queue_.push(sample)) break;
        }
        queue_.close();
    } catch (...) {
        queue_.close(std::current_exception());
    }
}

TelemetryFeed::Status ReplayFeed::next(TelemetrySample& out, std::optional<SteadyClock::time_point> deadline) {
    switch (queue_.pop_until(out, deadline)) {
    case BoundedQueue<TelemetrySample>::PopStatus::Item: return Status::Sample;
    case BoundedQueue<TelemetrySample>::PopStatus::Timeout: return Status::Timeout;
    case BoundedQueue<TelemetrySample>::PopStatus::Closed: return Status::Exhausted;
    }
    return Status::Exhausted;
}

StreamFeed::StreamFeed(Seconds granularity, std::size_t capacity) : granularity_(granularity), queue_(capacity) {}

bool StreamFeed::push(TelemetrySample sample) {
    if (sample.timestamp % granularity_ != 0)
        throw TwinError(ErrorCode::GranularityMismatch, std::to_string(sample.timestamp), "timestamp not aligned");
    return queue_.push(sample);
}

bool StreamFeed::push_line(const std::string& line) {
    std::size_t line_no = 0;
    {
        std::lock_guard lock(push_mutex_);
        line_no = ++lines_;
    }
    return push(parse_telemetry_line(line, line_no));
}

void StreamFeed::close() { queue_.close(); }

TelemetryFeed::Status StreamFeed::next(TelemetrySample& out, std::optional<SteadyClock::time_point> deadline) {
    switch (queue_.pop_until(out, deadline)) {
    case BoundedQueue<TelemetrySample>::PopStatus::Item: return Status::Sample;
    case BoundedQueue<TelemetrySample>::PopStatus::Timeout: return Status::Timeout;
    case BoundedQueue<TelemetrySample>::PopStatus::Closed: return Status::Exhausted;
    }
    return Status::Exhausted;
}

std::unique_ptr<TelemetryFeed> replay(const TelemetrySource& source, std::shared_ptr<const PacingClock> clock) {
    if (source.live()) return std::make_unique<StreamFeed>(source.granularity);
    return std::make_unique<ReplayFeed>(source.path, source.granularity, std::move(clock));
}

// --- Persistence -------------------------------------------------------------

TelemetryLog::TelemetryLog(std::filesystem::path path) : path_(std::move(path)) {
    std::error_code ec;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
    if (std::filesystem::exists(path_)) {
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                auto s = json::parse(line).get<TelemetrySample>();
                seen_.emplace(static_cast<int>(s.source), s.timestamp);
                ++lines_;
            } catch (const std::exception&) {
                ++lines_; // keep counting foreign lines; they are never rewritten
            }
        }
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw TwinError(ErrorCode::WorkspaceUnwritable, path_.string(), "cannot open telemetry log");
}

bool TelemetryLog::append(const TelemetrySample& sample) {
    if (!seen_.emplace(static_cast<int>(sample.source), sample.timestamp).second) {
        ++duplicates_;
        return false;
    }
    out_ << format_telemetry_line(sample) << '\n';
    out_.flush();
    if (!out_) throw TwinError(ErrorCode::WorkspaceUnwritable, path_.string(), "write failed");
    ++lines_;
    return true;
}

IngestStats ingest_and_persist(TelemetryFeed& feed, const std::filesystem::path& workspace) {
    TelemetryLog log(workspace / "telemetry.jsonl");
    IngestStats stats;
    TelemetrySample s;
    while (feed.next(s, std::nullopt) == TelemetryFeed::Status::Sample) {
        if (log.append(s)) ++stats.appended;
    }
    stats.duplicates = log.duplicates();
    return stats;
}

// --- Synthetic ground truth ----------------------------------------------------

double GroundTruthProfile::r_at(Seconds t) const {
    double r = r_schedule.empty() ? initial_r : r_schedule.front().second;
    for (const auto& [from, value] : r_schedule) {
        if (from <= t) r = value;
        else break;
    }
    return r;
}

void validate(const GroundTruthProfile& profile) {
    auto fail = [](const std::string& field, const std::string& why) { throw TwinError(ErrorCode::InvalidProfile, field, why); };
    try {
        validate_topology(profile.topology);
    } catch (const TwinError& e) {
        fail("topology", e.what());
    }
    if (profile.r_schedule.empty()) fail("true_r", "empty schedule");
    for (std::size_t i = 0; i < profile.r_schedule.size(); ++i) {
        const auto& [from, r] = profile.r_schedule[i];
        if (i > 0 && from <= profile.r_schedule[i - 1].first) fail("true_r", "schedule timestamps not ascending");
        if (!(r >= kMinR && r <= kMaxR)) fail("true_r", "exponent outside [0.5, 4.0]");
    }
    if (!(profile.noise_stddev_w >= 0.0) || !(profile.noise_relative >= 0.0)) fail("noise_stddev", "must be >= 0");
    if (profile.granularity <= 0 || profile.window_duration <= 0 || profile.window_duration % profile.granularity != 0)
        fail("granularity", "window duration must be a positive multiple of the granularity");
    const auto& w = profile.task_arrival;
    if (!(w.target_utilization >= 0.0 && w.target_utilization <= 1.0)) fail("target_utilization", "outside [0, 1]");
    if (!(w.diurnal_amplitude >= 0.0 && w.diurnal_amplitude < 1.0)) fail("diurnal_amplitude", "outside [0, 1)");
    if (!(w.mean_task_duration_s > 0.0)) fail("mean_task_duration_s", "must be positive");
    if (w.min_fragments < 1 || w.max_fragments < w.min_fragments) fail("fragments", "invalid range");
    if (!(w.min_demand_fraction >= 0.0 && w.max_demand_fraction >= w.min_demand_fraction)) fail("demand_fraction", "invalid range");
    const int max_cores = profile.topology.max_core_count();
    if (std::none_of(w.core_choices.begin(), w.core_choices.end(), [&](int c) { return c >= 1 && c <= max_cores; }))
        fail("core_choices", "no choice fits any host");
}

namespace {

Topology uniform_topology(const std::string& name, int hosts, int cores, double mhz, double p_idle, double p_max) {
    Topology t{name, {}};
    for (int i = 0; i < hosts; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "h%03d", i);
        t.hosts.push_back(HostSpec{id, cores, mhz, 131072, PowerModelParams{p_idle, p_max, 2.0}});
    }
    return t;
}

constexpr Seconds kDay = 86400;

} // namespace

GroundTruthProfile named_profile(const std::string& name) {
    GroundTruthProfile p;
    p.name = name;
    if (name == "drift-step") {
        p.topology = uniform_topology("drift-step", 20, 16, 2100.0, 50.0, 350.0);
        p.r_schedule = {{0, 2.0}, {3 * kDay, 3.0}};
        p.noise_relative = 0.02;
        p.task_arrival.target_utilization = 0.6;
    } else if (name == "constant") {
        p.topology = uniform_topology("constant", 4, 16, 2100.0, 100.0, 350.0);
        p.r_schedule = {{0, 2.5}};
        p.task_arrival.target_utilization = 0.5;
    } else if (name == "nfr2") {
        p.topology = uniform_topology("nfr2", 50, 16, 2100.0, 50.0, 350.0);
        p.r_schedule = {{0, 2.5}};
        p.noise_relative = 0.02;
        p.task_arrival.target_utilization = 0.5;
        p.task_arrival.mean_task_duration_s = 4.0 * 3600.0;
    } else if (name == "small") {
        p.topology = uniform_topology("small", 2, 8, 2000.0, 100.0, 300.0);
        p.r_schedule = {{0, 3.0}};
        p.task_arrival.core_choices = {2, 4, 8};
        p.task_arrival.mean_task_duration_s = 3600.0;
    } else {
        throw TwinError(ErrorCode::InvalidProfile, name, "unknown profile");
    }
    return p;
}

std::vector<std::string> profile_names() { return {"drift-step", "constant", "nfr2", "small"}; }

SyntheticTrace synthesize_ground_truth(const GroundTruthProfile& profile, Seconds horizon, std::uint64_t seed) {
    validate(profile);
    if (horizon <= 0 || horizon % profile.window_duration != 0)
        throw TwinError(ErrorCode::InvalidProfile, "horizon", "must be a positive multiple of the window duration");

    const auto& topo = profile.topology;
    const auto& w = profile.task_arrival;
    std::mt19937_64 rng(seed);

    std::vector<int> cores;
    for (int c : w.core_choices)
        if (c >= 1 && c <= topo.max_core_count()) cores.push_back(c);
    double total_capacity = 0.0;
    double mean_mhz = 0.0;
    for (const auto& h : topo.hosts) {
        total_capacity += h.capacity_mhz();
        mean_mhz += h.core_frequency_mhz;
    }
    mean_mhz /= static_cast<double>(topo.hosts.size());
    const double mean_cores = std::accumulate(cores.begin(), cores.end(), 0.0) / static_cast<double>(cores.size());
    const double mean_demand = mean_cores * mean_mhz * 0.5 * (w.min_demand_fraction + w.max_demand_fraction);

    SyntheticTrace trace;
    if (w.target_utilization > 0.0 && mean_demand > 0.0) {
        const double base_rate = w.target_utilization * total_capacity / (mean_demand * w.mean_task_duration_s);
        const double peak_rate = base_rate * (1.0 + w.diurnal_amplitude);
        std::exponential_distribution<double> gap(peak_rate);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> pick_cores(0, cores.size() - 1);
        std::uniform_int_distribution<int> pick_fragments(w.min_fragments, w.max_fragments);
        std::uniform_real_distribution<double> demand_fraction(w.min_demand_fraction, w.max_demand_fraction);

        double t = 0.0;
        std::size_t next_id = 0;
        while (true) {
            t += gap(rng);
            if (t >= static_cast<double>(horizon)) break;
            const double rate = base_rate * (1.0 + w.diurnal_amplitude * std::sin(2.0 * M_PI * t / static_cast<double>(kDay)));
            if (unit(rng) * peak_rate > rate) continue;

            WorkloadTask task;
            char id[24];
            std::snprintf(id, sizeof id, "t%07zu", next_id++);
            task.id = id;
            task.submit_time = static_cast<Seconds>(t);
            task.core_request = cores[pick_cores(rng)];
            const int fragments = pick_fragments(rng);
            std::exponential_distribution<double> frag_duration(static_cast<double>(fragments) / w.mean_task_duration_s);
            for (int f = 0; f < fragments; ++f) {
                Fragment frag;
                frag.duration = std::max<Seconds>(60, static_cast<Seconds>(std::llround(frag_duration(rng))));
                frag.cpu_demand_mhz = std::round(task.core_request * mean_mhz * demand_fraction(rng));
                task.fragments.push_back(frag);
            }
            trace.tasks.push_back(std::move(task));
        }
    }
    trace.tasks = validate_workload(std::move(trace.tasks));

    sim::SimConfig config;
    config.topology = topo;
    config.sampling_granularity = profile.granularity;
    sim::SimState state = sim::initial_state(config, 0);
    std::size_t cursor = 0;
    for (const auto& window : make_windows(profile.window_duration, horizon)) {
        std::vector<WorkloadTask> batch;
        while (cursor < trace.tasks.size() && trace.tasks[cursor].submit_time < window.end) batch.push_back(trace.tasks[cursor++]);
        auto out = sim::simulate_window(config, window, std::move(state), batch, profile.initial_r);
        for (std::size_t i = 0; i < out.predictions.size(); ++i) {
            const auto& pred = out.predictions[i];
            const auto params = sim::host_params(config, profile.r_at(pred.timestamp));
            const double watts = power::predict_cluster_power(topo, out.host_utilization[i], params);
            trace.noiseless_power_w.push_back(watts);
            trace.telemetry.push_back(TelemetrySample{pred.timestamp, watts, pred.cpu_utilization, SampleSource::GroundTruth});
        }
        state = std::move(out.end_state);
    }

    double stddev = profile.noise_stddev_w;
    if (profile.noise_relative > 0.0 && !trace.noiseless_power_w.empty()) {
        const double mean = std::accumulate(trace.noiseless_power_w.begin(), trace.noiseless_power_w.end(), 0.0) /
                            static_cast<double>(trace.noiseless_power_w.size());
        stddev = std::hypot(stddev, profile.noise_relative * mean);
    }
    if (stddev > 0.0) {
        std::mt19937_64 noise_rng(seed ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> noise(0.0, stddev);
        for (auto& s : trace.telemetry) s.power_w = std::max(0.0, s.power_w + noise(noise_rng));
    }
    return trace;
}

void write_trace(const std::filesystem::path& dir, const GroundTruthProfile& profile, const SyntheticTrace& trace) {
    std::filesystem::create_directories(dir);
    write_topology_file(dir / "topology.json", profile.topology);
    {
        std::ofstream out(dir / "workload.csv");
        write_workload_csv(out, trace.tasks);
    }
    std::ofstream out(dir / "telemetry.jsonl");
    for (const auto& s : trace.telemetry) out << format_telemetry_line(s) << '\n';
    if (!out) throw TwinError(ErrorCode::WorkspaceUnwritable, dir.string(), "cannot write trace");
}

} // namespace dctwin::telemetry
