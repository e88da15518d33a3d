#include "dctwin/orchestrator.hpp"

#include "dctwin/codec.hpp"
#include "dctwin/error.hpp"
#include "dctwin/power.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <future>

namespace dctwin {

namespace fs = std::filesystem;

RecommendationRules TwinConfig::recommendation_rules() const {
    return RecommendationRules{recommendation_trailing_windows, underutilization_threshold, nfr1_threshold, nfr1_fraction};
}

void validate(const TwinConfig& config) {
    auto fail = [](const std::string& field, const std::string& why) { throw TwinError(ErrorCode::InvalidConfig, field, why); };
    sim::validate(config.sim);
    calib::validate(config.calibration);
    if (config.window_duration <= 0) fail("window_duration", "must be positive");
    if (config.window_duration % config.sim.sampling_granularity != 0)
        fail("window_duration", "must be a multiple of the sampling granularity");
    if (config.horizon && *config.horizon <= 0) fail("horizon", "must be positive");
    if (!(config.initial_r >= kMinR && config.initial_r <= kMaxR)) fail("initial_r", "outside [0.5, 4.0]");
    if (config.acceleration.kind == AccelerationMode::Kind::Fixed && !(config.acceleration.factor > 0.0))
        fail("acceleration", "fixed factor must be positive");
    if (!(config.nfr1_fraction >= 0.0 && config.nfr1_fraction <= 1.0)) fail("nfr1_fraction", "outside [0, 1]");
    if (!(config.nfr1_threshold > 0.0)) fail("nfr1_threshold", "must be positive");
    if (config.recommendation_trailing_windows == 0) fail("recommendations.trailing_windows", "must be positive");
    if (config.telemetry.granularity != config.sim.sampling_granularity)
        throw TwinError(ErrorCode::GranularityMismatch, "telemetry", "source granularity differs from sampling granularity");
}

TwinConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw TwinError(ErrorCode::InvalidConfig, "file", "cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw TwinError(ErrorCode::InvalidConfig, "format", e.what());
    }
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    TwinConfig c;
    try {
        c.window_duration = j.value("window_duration_s", kDefaultWindowDuration);
        c.sim.sampling_granularity = j.value("sampling_granularity_s", kDefaultGranularity);
        if (j.contains("horizon_s") && !j["horizon_s"].is_null()) c.horizon = j["horizon_s"].get<Seconds>();
        c.acceleration = AccelerationMode::parse(j.value("acceleration", std::string("max")));
        c.sim.flops_per_cycle = j.value("flops_per_cycle", 16.0);
        c.sim.trace_events = j.value("debug_event_trace", false);
        c.initial_r = j.value("initial_r", 2.0);
        c.workspace = resolve(j.value("workspace", std::string("workspace")));
        c.run_label = j.value("run_label", std::string("dc-twin"));
        c.telemetry_buffer = j.value("telemetry_buffer", std::size_t{1024});

        c.topology_path = resolve(j.at("topology").get<std::string>());
        c.workload_path = resolve(j.at("workload").get<std::string>());
        c.sim.topology = read_topology_file(c.topology_path, c.initial_r);
        if (j.contains("power_params_override")) {
            for (const auto& [id, p] : j["power_params_override"].items()) {
                c.sim.power_params_override[id] =
                    PowerModelParams{p.at("p_idle_w").get<double>(), p.at("p_max_w").get<double>(), c.initial_r};
            }
        }

        const auto& t = j.at("telemetry");
        const auto kind = t.value("kind", std::string("file"));
        if (kind == "file") {
            c.telemetry.kind = telemetry::TelemetrySource::Kind::FileReplay;
            c.telemetry.path = resolve(t.at("path").get<std::string>());
        } else if (kind == "stream") {
            c.telemetry.kind = telemetry::TelemetrySource::Kind::Stream;
            c.telemetry.endpoint = t.value("endpoint", std::string("stdin"));
        } else {
            throw TwinError(ErrorCode::InvalidConfig, "telemetry.kind", "expected file|stream");
        }
        c.telemetry.granularity = t.value("granularity_s", c.sim.sampling_granularity);

        if (j.contains("calibration")) {
            const auto& cal = j["calibration"];
            c.calibration.enabled = cal.value("enabled", true);
            if (cal.contains("grid")) {
                const auto& g = cal["grid"];
                if (g.is_array()) c.calibration.grid = g.get<std::vector<double>>();
                else c.calibration.grid = calib::CalibrationConfig::make_grid(g.at("min"), g.at("max"), g.at("step"));
            }
            const auto windows = cal.value("history_windows", Seconds{4});
            c.calibration.history_span = cal.value("history_span_s", windows * c.window_duration);
            c.calibration.min_history_samples = cal.value("min_history_samples", std::size_t{6});
            c.calibration.probe_parallelism = cal.value("probe_parallelism", 1u);
        } else {
            c.calibration.history_span = 4 * c.window_duration;
        }
        if (j.contains("nfr1")) {
            c.nfr1_threshold = j["nfr1"].value("threshold_percent", 10.0);
            c.nfr1_fraction = j["nfr1"].value("fraction", 0.90);
        }
        if (j.contains("recommendations")) {
            c.recommendation_trailing_windows = j["recommendations"].value("trailing_windows", std::size_t{24});
            c.underutilization_threshold = j["recommendations"].value("underutilization_threshold", 0.30);
        }
        if (j.contains("api")) {
            const auto& a = j["api"];
            c.api.enabled = a.value("enabled", false);
            c.api.address = a.value("address", c.api.address);
            c.api.control_enabled = a.value("control_enabled", false);
            c.api.cors_origin = a.value("cors_origin", c.api.cors_origin);
        }
    } catch (const json::exception& e) {
        throw TwinError(ErrorCode::InvalidConfig, "format", e.what());
    }
    validate(c);
    return c;
}

json config_to_json(const TwinConfig& c) {
    json overrides = json::object();
    for (const auto& [id, p] : c.sim.power_params_override) overrides[id] = json{{"p_idle_w", p.p_idle}, {"p_max_w", p.p_max}};
    json telemetry{{"granularity_s", c.telemetry.granularity}};
    if (c.telemetry.live()) {
        telemetry["kind"] = "stream";
        telemetry["endpoint"] = c.telemetry.endpoint;
    } else {
        telemetry["kind"] = "file";
        telemetry["path"] = c.telemetry.path.string();
    }
    return json{{"topology", c.topology_path.string()},
                {"workload", c.workload_path.string()},
                {"telemetry", telemetry},
                {"window_duration_s", c.window_duration},
                {"sampling_granularity_s", c.sim.sampling_granularity},
                {"horizon_s", c.horizon ? json(*c.horizon) : json(nullptr)},
                {"acceleration", c.acceleration.to_string()},
                {"flops_per_cycle", c.sim.flops_per_cycle},
                {"initial_r", c.initial_r},
                {"power_params_override", overrides},
                {"calibration",
                 {{"enabled", c.calibration.enabled},
                  {"grid", c.calibration.grid},
                  {"history_span_s", c.calibration.history_span},
                  {"min_history_samples", c.calibration.min_history_samples},
                  {"probe_parallelism", c.calibration.probe_parallelism}}},
                {"workspace", c.workspace.string()},
                {"nfr1", {{"threshold_percent", c.nfr1_threshold}, {"fraction", c.nfr1_fraction}}},
                {"recommendations",
                 {{"trailing_windows", c.recommendation_trailing_windows},
                  {"underutilization_threshold", c.underutilization_threshold}}},
                {"api",
                 {{"enabled", c.api.enabled},
                  {"address", c.api.address},
                  {"control_enabled", c.api.control_enabled},
                  {"cors_origin", c.api.cors_origin}}},
                {"run_label", c.run_label},
                {"debug_event_trace", c.sim.trace_events},
                {"telemetry_buffer", c.telemetry_buffer}};
}

std::optional<std::chrono::duration<double>> select_acceleration_deadline(const AccelerationMode& mode,
                                                                          const Window& window, bool live_source) {
    const double seconds = static_cast<double>(window.duration());
    switch (mode.kind) {
    case AccelerationMode::Kind::RealTime: return std::chrono::duration<double>(seconds);
    case AccelerationMode::Kind::Fixed: return std::chrono::duration<double>(seconds / mode.factor);
    case AccelerationMode::Kind::Maximum:
        if (live_source)
            throw TwinError(ErrorCode::LiveSourceWithMaxAcceleration, "acceleration",
                            "maximum acceleration needs the full trace up front");
        return std::nullopt;
    }
    return std::nullopt;
}

RunMetadata record_metadata(const Window& window, WallClock::time_point started, WallClock::time_point finished,
                            std::string correlation_id, AccelerationMode mode) {
    if (finished < started)
        throw TwinError(ErrorCode::InvalidMetadata, std::to_string(window.index), "finished before started");
    return RunMetadata{started, finished, mode, std::move(correlation_id)};
}

void TwinControl::pause() {
    std::lock_guard lock(mutex_);
    paused_ = true;
}

void TwinControl::resume() {
    {
        std::lock_guard lock(mutex_);
        paused_ = false;
    }
    cv_.notify_all();
}

void TwinControl::request_acceleration(AccelerationMode mode) {
    std::lock_guard lock(mutex_);
    requested_ = mode;
}

void TwinControl::stop() {
    {
        std::lock_guard lock(mutex_);
        stopped_ = true;
    }
    cv_.notify_all();
}

bool TwinControl::paused() const {
    std::lock_guard lock(mutex_);
    return paused_;
}

bool TwinControl::stop_requested() const {
    std::lock_guard lock(mutex_);
    return stopped_;
}

std::optional<AccelerationMode> TwinControl::take_acceleration_request() {
    std::lock_guard lock(mutex_);
    return std::exchange(requested_, std::nullopt);
}

bool TwinControl::wait_while_paused() {
    std::unique_lock lock(mutex_);
    if (!paused_) return false;
    cv_.wait(lock, [&] { return !paused_ || stopped_; });
    return true;
}

namespace {

struct HistoryEntry {
    Window window;
    sim::SimState start_state;
    std::vector<WorkloadTask> tasks;
    std::vector<TelemetrySample> truth;
};

// Holds predictions until their hour bucket is complete.
class HourlyEfficiency {
public:
    explicit HourlyEfficiency(Seconds granularity) : granularity_(granularity) {}

    void add(const std::vector<TelemetrySample>& predictions, const std::vector<TimedValue>& tflops) {
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            power_.push_back({predictions[i].timestamp, predictions[i].power_w});
            tflops_.push_back(tflops[i]);
        }
    }

    std::vector<TimedValue> take_complete(Seconds now) {
        std::size_t n = 0;
        while (n < power_.size() && (power_[n].timestamp / 3600 + 1) * 3600 <= now) ++n;
        if (n == 0) return {};
        auto out = power::hourly_efficiency(std::span(tflops_).first(n), std::span(power_).first(n), granularity_);
        power_.erase(power_.begin(), power_.begin() + static_cast<std::ptrdiff_t>(n));
        tflops_.erase(tflops_.begin(), tflops_.begin() + static_cast<std::ptrdiff_t>(n));
        return out;
    }

private:
    Seconds granularity_;
    std::vector<TimedValue> power_;
    std::vector<TimedValue> tflops_;
};

bool covers(const std::vector<TelemetrySample>& truth, const std::vector<TelemetrySample>& predictions) {
    std::set<Seconds> ts;
    for (const auto& s : truth) ts.insert(s.timestamp);
    return std::all_of(predictions.begin(), predictions.end(), [&](const TelemetrySample& p) { return ts.contains(p.timestamp); });
}

} // namespace

RunSummary run_loop(const TwinConfig& config, const std::vector<WorkloadTask>& workload, RunOptions options) {
    validate(config);
    const auto loop_started = std::chrono::steady_clock::now();
    const bool live = options.feed ? options.feed->live() : config.telemetry.live();
    AccelerationMode mode = config.acceleration;
    select_acceleration_deadline(mode, window_at(0, config.window_duration), live);

    auto control = options.control ? options.control : std::make_shared<TwinControl>();
    Workspace ws(config.workspace);
    ws.prepare_fresh_run(config_to_json(config));
    auto recommendations = options.recommendations ? options.recommendations
                                                   : std::make_shared<RecommendationStore>(ws.recommendations_log());
    telemetry::TelemetryLog telemetry_log(ws.telemetry_log());

    auto clock = std::make_shared<telemetry::PacingClock>(mode, 0);
    std::shared_ptr<telemetry::TelemetryFeed> feed = options.feed;
    if (!feed) {
        if (config.telemetry.live())
            throw TwinError(ErrorCode::InvalidConfig, "telemetry", "stream sources must be attached by the caller");
        feed = std::make_shared<telemetry::ReplayFeed>(config.telemetry.path, config.telemetry.granularity, clock,
                                                       config.telemetry_buffer);
    }
    if (options.on_started) options.on_started();

    const std::vector<WorkloadTask> tasks = validate_workload(workload);
    for (const auto& t : tasks) {
        if (t.core_request > config.sim.topology.max_core_count())
            throw TwinError(ErrorCode::TaskUnschedulable, t.id, "requests more cores than any host has");
    }
    std::size_t task_cursor = 0;

    const Seconds granularity = config.sim.sampling_granularity;
    const auto expected_samples = static_cast<std::size_t>(config.window_duration / granularity);
    const auto history_windows = static_cast<std::size_t>(
        std::max<Seconds>(1, (config.calibration.history_span + config.window_duration - 1) / config.window_duration));
    const auto rules = config.recommendation_rules();

    sim::SimConfig probe_sim = config.sim;
    probe_sim.trace_events = false;

    RunSummary summary;
    sim::SimState state = sim::initial_state(config.sim, 0);
    double current_r = config.initial_r;
    bool current_calibrated = false;
    std::deque<HistoryEntry> history;
    std::deque<WindowReport> trailing;
    std::optional<TelemetrySample> lookahead;
    bool exhausted = false;
    HourlyEfficiency efficiency(granularity);
    std::ofstream trace_out;
    if (config.sim.trace_events) trace_out.open(config.workspace / "events.jsonl");

    for (std::int64_t k = 0;; ++k) {
        const Window window = window_at(k, config.window_duration);
        if (config.horizon && window.start >= *config.horizon) break;
        if (control->stop_requested()) break;
        if (control->wait_while_paused()) clock->set_mode(mode, window.start);
        if (control->stop_requested()) break;
        if (auto requested = control->take_acceleration_request()) {
            if (!(requested->kind == AccelerationMode::Kind::Maximum && live)) {
                mode = *requested;
                clock->set_mode(mode, window.start);
            }
        }

        // (1) collect this window's ground truth
        std::optional<telemetry::SteadyClock::time_point> deadline;
        if (auto budget = select_acceleration_deadline(mode, window, live)) {
            const auto due = clock->wall_time(window.end);
            const auto grace = std::chrono::duration<double>(std::max(0.05, static_cast<double>(granularity) / mode.speedup()));
            if (due) deadline = *due + std::chrono::duration_cast<telemetry::SteadyClock::duration>(grace);
        }
        std::vector<TelemetrySample> truth;
        std::set<Seconds> truth_ts;
        bool stalled = false;
        if (lookahead && window.contains(lookahead->timestamp)) {
            truth_ts.insert(lookahead->timestamp);
            truth.push_back(*lookahead);
            lookahead.reset();
        }
        while (!exhausted && !lookahead && truth.size() < expected_samples) {
            TelemetrySample s;
            const auto status = feed->next(s, deadline);
            if (status == telemetry::TelemetryFeed::Status::Timeout) {
                stalled = true;
                break;
            }
            if (status == telemetry::TelemetryFeed::Status::Exhausted) {
                exhausted = true;
                break;
            }
            telemetry_log.append(s);
            if (s.source != SampleSource::GroundTruth) continue;
            if (s.timestamp < window.start) {
                ++summary.late_samples;
                continue;
            }
            if (s.timestamp >= window.end) {
                lookahead = s;
                break;
            }
            if (!truth_ts.insert(s.timestamp).second) continue;
            truth.push_back(s);
        }
        if (exhausted && truth.empty() && !lookahead) break;
        if (stalled) ++summary.stalled_windows;

        std::vector<WorkloadTask> batch;
        while (task_cursor < tasks.size() && tasks[task_cursor].submit_time < window.end) {
            if (tasks[task_cursor].submit_time >= window.start) batch.push_back(tasks[task_cursor]);
            ++task_cursor;
        }

        // (3) calibration over trailing history runs alongside this window's simulation
        std::future<CalibrationResult> calibration;
        if (config.calibration.enabled && !history.empty()) {
            calib::HistoryInputs inputs{history.front().start_state, {}};
            std::vector<TelemetrySample> history_truth;
            for (const auto& h : history) {
                inputs.windows.emplace_back(h.window, h.tasks);
                history_truth.insert(history_truth.end(), h.truth.begin(), h.truth.end());
            }
            const Seconds hs = history.front().window.start;
            const Seconds he = history.back().window.end;
            calibration = std::async(std::launch::async, [&config, probe_sim, inputs = std::move(inputs),
                                                          history_truth = std::move(history_truth), k, hs, he]() mutable {
                auto simulate = calib::make_history_simulator(probe_sim, std::move(inputs));
                return calib::calibrate(config.calibration, history_truth, simulate, k, hs, he);
            });
        }

        // (2) simulate with the parameters selected by the previous calibration
        const auto started = WallClock::now();
        sim::SimState start_state = state;
        auto out = sim::simulate_window(config.sim, window, std::move(state), batch, current_r);
        const auto finished = WallClock::now();
        state = std::move(out.end_state);
        if (trace_out.is_open())
            for (const auto& line : out.trace) trace_out << line << '\n';

        history.push_back(HistoryEntry{window, std::move(start_state), batch, truth});
        while (history.size() > history_windows) history.pop_front();

        std::optional<CalibrationResult> result;
        if (calibration.valid()) {
            try {
                result = calibration.get();
                ++summary.calibrations_succeeded;
            } catch (const TwinError&) {
                ++summary.calibrations_failed;
            }
        }

        // (4) metrics and commit
        WindowReport report;
        report.window = window;
        report.predictions = std::move(out.predictions);
        report.ground_truth = truth;
        report.params_used = sim::cluster_params(config.sim, current_r);
        report.params_calibrated = current_calibrated;
        report.calibration = result;
        report.performance_tflops = std::move(out.tflops);
        report.complete = !stalled && covers(truth, report.predictions);
        const auto pairs = calib::match_series(truth, report.predictions);
        if (!pairs.empty()) {
            if (report.complete) report.mape_percent = calib::mape(pairs);
            report.bias = calib::estimation_bias(truth, report.predictions).counts;
        }
        efficiency.add(report.predictions, report.performance_tflops);
        report.efficiency_tflops_per_kwh = efficiency.take_complete(window.end);
        report.metadata = record_metadata(window, started, finished, config.run_label + "/window-" + std::to_string(k), mode);

        const double next_r = result ? result->selected_r : current_r;
        const bool next_calibrated = current_calibrated || result.has_value();

        ws.write_report(report);
        if (result) ws.append_calibration(*result);
        ws.append_metadata(k, report.metadata);
        ws.write_state(WorkspaceState{k + 1, sim::cluster_params(config.sim, next_r), next_calibrated});

        // (5) recommendations for the operator
        auto recs = generate_recommendations(report, std::vector<WindowReport>(trailing.begin(), trailing.end()), rules,
                                             recommendations->pending_kinds());
        recommendations->add(recs);

        trailing.push_back(report);
        while (trailing.size() >= rules.trailing_windows && !trailing.empty()) trailing.pop_front();
        if (options.on_report) options.on_report(report);
        summary.reports.push_back(std::move(report));

        current_r = next_r;
        current_calibrated = next_calibrated;
    }
    summary.duplicate_samples = telemetry_log.duplicates();
    summary.wall_time = std::chrono::steady_clock::now() - loop_started;
    return summary;
}

} // namespace dctwin
