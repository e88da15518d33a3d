#include "dctwin/codec.hpp"
#include "dctwin/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace dctwin;
namespace fs = std::filesystem;

namespace {

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}

    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    std::int64_t integer(std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); }
    bool coin() { return integer(0, 1) == 1; }

    TelemetrySample sample() {
        return {integer(0, 1'000'000) * 300, real(0, 1e5), real(0, 1), coin() ? SampleSource::Prediction : SampleSource::GroundTruth};
    }
    PowerModelParams params() {
        const double idle = real(0, 500);
        return {idle, idle + real(0, 500), real(kMinR, kMaxR)};
    }
    CalibrationResult calibration() {
        CalibrationResult c;
        for (int i = 0; i < integer(1, 15); ++i) c.evaluated.push_back({0.5 + 0.25 * i, real(0, 50)});
        c.selected_r = c.evaluated[best_candidate(c.evaluated)].r;
        c.history_start = integer(0, 100) * 3600;
        c.history_end = c.history_start + 4 * 3600;
        c.produced_in_window = integer(0, 1000);
        c.applies_from_window = c.produced_in_window + 1;
        return c;
    }
    WorkloadTask task(int i) {
        WorkloadTask t{"t" + std::to_string(i), integer(0, 100000), static_cast<int>(integer(1, 16)), {}};
        for (int f = 0; f < integer(1, 4); ++f) t.fragments.push_back({integer(1, 10000), real(0, 30000)});
        return t;
    }
    Recommendation recommendation() {
        Recommendation r{"rec-" + std::to_string(integer(0, 99)), integer(0, 99),
                         coin() ? RecommendationKind::Underutilization : RecommendationKind::AccuracyDegraded, "summary",
                         {{"mean_u", real(0, 1)}, {"span", 24.0}}};
        if (coin()) r.decide(coin(), "op", from_epoch_ms(integer(0, 2'000'000'000'000)));
        return r;
    }
    WindowReport report() {
        WindowReport r;
        r.window = window_at(integer(0, 500), 3600);
        for (Seconds t = r.window.start; t < r.window.end; t += 300) {
            auto p = sample();
            p.timestamp = t;
            p.source = SampleSource::Prediction;
            r.predictions.push_back(p);
            auto g = sample();
            g.timestamp = t;
            g.source = SampleSource::GroundTruth;
            r.ground_truth.push_back(g);
            r.performance_tflops.push_back({t, real(0, 10)});
        }
        if (coin()) r.mape_percent = real(0, 40);
        r.params_used = params();
        r.params_calibrated = coin();
        if (coin()) r.calibration = calibration();
        r.efficiency_tflops_per_kwh.push_back({r.window.start, real(0, 100)});
        r.bias = {integer(0, 12), integer(0, 12), integer(0, 12)};
        r.complete = coin();
        r.metadata.acceleration_mode = coin() ? AccelerationMode::fixed(real(0.5, 100)) : AccelerationMode::real_time();
        r.metadata.correlation_id = "run/window-" + std::to_string(r.window.index);
        return r;
    }
};

template <typename T>
T round_trip(const T& v) {
    return json::parse(json(v).dump()).get<T>();
}

} // namespace

TEST_CASE("serialization round-trips every value type") {
    Gen g(2024);
    for (int i = 0; i < 200; ++i) {
        const auto s = g.sample();
        CHECK(round_trip(s) == s);
        CHECK(parse_telemetry_line(format_telemetry_line(s), 1) == s);
        const auto p = g.params();
        CHECK(round_trip(p) == p);
        const auto c = g.calibration();
        CHECK(round_trip(c) == c);
        const Window w = window_at(g.integer(0, 1000), 3600);
        CHECK(round_trip(w) == w);
        const auto t = g.task(i);
        CHECK(round_trip(t) == t);
        const auto rec = g.recommendation();
        CHECK(round_trip(rec) == rec);
        const TimedValue tv{g.integer(0, 1000), g.real(-1, 1)};
        CHECK(round_trip(tv) == tv);
    }
}

TEST_CASE("report round-trip without wall-clock metadata") {
    Gen g(99);
    for (int i = 0; i < 50; ++i) {
        auto r = g.report();
        auto back = report_from_json(json::parse(report_to_json(r).dump()));
        CHECK(back == r);

        // Wall-clock fields are opt-in and survive when included.
        r.metadata.simulation_started_at = from_epoch_ms(1'700'000'000'000);
        r.metadata.simulation_finished_at = from_epoch_ms(1'700'000'000'250);
        CHECK(report_from_json(json::parse(report_to_json(r, true).dump())) == r);
        CHECK_FALSE(report_to_json(r).at("metadata").contains("simulation_started_at_ms"));
    }
}

TEST_CASE("metadata wall-clock fields are epoch milliseconds") {
    RunMetadata m{from_epoch_ms(1000), from_epoch_ms(2500), AccelerationMode::fixed(10), "run/window-0"};
    const json j = metadata_to_json(m, true);
    CHECK(j.at("simulation_started_at_ms") == 1000);
    CHECK(j.at("simulation_finished_at_ms") == 2500);
    CHECK(j.at("acceleration_mode") == "fixed:10");
    CHECK(metadata_from_json(j) == m);
}

TEST_CASE("telemetry line format and parse errors") {
    const TelemetrySample s{300, 175.0, 0.5, SampleSource::GroundTruth};
    const auto j = json::parse(format_telemetry_line(s));
    CHECK(j.at("ts") == 300);
    CHECK(j.at("power_w") == 175.0);
    CHECK(j.at("cpu_util") == 0.5);
    CHECK(j.at("source") == "ground_truth");

    auto detail = [](const std::string& line) {
        try {
            parse_telemetry_line(line, 7);
        } catch (const TwinError& e) {
            CHECK(e.code() == ErrorCode::ParseError);
            return e.detail();
        }
        return std::string("no error");
    };
    CHECK(detail("{not json") == "7");
    CHECK(detail(R"({"ts":0,"power_w":-5,"cpu_util":0.1,"source":"ground_truth"})") == "7");
    CHECK(detail(R"({"ts":0,"power_w":5,"cpu_util":1.5,"source":"ground_truth"})") == "7");
    CHECK(detail(R"({"ts":0,"power_w":5,"cpu_util":0.5,"source":"sensor"})") == "7");
    CHECK(detail(R"({"power_w":5,"cpu_util":0.5,"source":"ground_truth"})") == "7");
}

TEST_CASE("topology file round-trip and required power fields") {
    const fs::path dir = fs::temp_directory_path() / "dctwin_codec_topology";
    fs::create_directories(dir);
    Topology t{"cluster", {{"h1", 16, 2100.0, 131072, {100.0, 350.0, 2.0}}, {"h2", 8, 2000.0, 65536, {50.0, 200.0, 2.0}}}};
    write_topology_file(dir / "t.json", t);
    CHECK(read_topology_file(dir / "t.json") == t);

    json j = topology_to_json(t);
    CHECK(j.at("hosts")[0].at("p_idle_w") == 100.0);
    j["hosts"][1].erase("p_max_w");
    try {
        topology_from_json(j);
        FAIL("missing p_max_w must be rejected");
    } catch (const TwinError& e) {
        CHECK(e.code() == ErrorCode::InvalidTopology);
        CHECK(e.detail() == "p_max");
    }
    fs::remove_all(dir);
}

TEST_CASE("workload CSV round-trip") {
    Gen g(5);
    std::vector<WorkloadTask> tasks;
    for (int i = 0; i < 50; ++i) tasks.push_back(g.task(i));
    std::stringstream ss;
    write_workload_csv(ss, tasks);
    CHECK(ss.str().rfind(kWorkloadCsvHeader, 0) == 0);
    CHECK(read_workload_csv(ss) == validate_workload(tasks));
}

TEST_CASE("workload CSV rejects gaps in fragment indices") {
    std::stringstream ss;
    ss << kWorkloadCsvHeader << "\n"
       << "a,0,1,0,10,100\n"
       << "a,0,1,2,10,100\n";
    CHECK_THROWS_AS(read_workload_csv(ss), TwinError);

    std::stringstream bad_header("task,submit\n");
    CHECK_THROWS_AS(read_workload_csv(bad_header), TwinError);
}

TEST_CASE("recommendation wire format") {
    Recommendation r{"rec-3-underutilization", 3, RecommendationKind::Underutilization, "low use", {{"mean_u", 0.25}}};
    const json j = r;
    CHECK(j.at("kind") == "underutilization");
    CHECK(j.at("status") == "pending");
    CHECK(j.at("decided_by").is_null());
    CHECK(parse_status("approved") == RecommendationStatus::Approved);
    CHECK_THROWS(parse_status("maybe"));
}
