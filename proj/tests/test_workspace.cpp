#include "dctwin/error.hpp"
#include "dctwin/recommendations.hpp"
#include "dctwin/workspace.hpp"

#include <doctest.h>

#include <fstream>
#include <thread>

using namespace dctwin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dctwin_" + name)) { fs::remove_all(path); }
    ~TempDir() { fs::remove_all(path); }
};

WindowReport report(std::int64_t k, double u = 0.5, std::optional<double> mape = 5.0) {
    WindowReport r;
    r.window = window_at(k, 3600);
    for (Seconds t = r.window.start; t < r.window.end; t += 300) {
        r.predictions.push_back({t, 200.0, u, SampleSource::Prediction});
        r.ground_truth.push_back({t, 210.0, u, SampleSource::GroundTruth});
    }
    r.mape_percent = mape;
    r.params_used = {100, 350, 2.0};
    r.metadata.correlation_id = "run/window-" + std::to_string(k);
    return r;
}

std::vector<WindowReport> reports(int n, double u, std::optional<double> mape) {
    std::vector<WindowReport> out;
    for (int k = 0; k < n; ++k) out.push_back(report(k, u, mape));
    return out;
}

} // namespace

TEST_CASE("workspace layout and committed state") {
    TempDir dir("ws_layout");
    Workspace ws(dir.path);
    ws.prepare_fresh_run(json{{"k", 1}});
    CHECK(fs::exists(ws.config_file()));
    CHECK(ws.readable());
    CHECK_FALSE(ws.read_state().has_value());
    CHECK(ws.committed_reports().empty());

    for (int k = 0; k < 3; ++k) ws.write_report(report(k));
    // Reports are only visible once the state commits them.
    CHECK(ws.committed_reports().empty());
    ws.write_state({2, {100, 350, 2.5}, true});
    const auto committed = ws.committed_reports();
    REQUIRE(committed.size() == 2);
    CHECK(committed[1] == report(1));
    CHECK(ws.read_state()->current_params.r == 2.5);
    CHECK(ws.report_path(4).filename() == "window-4.json");

    const auto text = ws.read_report_text(0);
    REQUIRE(text);
    CHECK(*text == report_to_json(report(0)).dump() + "\n");
    CHECK_FALSE(ws.read_report_text(9).has_value());
}

TEST_CASE("fresh run clears derived outputs and keeps telemetry") {
    TempDir dir("ws_fresh");
    Workspace ws(dir.path);
    ws.prepare_fresh_run(json::object());
    ws.write_report(report(0));
    ws.write_state({1, {}, false});
    ws.append_calibration(CalibrationResult{{{2.0, 1.0}}, 2.0, 0, 3600, 1, 2});
    std::ofstream(ws.telemetry_log()) << "{}\n";

    ws.prepare_fresh_run(json::object());
    CHECK_FALSE(fs::exists(ws.report_path(0)));
    CHECK_FALSE(fs::exists(ws.calibrations_log()));
    CHECK_FALSE(fs::exists(ws.state_file()));
    CHECK(fs::exists(ws.telemetry_log()));
}

TEST_CASE("metadata log keeps wall-clock timestamps") {
    TempDir dir("ws_meta");
    Workspace ws(dir.path);
    ws.prepare_fresh_run(json::object());
    RunMetadata m{from_epoch_ms(1000), from_epoch_ms(1500), AccelerationMode::fixed(10), "run/window-0"};
    ws.append_metadata(0, m);
    const auto lines = ws.read_metadata();
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].at("window") == 0);
    CHECK(lines[0].at("simulation_started_at_ms") == 1000);
    CHECK(lines[0].at("acceleration_mode") == "fixed:10");
}

TEST_CASE("missing workspace is unreadable") {
    Workspace ws(fs::temp_directory_path() / "dctwin_does_not_exist");
    CHECK_FALSE(ws.readable());
}

TEST_CASE("atomic writes replace whole files") {
    TempDir dir("ws_atomic");
    fs::create_directories(dir.path);
    write_file_atomically(dir.path / "f.txt", "first");
    write_file_atomically(dir.path / "f.txt", "second");
    std::ifstream in(dir.path / "f.txt");
    std::string s;
    std::getline(in, s);
    CHECK(s == "second");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++entries;
    CHECK(entries == 1);
}

TEST_CASE("underutilization fires iff trailing mean u < 0.30") {
    const RecommendationRules rules;
    auto fire = [&](double u) {
        const auto trailing = reports(23, u, 5.0);
        const auto out = generate_recommendations(report(23, u, 5.0), trailing, rules);
        return std::any_of(out.begin(), out.end(), [](const auto& r) { return r.kind == RecommendationKind::Underutilization; });
    };
    CHECK(fire(0.25));
    CHECK_FALSE(fire(0.50));
    CHECK_FALSE(fire(0.3001));
    CHECK(fire(0.2999));

    const auto out = generate_recommendations(report(23, 0.25, 5.0), reports(23, 0.25, 5.0), rules);
    REQUIRE(out.size() == 1);
    CHECK(out[0].id == "rec-23-underutilization");
    CHECK(out[0].status == RecommendationStatus::Pending);
    CHECK(out[0].evidence.at("mean_u") == doctest::Approx(0.25));
    CHECK(out[0].evidence.at("span") == 24.0);
}

TEST_CASE("trailing span is limited to the configured window count") {
    RecommendationRules rules;
    rules.trailing_windows = 4;
    // Old busy windows fall outside the span.
    auto trailing = reports(10, 0.9, 5.0);
    for (int k = 7; k < 10; ++k) trailing[k] = report(k, 0.1, 5.0);
    const auto out = generate_recommendations(report(10, 0.1, 5.0), trailing, rules);
    REQUIRE(out.size() == 1);
    CHECK(out[0].evidence.at("span") == 4.0);
    CHECK(out[0].evidence.at("mean_u") == doctest::Approx(0.1));
}

TEST_CASE("accuracy degradation follows compliance") {
    const RecommendationRules rules;
    auto trailing = reports(99, 0.5, 4.0);
    for (int k = 85; k < 99; ++k) trailing[k].mape_percent = 14.0;
    RecommendationRules wide = rules;
    wide.trailing_windows = 100;
    const auto out = generate_recommendations(report(99, 0.5, 14.0), trailing, wide);
    REQUIRE(out.size() == 1);
    CHECK(out[0].kind == RecommendationKind::AccuracyDegraded);
    CHECK(out[0].evidence.at("compliance") == 0.85);
    CHECK(out[0].evidence.at("threshold") == 10.0);

    CHECK(generate_recommendations(report(5, 0.5, 4.0), reports(5, 0.5, 4.0), rules).empty());
    // Windows without MAPE do not count.
    CHECK(generate_recommendations(report(5, 0.5, std::nullopt), reports(5, 0.5, std::nullopt), rules).empty());
    // Already pending kinds are not emitted again.
    CHECK(generate_recommendations(report(99, 0.1, 14.0), trailing, wide,
                                   {RecommendationKind::AccuracyDegraded, RecommendationKind::Underutilization})
              .empty());
}

TEST_CASE("recommendation store lifecycle") {
    TempDir dir("recs");
    fs::create_directories(dir.path);
    RecommendationStore store(dir.path / "recommendations.jsonl");
    CHECK(store.list().empty());

    Recommendation a{"rec-1-underutilization", 1, RecommendationKind::Underutilization, "a", {{"mean_u", 0.2}}};
    Recommendation a2{"rec-2-underutilization", 2, RecommendationKind::Underutilization, "a2", {{"mean_u", 0.2}}};
    Recommendation b{"rec-2-accuracy_degraded", 2, RecommendationKind::AccuracyDegraded, "b", {{"compliance", 0.8}}};
    CHECK(store.add({a}).size() == 1);
    // No second pending record of the same kind.
    CHECK(store.add({a2, b}).size() == 1);
    CHECK(store.list().size() == 2);
    CHECK(store.pending_kinds().size() == 2);

    CHECK(store.decide("rec-1-underutilization", true, "alice") == RecommendationStore::DecisionOutcome::Ok);
    const auto got = store.get("rec-1-underutilization");
    REQUIRE(got);
    CHECK(got->status == RecommendationStatus::Approved);
    CHECK(got->decided_by == "alice");
    CHECK(store.decide("rec-1-underutilization", false, "bob") == RecommendationStore::DecisionOutcome::AlreadyDecided);
    CHECK(store.get("rec-1-underutilization")->decided_by == "alice");
    CHECK(store.decide("nope", true, "x") == RecommendationStore::DecisionOutcome::NotFound);

    CHECK(store.list(RecommendationStatus::Pending).size() == 1);
    CHECK(store.list(RecommendationStatus::Approved).size() == 1);
    // The kind is free again once decided.
    CHECK(store.add({a2}).size() == 1);

    // A second handle on the same file sees the same state.
    RecommendationStore other(dir.path / "recommendations.jsonl");
    CHECK(other.list().size() == 3);
    CHECK(other.get("rec-1-underutilization")->status == RecommendationStatus::Approved);
}

TEST_CASE("concurrent decisions: exactly one wins") {
    TempDir dir("recs_race");
    fs::create_directories(dir.path);
    RecommendationStore store(dir.path / "r.jsonl");
    store.add({Recommendation{"rec-0-underutilization", 0, RecommendationKind::Underutilization, "x", {}}});
    std::atomic<int> ok{0};
    std::atomic<int> conflict{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] {
            auto r = store.decide("rec-0-underutilization", i % 2 == 0, "op" + std::to_string(i));
            if (r == RecommendationStore::DecisionOutcome::Ok) ++ok;
            if (r == RecommendationStore::DecisionOutcome::AlreadyDecided) ++conflict;
        });
    }
    for (auto& t : threads) t.join();
    CHECK(ok == 1);
    CHECK(conflict == 7);
}
