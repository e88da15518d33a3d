#include "dctwin/calibrator.hpp"
#include "dctwin/error.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dctwin;
using namespace dctwin::calib;

namespace {

std::vector<TelemetrySample> series(std::initializer_list<double> watts, SampleSource src, Seconds g = 300) {
    std::vector<TelemetrySample> out;
    Seconds t = 0;
    for (double w : watts) {
        out.push_back({t, w, 0.5, src});
        t += g;
    }
    return out;
}

std::vector<TelemetrySample> truth(std::initializer_list<double> w) { return series(w, SampleSource::GroundTruth); }
std::vector<TelemetrySample> predicted(std::initializer_list<double> w) { return series(w, SampleSource::Prediction); }

// Independent evaluation of the MAPE definition.
double reference_mape(const std::vector<double>& r, const std::vector<double>& s) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] < kMapeEpsilonWatts) continue;
        sum += std::fabs((r[i] - s[i]) / r[i]);
        ++n;
    }
    return sum / static_cast<double>(n) * 100.0;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const TwinError& e) {
        return e.code();
    }
    FAIL("expected TwinError");
    return ErrorCode::InvalidConfig;
}

// Two hosts with a steady mixed load over a four-window history.
struct History {
    sim::SimConfig config;
    HistoryInputs inputs;
    Seconds start = 0;
    Seconds end = 4 * 3600;
};

History make_history(std::uint64_t seed) {
    History h;
    h.config.topology = {"pair", {{"h1", 16, 2100, 1, {100, 350, 2}}, {"h2", 8, 2000, 1, {60, 220, 2}}}};
    h.inputs.carryover = sim::initial_state(h.config);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Seconds> dur(600, 5400);
    std::uniform_real_distribution<double> frac(0.2, 0.9);
    std::uniform_int_distribution<int> cores(2, 8);
    int id = 0;
    for (int k = 0; k < 4; ++k) {
        const Window w = window_at(k, 3600);
        std::vector<WorkloadTask> tasks;
        for (Seconds t = w.start; t < w.end; t += 600) {
            const int c = cores(rng);
            tasks.push_back({"t" + std::to_string(100 + id++), t, c, {{dur(rng), frac(rng) * c * 2000.0}}});
        }
        h.inputs.windows.emplace_back(w, tasks);
    }
    return h;
}

std::vector<TelemetrySample> as_truth(std::vector<TelemetrySample> s) {
    for (auto& x : s) x.source = SampleSource::GroundTruth;
    return s;
}

} // namespace

TEST_CASE("mape examples") {
    CHECK(mape(truth({100, 200}), predicted({100, 200})) == 0.0);
    CHECK(mape(truth({100, 200}), predicted({110, 180})) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(mape(truth({50}), predicted({60})) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("mape matches by timestamp and skips near-zero truth") {
    auto r = truth({0.5, 100, 200});
    auto s = predicted({999, 110, 180});
    CHECK(mape(r, s) == doctest::Approx(10.0).epsilon(1e-12));

    auto shifted = predicted({100, 200});
    for (auto& x : shifted) x.timestamp += 1;
    CHECK(code_of([&] { mape(truth({100, 200}), shifted); }) == ErrorCode::NoOverlap);
    CHECK(code_of([&] { mape(truth({0.2}), predicted({1})); }) == ErrorCode::NoOverlap);
    CHECK(match_series(truth({100, 200, 300}), predicted({1, 2})).size() == 2);
}

TEST_CASE("mape properties") {
    std::mt19937_64 rng(31);
    // Kept well above the 1 W exclusion even after scaling by 0.5.
    std::uniform_real_distribution<double> w(4.0, 5000.0);
    for (int i = 0; i < 500; ++i) {
        std::vector<TelemetrySample> r, s;
        std::vector<double> rv, sv;
        for (Seconds t = 0; t < 20 * 300; t += 300) {
            rv.push_back(w(rng));
            sv.push_back(w(rng));
            r.push_back({t, rv.back(), 0.5, SampleSource::GroundTruth});
            s.push_back({t, sv.back(), 0.5, SampleSource::Prediction});
        }
        const double m = mape(r, s);
        CHECK(m >= 0.0);
        CHECK(m == doctest::Approx(reference_mape(rv, sv)).epsilon(1e-12));
        CHECK(mape(r, r) == 0.0);
        for (double c : {0.5, 3.0, 1000.0}) {
            auto rc = r;
            auto sc = s;
            for (auto& x : rc) x.power_w *= c;
            for (auto& x : sc) x.power_w *= c;
            CHECK(mape(rc, sc) == doctest::Approx(m).epsilon(1e-12));
        }
    }
}

TEST_CASE("estimation_bias examples") {
    auto eq = estimation_bias(truth({100, 200}), predicted({100, 200}));
    CHECK(eq.counts.exact == 2);
    CHECK(eq.underestimated_fraction == 0.0);

    auto under = estimation_bias(truth({100, 200, 300}), predicted({99, 199, 299}));
    CHECK(under.counts.under == 3);
    CHECK(under.underestimated_fraction == 1.0);

    auto mixed = estimation_bias(truth({100, 100, 100, 100}), predicted({90, 110, 90, 90}));
    REQUIRE(mixed.per_sample.size() == 4);
    CHECK(mixed.per_sample[0].second == Bias::Under);
    CHECK(mixed.per_sample[1].second == Bias::Over);
    CHECK(mixed.underestimated_fraction == 0.75);

    CHECK(code_of([] { estimation_bias({}, {}); }) == ErrorCode::NoOverlap);
}

TEST_CASE("threshold_compliance") {
    const std::vector<double> fives(50, 5.0);
    CHECK(threshold_compliance(fives) == 1.0);

    std::vector<std::pair<std::int64_t, double>> eighty_six;
    for (int k = 0; k < 100; ++k) eighty_six.emplace_back(k, k < 86 ? 4.0 : 14.0);
    CHECK(threshold_compliance(eighty_six, 10.0) == 0.86);

    // The threshold itself is not compliant.
    const std::vector<double> edge{10.0, 9.999};
    CHECK(threshold_compliance(edge, 10.0) == 0.5);
    CHECK(code_of([] { threshold_compliance(std::vector<double>{}); }) == ErrorCode::DomainError);
}

TEST_CASE("calibration config validation and grid") {
    const auto g = CalibrationConfig::default_grid();
    REQUIRE(g.size() == 15);
    CHECK(g.front() == 0.5);
    CHECK(g.back() == 4.0);
    CHECK(g[6] == 2.0);
    CHECK(CalibrationConfig::make_grid(1.0, 2.0, 0.5) == std::vector<double>{1.0, 1.5, 2.0});

    CalibrationConfig bad;
    bad.grid = {1.0, 0.75};
    CHECK(code_of([&] { validate(bad); }) == ErrorCode::InvalidConfig);
    bad.grid = {0.25};
    CHECK(code_of([&] { validate(bad); }) == ErrorCode::InvalidConfig);
    bad.grid = {};
    CHECK(code_of([&] { validate(bad); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("calibrate recovers every on-grid exponent") {
    const auto h = make_history(1);
    const auto simulate = make_history_simulator(h.config, h.inputs);
    CalibrationConfig cfg;
    for (double r_star : cfg.grid) {
        const auto t = as_truth(simulate(r_star).predictions);
        const auto result = calibrate(cfg, t, simulate, 4, h.start, h.end);
        CHECK(result.selected_r == r_star);
        CHECK(result.evaluated.size() == cfg.grid.size());
        const auto best = result.evaluated[best_candidate(result.evaluated)];
        CHECK(best.mape_percent < 1e-6);
        CHECK(result.produced_in_window == 4);
        CHECK(result.applies_from_window == 5);
        for (const auto& c : result.evaluated) CHECK(best.mape_percent <= c.mape_percent);
    }
}

TEST_CASE("calibrate picks the better neighbour for an off-grid exponent") {
    const auto h = make_history(2);
    const auto simulate = make_history_simulator(h.config, h.inputs);
    const auto t = as_truth(simulate(2.6).predictions);
    CalibrationConfig cfg;
    const auto result = calibrate(cfg, t, simulate, 4, h.start, h.end);
    CHECK((result.selected_r == 2.5 || result.selected_r == 2.75));

    // Brute force over the grid with the independent MAPE.
    double best_r = 0.0;
    double best = 1e300;
    for (double r : cfg.grid) {
        const auto p = simulate(r).predictions;
        std::vector<double> rv, sv;
        for (std::size_t i = 0; i < t.size(); ++i) {
            rv.push_back(t[i].power_w);
            sv.push_back(p[i].power_w);
        }
        const double m = reference_mape(rv, sv);
        if (m < best) {
            best = m;
            best_r = r;
        }
    }
    CHECK(result.selected_r == best_r);
}

TEST_CASE("calibrate guards") {
    const auto h = make_history(3);
    const auto simulate = make_history_simulator(h.config, h.inputs);
    const auto t = as_truth(simulate(2.0).predictions);
    CalibrationConfig cfg;

    const std::vector<TelemetrySample> few(t.begin(), t.begin() + 5);
    CHECK(code_of([&] { calibrate(cfg, few, simulate, 4, h.start, h.end); }) == ErrorCode::InsufficientHistory);

    // A failing candidate is disqualified, not fatal.
    auto flaky = [&](double r) -> HistoryRun {
        if (r == 2.0) throw TwinError(ErrorCode::TaskUnschedulable, "x", "boom");
        return simulate(r);
    };
    const auto partial = calibrate(cfg, t, flaky, 4, h.start, h.end);
    CHECK(partial.evaluated.size() == cfg.grid.size() - 1);
    CHECK(partial.selected_r != 2.0);

    auto broken = [](double) -> HistoryRun { throw std::runtime_error("down"); };
    CHECK(code_of([&] { calibrate(cfg, t, broken, 4, h.start, h.end); }) == ErrorCode::AllCandidatesFailed);
}

TEST_CASE("degenerate histories are rejected") {
    // Idle history: every host at u = 0, so P does not depend on r.
    sim::SimConfig c;
    c.topology = {"one", {{"h", 4, 1000, 1, {100, 200, 2}}}};
    HistoryInputs idle{sim::initial_state(c), {{window_at(0, 3600), {}}}};
    const auto simulate = make_history_simulator(c, idle);
    const auto t = as_truth(simulate(2.0).predictions);
    CHECK(code_of([&] { calibrate({}, t, simulate, 1, 0, 3600); }) == ErrorCode::DegenerateHistory);

    // Saturated history: u = 1 throughout.
    HistoryInputs full{sim::initial_state(c), {{window_at(0, 3600), {{"hog", 0, 4, {{7200, 8000.0}}}}}}};
    const auto sim_full = make_history_simulator(c, full);
    const auto tf = as_truth(sim_full(2.0).predictions);
    CHECK(code_of([&] { calibrate({}, tf, sim_full, 1, 0, 3600); }) == ErrorCode::DegenerateHistory);
}

TEST_CASE("parallel probes give the same result as sequential ones") {
    const auto h = make_history(4);
    const auto simulate = make_history_simulator(h.config, h.inputs);
    const auto t = as_truth(simulate(3.25).predictions);
    CalibrationConfig seq;
    CalibrationConfig par;
    par.probe_parallelism = 4;
    CHECK(calibrate(seq, t, simulate, 4, h.start, h.end) == calibrate(par, t, simulate, 4, h.start, h.end));
}
