#include "dctwin/error.hpp"
#include "dctwin/power.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dctwin;
using namespace dctwin::power;

namespace {

// Direct textbook evaluation in extended precision.
long double reference_power(long double idle, long double max, long double r, long double u) {
    return idle + (max - idle) * (2.0L * u - std::pow(u, r));
}

Topology two_hosts(double idle = 100.0, double max = 300.0) {
    return {"pair", {{"a", 16, 2100.0, 1024, {idle, max, 2.0}}, {"b", 16, 2100.0, 1024, {idle, max, 2.0}}}};
}

std::vector<TimedValue> series(std::initializer_list<double> values, Seconds g, Seconds start = 0) {
    std::vector<TimedValue> out;
    Seconds t = start;
    for (double v : values) {
        out.push_back({t, v});
        t += g;
    }
    return out;
}

} // namespace

TEST_CASE("host_power examples") {
    CHECK(host_power({100.0, 300.0, 2.0}, 0.5) == 250.0);
    CHECK(host_power({100.0, 300.0, 2.0}, 0.0) == 100.0);
    CHECK(host_power({100.0, 300.0, 2.0}, 1.0) == 300.0);
    CHECK(host_power({100.0, 200.0, 2.0}, 0.5) == 175.0);
}

TEST_CASE("host_power is exact at both endpoints for any r") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> watts(0.0, 1000.0);
    std::uniform_real_distribution<double> exponent(kMinR, kMaxR);
    for (int i = 0; i < 10000; ++i) {
        const double a = watts(rng);
        const double b = a + watts(rng);
        const PowerModelParams p{a, b, exponent(rng)};
        CHECK(host_power(p, 0.0) == a);
        CHECK(host_power(p, 1.0) == b);
    }
}

TEST_CASE("host_power agrees with the textbook formula") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> watts(0.0, 1000.0);
    std::uniform_real_distribution<double> exponent(kMinR, kMaxR);
    std::uniform_real_distribution<double> util(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double a = watts(rng);
        const double b = a + watts(rng);
        const double r = exponent(rng);
        const double u = util(rng);
        const long double expected = reference_power(a, b, r, u);
        CHECK(std::fabs(static_cast<long double>(host_power({a, b, r}, u)) - expected) <= 1e-9L * (1.0L + b));
    }
}

TEST_CASE("host_power stays inside the model envelope") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> exponent(1.0, 4.0);
    std::uniform_real_distribution<double> util(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double r = exponent(rng);
        const PowerModelParams p{120.0, 320.0, r};
        const double w = host_power(p, util(rng));
        CHECK(w >= p.p_idle - 1e-9);
        CHECK(w <= p.p_idle + (p.p_max - p.p_idle) * shape_maximum(r) + 1e-9);
    }
    // Shape maximum brute-forced on a fine grid.
    for (double r : {1.0, 2.0, 2.5, 3.0, 4.0}) {
        double best = 0.0;
        for (int i = 0; i <= 1'000'000; ++i) {
            const double u = i / 1e6;
            best = std::max(best, 2 * u - std::pow(u, r));
        }
        CHECK(shape_maximum(r) == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("host_power rejects utilization outside [0, 1]") {
    for (double u : {-0.01, 1.01, std::nan("")}) {
        try {
            host_power({100, 300, 2}, u);
            FAIL("expected DomainError");
        } catch (const TwinError& e) {
            CHECK(e.code() == ErrorCode::DomainError);
        }
    }
}

TEST_CASE("predict_cluster_power") {
    const auto t = two_hosts();
    CHECK(predict_cluster_power(t, std::map<std::string, double>{}) == 200.0);
    CHECK(predict_cluster_power(t, std::map<std::string, double>{{"a", 0.5}}) == 350.0);

    Topology one{"one", {{"h", 16, 2100.0, 1024, {100.0, 300.0, 2.0}}}};
    CHECK(predict_cluster_power(one, std::map<std::string, double>{{"h", 0.5}}) == 250.0);

    // Explicit parameters replace the topology's.
    CHECK(predict_cluster_power(t, std::map<std::string, double>{{"a", 1.0}},
                                {{"a", PowerModelParams{10.0, 20.0, 2.0}}}) == 120.0);

    const std::vector<double> u{0.5, 0.0};
    const std::vector<PowerModelParams> p{{100, 300, 2}, {100, 300, 2}};
    CHECK(predict_cluster_power(t, u, p) == 350.0);
    const std::vector<double> short_u{0.5};
    CHECK_THROWS_AS(predict_cluster_power(t, short_u, p), TwinError);
}

TEST_CASE("energy_kwh examples") {
    CHECK(energy_kwh(series({175.0}, 300), 300) == doctest::Approx(175.0 * 300.0 / 3.6e6).epsilon(1e-15));
    CHECK(energy_kwh(series({0, 0, 0}, 300), 300) == 0.0);
    CHECK(energy_kwh(series({1000, 1000, 1000, 1000, 1000, 1000, 1000, 1000, 1000, 1000, 1000, 1000}, 300), 300) == 1.0);
    CHECK(energy_kwh({}, 300) == 0.0);

    const std::vector<TimedValue> irregular{{0, 1.0}, {300, 1.0}, {900, 1.0}};
    try {
        energy_kwh(irregular, 300);
        FAIL("expected IrregularSeries");
    } catch (const TwinError& e) {
        CHECK(e.code() == ErrorCode::IrregularSeries);
    }
}

TEST_CASE("energy is additive over partitions") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> watts(0.0, 4096.0);
    std::uniform_int_distribution<std::size_t> cut_dist(0, 47);
    for (int i = 0; i < 500; ++i) {
        std::vector<TimedValue> s;
        // Whole-watt values keep every partial sum exact.
        for (Seconds t = 0; t < 48 * 300; t += 300) s.push_back({t, std::floor(watts(rng))});
        const std::size_t cut = cut_dist(rng);
        const std::span<const TimedValue> all(s);
        const double whole = energy_kwh(all, 300);
        const double parts = energy_kwh(all.first(cut), 300) + energy_kwh(all.subspan(cut), 300);
        CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
    }
}

TEST_CASE("hourly_efficiency examples") {
    std::vector<TimedValue> tf, pw;
    for (Seconds t = 0; t < 3600; t += 300) {
        tf.push_back({t, 0.5});
        pw.push_back({t, 1000.0});
    }
    auto eff = hourly_efficiency(tf, pw, 300);
    REQUIRE(eff.size() == 1);
    CHECK(eff[0].timestamp == 0);
    CHECK(eff[0].value == 0.5);

    for (auto& v : tf) v.value = 0.0;
    eff = hourly_efficiency(tf, pw, 300);
    REQUIRE(eff.size() == 1);
    CHECK(eff[0].value == 0.0);

    for (auto& v : pw) v.value = 0.0;
    CHECK(hourly_efficiency(tf, pw, 300).empty());

    auto shifted = pw;
    shifted[3].timestamp += 1;
    try {
        hourly_efficiency(tf, shifted, 300);
        FAIL("expected MisalignedSeries");
    } catch (const TwinError& e) {
        CHECK(e.code() == ErrorCode::MisalignedSeries);
    }
}

TEST_CASE("hourly_efficiency buckets by hour") {
    std::vector<TimedValue> tf, pw;
    for (Seconds t = 0; t < 2 * 3600; t += 300) {
        tf.push_back({t, t < 3600 ? 1.0 : 2.0});
        pw.push_back({t, 1000.0});
    }
    const auto eff = hourly_efficiency(tf, pw, 300);
    REQUIRE(eff.size() == 2);
    CHECK(eff[0] == TimedValue{0, 1.0});
    CHECK(eff[1] == TimedValue{3600, 2.0});
}

TEST_CASE("efficiency scales inversely with power") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(1.0, 500.0);
    for (int i = 0; i < 200; ++i) {
        std::vector<TimedValue> tf, pw;
        for (Seconds t = 0; t < 3 * 3600; t += 300) {
            tf.push_back({t, dist(rng)});
            pw.push_back({t, dist(rng)});
        }
        // Powers of two scale without rounding, so the relation is exact.
        for (double c : {0.25, 2.0, 1024.0}) {
            auto scaled = pw;
            for (auto& v : scaled) v.value *= c;
            const auto base = hourly_efficiency(tf, pw, 300);
            const auto out = hourly_efficiency(tf, scaled, 300);
            REQUIRE(base.size() == out.size());
            for (std::size_t k = 0; k < base.size(); ++k) CHECK(out[k].value == base[k].value / c);
        }
        // Arbitrary factors hold to rounding.
        auto scaled = pw;
        for (auto& v : scaled) v.value *= 3.0;
        const auto base = hourly_efficiency(tf, pw, 300);
        const auto out = hourly_efficiency(tf, scaled, 300);
        for (std::size_t k = 0; k < base.size(); ++k) CHECK(out[k].value == doctest::Approx(base[k].value / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("EnergyAccumulator integrates a window") {
    EnergyAccumulator acc(window_at(1, 3600), 300);
    for (Seconds t = 3600; t < 7200; t += 300) acc.add(t, 1000.0);
    CHECK(acc.kwh() == 1.0);
    CHECK(acc.samples().size() == 12);
    CHECK_THROWS_AS(acc.add(7200, 1.0), TwinError); // outside the window

    EnergyAccumulator gap(window_at(0, 3600), 300);
    gap.add(0, 1.0);
    CHECK_THROWS_AS(gap.add(600, 1.0), TwinError);
}
