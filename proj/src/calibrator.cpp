#include "dctwin/calibrator.hpp"

#include "dctwin/error.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <unordered_map>

namespace dctwin::calib {

std::vector<double> CalibrationConfig::default_grid() { return make_grid(0.5, 4.0, 0.25); }

std::vector<double> CalibrationConfig::make_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw TwinError(ErrorCode::InvalidConfig, "grid", "need step > 0 and hi >= lo");
    std::vector<double> grid;
    // Index-based to avoid accumulating the step.
    for (int i = 0;; ++i) {
        const double r = lo + step * i;
        if (r > hi + step * 1e-9) break;
        grid.push_back(r);
    }
    return grid;
}

void validate(const CalibrationConfig& config) {
    if (config.grid.empty()) throw TwinError(ErrorCode::InvalidConfig, "grid", "empty");
    for (std::size_t i = 0; i < config.grid.size(); ++i) {
        if (!(config.grid[i] >= kMinR && config.grid[i] <= kMaxR))
            throw TwinError(ErrorCode::InvalidConfig, "grid", "candidate outside [0.5, 4.0]");
        if (i > 0 && !(config.grid[i] > config.grid[i - 1]))
            throw TwinError(ErrorCode::InvalidConfig, "grid", "not strictly increasing");
    }
    if (config.history_span <= 0) throw TwinError(ErrorCode::InvalidConfig, "history_span", "must be positive");
    if (config.min_history_samples == 0) throw TwinError(ErrorCode::InvalidConfig, "min_history_samples", "must be positive");
}

std::vector<MatchedPair> match_series(std::span<const TelemetrySample> real, std::span<const TelemetrySample> sim) {
    std::unordered_map<Seconds, double> simulated;
    simulated.reserve(sim.size());
    for (const auto& s : sim) simulated.emplace(s.timestamp, s.power_w);
    std::vector<MatchedPair> out;
    out.reserve(real.size());
    for (const auto& r : real) {
        if (r.power_w < kMapeEpsilonWatts) continue;
        if (auto it = simulated.find(r.timestamp); it != simulated.end()) out.push_back({r.timestamp, r.power_w, it->second});
    }
    return out;
}

double mape(std::span<const MatchedPair> pairs) {
    if (pairs.empty()) throw TwinError(ErrorCode::NoOverlap, "0", "no matched samples");
    double sum = 0.0;
    for (const auto& p : pairs) sum += std::abs((p.real - p.simulated) / p.real);
    return sum / static_cast<double>(pairs.size()) * 100.0;
}

double mape(std::span<const TelemetrySample> real, std::span<const TelemetrySample> sim) {
    return mape(match_series(real, sim));
}

BiasReport estimation_bias(std::span<const TelemetrySample> real, std::span<const TelemetrySample> sim) {
    const auto pairs = match_series(real, sim);
    if (pairs.empty()) throw TwinError(ErrorCode::NoOverlap, "0", "no matched samples");
    BiasReport report;
    report.per_sample.reserve(pairs.size());
    for (const auto& p : pairs) {
        Bias b = Bias::Exact;
        if (p.simulated < p.real) {
            b = Bias::Under;
            ++report.counts.under;
        } else if (p.simulated > p.real) {
            b = Bias::Over;
            ++report.counts.over;
        } else {
            ++report.counts.exact;
        }
        report.per_sample.emplace_back(p.timestamp, b);
    }
    report.underestimated_fraction = static_cast<double>(report.counts.under) / static_cast<double>(pairs.size());
    return report;
}

double threshold_compliance(std::span<const double> mape_series, double threshold) {
    if (mape_series.empty()) throw TwinError(ErrorCode::DomainError, "mape_series", "empty");
    const auto below = std::count_if(mape_series.begin(), mape_series.end(), [&](double m) { return m < threshold; });
    return static_cast<double>(below) / static_cast<double>(mape_series.size());
}

double threshold_compliance(std::span<const std::pair<std::int64_t, double>> mape_series, double threshold) {
    std::vector<double> values;
    values.reserve(mape_series.size());
    for (const auto& [window, m] : mape_series) values.push_back(m);
    return threshold_compliance(values, threshold);
}

SimulateFn make_history_simulator(sim::SimConfig config, HistoryInputs inputs) {
    return [config = std::move(config), inputs = std::move(inputs)](double r) {
        HistoryRun run;
        sim::SimState state = inputs.carryover;
        for (const auto& [window, tasks] : inputs.windows) {
            auto out = sim::simulate_window(config, window, std::move(state), tasks, r);
            run.predictions.insert(run.predictions.end(), out.predictions.begin(), out.predictions.end());
            run.host_utilization.insert(run.host_utilization.end(), std::make_move_iterator(out.host_utilization.begin()),
                                        std::make_move_iterator(out.host_utilization.end()));
            state = std::move(out.end_state);
        }
        return run;
    };
}

namespace {

bool identifiable(const HistoryRun& run, std::span<const MatchedPair> pairs) {
    std::unordered_map<Seconds, std::size_t> index;
    for (std::size_t i = 0; i < run.predictions.size(); ++i) index.emplace(run.predictions[i].timestamp, i);
    for (const auto& p : pairs) {
        auto it = index.find(p.timestamp);
        if (it == index.end() || it->second >= run.host_utilization.size()) continue;
        for (double u : run.host_utilization[it->second])
            if (u > 0.0 && u < 1.0) return true;
    }
    return false;
}

} // namespace

CalibrationResult calibrate(const CalibrationConfig& config, std::span<const TelemetrySample> history_truth,
                            const SimulateFn& simulate, std::int64_t current_window, Seconds history_start,
                            Seconds history_end) {
    validate(config);
    const auto usable = std::count_if(history_truth.begin(), history_truth.end(), [&](const TelemetrySample& s) {
        return s.power_w >= kMapeEpsilonWatts && s.timestamp >= history_start && s.timestamp < history_end;
    });
    if (static_cast<std::size_t>(usable) < config.min_history_samples)
        throw TwinError(ErrorCode::InsufficientHistory, std::to_string(usable),
                        "need " + std::to_string(config.min_history_samples) + " samples");

    const auto& grid = config.grid;
    std::vector<std::optional<HistoryRun>> runs(grid.size());
    auto probe = [&](std::size_t i) {
        try {
            runs[i] = simulate(grid[i]);
        } catch (const std::exception&) {
            runs[i].reset();
        }
    };
    const std::size_t threads = std::max(1u, config.probe_parallelism);
    if (threads == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) probe(i);
    } else {
        for (std::size_t base = 0; base < grid.size(); base += threads) {
            std::vector<std::future<void>> batch;
            for (std::size_t i = base; i < std::min(grid.size(), base + threads); ++i)
                batch.push_back(std::async(std::launch::async, probe, i));
            for (auto& f : batch) f.get();
        }
    }

    CalibrationResult result;
    result.history_start = history_start;
    result.history_end = history_end;
    result.produced_in_window = current_window;
    result.applies_from_window = current_window + 1;

    bool checked_identifiability = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!runs[i]) continue;
        const auto pairs = match_series(history_truth, runs[i]->predictions);
        if (pairs.size() < config.min_history_samples) continue;
        if (!checked_identifiability) {
            // Utilization does not depend on r, so any successful probe decides this.
            if (!identifiable(*runs[i], pairs))
                throw TwinError(ErrorCode::DegenerateHistory, "u", "no host strictly between idle and saturated");
            checked_identifiability = true;
        }
        result.evaluated.push_back({grid[i], mape(pairs)});
    }
    if (result.evaluated.empty()) throw TwinError(ErrorCode::AllCandidatesFailed, std::to_string(grid.size()), "no candidate succeeded");
    result.selected_r = result.evaluated[best_candidate(result.evaluated)].r;
    return result;
}

} // namespace dctwin::calib
