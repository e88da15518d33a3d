#pragma once

// Accuracy metrics and grid-search self-calibration of the power exponent.

#include "dctwin/model.hpp"
#include "dctwin/sim.hpp"

#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace dctwin::calib {

struct CalibrationConfig {
    std::vector<double> grid = default_grid();
    Seconds history_span = 4 * kDefaultWindowDuration;
    std::size_t min_history_samples = 6;
    bool enabled = true;
    /// Candidate probes run on up to this many threads.
    unsigned probe_parallelism = 1;

    /// 0.5 to 4.0 in steps of 0.25.
    static std::vector<double> default_grid();
    static std::vector<double> make_grid(double lo, double hi, double step);
};

/// Grid must be non-empty, strictly increasing and inside [kMinR, kMaxR].
void validate(const CalibrationConfig& config);

struct MatchedPair {
    Seconds timestamp = 0;
    double real = 0.0;
    double simulated = 0.0;
};

/// Pairs samples by timestamp, dropping ground truth below kMapeEpsilonWatts.
std::vector<MatchedPair> match_series(std::span<const TelemetrySample> real, std::span<const TelemetrySample> sim);

/// (1/n) sum |(R_i - S_i) / R_i| * 100 over matched pairs. Throws NoOverlap
/// when nothing matches.
double mape(std::span<const TelemetrySample> real, std::span<const TelemetrySample> sim);
double mape(std::span<const MatchedPair> pairs);

enum class Bias { Over, Under, Exact };

struct BiasReport {
    std::vector<std::pair<Seconds, Bias>> per_sample;
    BiasCounts counts;
    double underestimated_fraction = 0.0;
};

/// Under when S < R, Over when S > R, Exact otherwise. Throws NoOverlap.
BiasReport estimation_bias(std::span<const TelemetrySample> real, std::span<const TelemetrySample> sim);

/// Fraction of windows whose MAPE is strictly below `threshold`.
double threshold_compliance(std::span<const double> mape_series, double threshold = 10.0);
double threshold_compliance(std::span<const std::pair<std::int64_t, double>> mape_series, double threshold = 10.0);

/// Exact inputs of a history span: the simulator state at its start and the
/// tasks submitted in each of its windows.
struct HistoryInputs {
    sim::SimState carryover;
    std::vector<std::pair<Window, std::vector<WorkloadTask>>> windows;
};

struct HistoryRun {
    std::vector<TelemetrySample> predictions;
    std::vector<std::vector<double>> host_utilization;
};

using SimulateFn = std::function<HistoryRun(double r)>;

/// Replays `inputs` with the real simulator for a given exponent.
SimulateFn make_history_simulator(sim::SimConfig config, HistoryInputs inputs);

/// Re-simulates the history once per grid candidate and selects the exponent
/// with minimal MAPE (ties: smallest r). Errors: InsufficientHistory,
/// DegenerateHistory (no host ever strictly between idle and saturated),
/// AllCandidatesFailed. A candidate whose simulation throws is disqualified.
CalibrationResult calibrate(const CalibrationConfig& config, std::span<const TelemetrySample> history_truth,
                            const SimulateFn& simulate, std::int64_t current_window, Seconds history_start,
                            Seconds history_end);

} // namespace dctwin::calib
