#pragma once

// Analytical CPU power model, energy integration and efficiency metrics.

#include "dctwin/model.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace dctwin::power {

/// P(u) = P_idle + (P_max - P_idle)(2u - u^r). Exact at both endpoints.
/// Throws DomainError for u outside [0, 1].
double host_power(const PowerModelParams& params, double u);

/// Upper bound of the model shape 2u - u^r on [0, 1]. Attained at
/// u* = (2/r)^(1/(r-1)) when r > 2, otherwise at u = 1.
double shape_maximum(double r);

/// Sum of host_power over the topology. `per_host_u` and `params` are aligned
/// with topology.hosts.
double predict_cluster_power(const Topology& topology, std::span<const double> per_host_u,
                             std::span<const PowerModelParams> params);

/// Map-keyed form. Hosts missing from `per_host_u` are idle; hosts missing from
/// `params_by_host` use their topology parameters.
double predict_cluster_power(const Topology& topology, const std::map<std::string, double>& per_host_u,
                             const std::map<std::string, PowerModelParams>& params_by_host = {});

/// Left-Riemann energy: sum(watts) * granularity / 3.6e6. Samples must be
/// equally spaced by `granularity` (IrregularSeries otherwise).
double energy_kwh(std::span<const TimedValue> samples, Seconds granularity);

/// Per hour bucket: mean TFLOPs / energy (kWh) of that hour's samples. Buckets
/// with zero energy are omitted. Output timestamps are bucket starts.
std::vector<TimedValue> hourly_efficiency(std::span<const TimedValue> tflops, std::span<const TimedValue> power_w,
                                          Seconds granularity);

class EnergyAccumulator {
public:
    EnergyAccumulator(Window window, Seconds granularity);

    /// Appends a sample; it must fall in the window and continue the spacing.
    void add(Seconds timestamp, double watts);

    const Window& window() const { return window_; }
    const std::vector<TimedValue>& samples() const { return samples_; }
    double kwh() const { return kwh_; }

private:
    Window window_;
    Seconds granularity_;
    std::vector<TimedValue> samples_;
    double kwh_ = 0.0;
};

} // namespace dctwin::power
