#include "dctwin/power.hpp"

#include "dctwin/error.hpp"

#include <cmath>
#include <map>

namespace dctwin::power {

namespace {
constexpr double kJoulesPerKwh = 3.6e6;
}

double host_power(const PowerModelParams& params, double u) {
    if (!(u >= 0.0 && u <= 1.0)) throw TwinError(ErrorCode::DomainError, "u", "utilization must lie in [0, 1]");
    // Blend form of P_idle + (P_max - P_idle) * shape; exact for shape 0 and 1.
    const double shape = 2.0 * u - std::pow(u, params.r);
    return params.p_idle * (1.0 - shape) + params.p_max * shape;
}

double shape_maximum(double r) {
    if (r <= 2.0) return 1.0;
    const double u_star = std::pow(2.0 / r, 1.0 / (r - 1.0));
    return 2.0 * u_star - std::pow(u_star, r);
}

double predict_cluster_power(const Topology& topology, std::span<const double> per_host_u,
                             std::span<const PowerModelParams> params) {
    if (per_host_u.size() != topology.hosts.size() || params.size() != topology.hosts.size())
        throw TwinError(ErrorCode::MisalignedSeries, "hosts", "per-host vectors must match the topology");
    double total = 0.0;
    for (std::size_t i = 0; i < per_host_u.size(); ++i) total += host_power(params[i], per_host_u[i]);
    return total;
}

double predict_cluster_power(const Topology& topology, const std::map<std::string, double>& per_host_u,
                             const std::map<std::string, PowerModelParams>& params_by_host) {
    double total = 0.0;
    for (const auto& host : topology.hosts) {
        auto u_it = per_host_u.find(host.id);
        auto p_it = params_by_host.find(host.id);
        const double u = u_it == per_host_u.end() ? 0.0 : u_it->second;
        total += host_power(p_it == params_by_host.end() ? host.power : p_it->second, u);
    }
    return total;
}

double energy_kwh(std::span<const TimedValue> samples, Seconds granularity) {
    if (granularity <= 0) throw TwinError(ErrorCode::IrregularSeries, "granularity", "must be positive");
    double watts = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i > 0 && samples[i].timestamp - samples[i - 1].timestamp != granularity)
            throw TwinError(ErrorCode::IrregularSeries, std::to_string(samples[i].timestamp), "spacing differs from granularity");
        watts += samples[i].value;
    }
    return watts * static_cast<double>(granularity) / kJoulesPerKwh;
}

std::vector<TimedValue> hourly_efficiency(std::span<const TimedValue> tflops, std::span<const TimedValue> power_w,
                                          Seconds granularity) {
    if (tflops.size() != power_w.size())
        throw TwinError(ErrorCode::MisalignedSeries, "length", "series lengths differ");
    for (std::size_t i = 0; i < tflops.size(); ++i) {
        if (tflops[i].timestamp != power_w[i].timestamp)
            throw TwinError(ErrorCode::MisalignedSeries, std::to_string(tflops[i].timestamp), "timestamps differ");
    }

    std::vector<TimedValue> out;
    std::size_t begin = 0;
    while (begin < tflops.size()) {
        const Seconds bucket = tflops[begin].timestamp / 3600;
        std::size_t end = begin;
        double tflops_sum = 0.0;
        while (end < tflops.size() && tflops[end].timestamp / 3600 == bucket) tflops_sum += tflops[end++].value;
        const double kwh = energy_kwh(power_w.subspan(begin, end - begin), granularity);
        if (kwh > 0.0) {
            const double mean_tflops = tflops_sum / static_cast<double>(end - begin);
            out.push_back({bucket * 3600, mean_tflops / kwh});
        }
        begin = end;
    }
    return out;
}

EnergyAccumulator::EnergyAccumulator(Window window, Seconds granularity)
    : window_(window), granularity_(granularity) {
    if (granularity <= 0) throw TwinError(ErrorCode::IrregularSeries, "granularity", "must be positive");
}

void EnergyAccumulator::add(Seconds timestamp, double watts) {
    if (!window_.contains(timestamp)) throw TwinError(ErrorCode::IrregularSeries, std::to_string(timestamp), "outside window");
    if (!samples_.empty() && timestamp - samples_.back().timestamp != granularity_)
        throw TwinError(ErrorCode::IrregularSeries, std::to_string(timestamp), "spacing differs from granularity");
    samples_.push_back({timestamp, watts});
    kwh_ += watts * static_cast<double>(granularity_) / kJoulesPerKwh;
}

} // namespace dctwin::power
