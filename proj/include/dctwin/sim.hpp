#pragma once

// Deterministic discrete-event simulator of the twinned cluster.
//
// Tasks are admitted FIFO and placed first-fit (topology order) with
// all-or-nothing core grants. Each host shares its capacity among running
// fragments: when aggregate demand exceeds capacity every fragment on the host
// is slowed by capacity / demand. Time is integer seconds, so a slowed fragment
// completes at the first whole second at which its effective progress reaches
// its duration.

#include "dctwin/model.hpp"

#include <deque>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace dctwin::sim {

struct SimConfig {
    Topology topology;
    Seconds sampling_granularity = kDefaultGranularity;
    double flops_per_cycle = 16.0;
    /// Replaces a host's P_idle / P_max. The exponent r always comes from the
    /// value passed to the simulation.
    std::map<std::string, PowerModelParams> power_params_override;
    /// Records every processed event as a line of JSON in WindowOutput::trace.
    bool trace_events = false;
};

void validate(const SimConfig& config);

/// Per-host power parameters for exponent `r`, in topology order.
std::vector<PowerModelParams> host_params(const SimConfig& config, double r);

/// Cluster-aggregate parameters (sum of P_idle, sum of P_max, r).
PowerModelParams cluster_params(const SimConfig& config, double r);

// Ordered so that completions free cores before arrivals are placed and
// samples observe a settled state.
enum class EventKind { FragmentComplete = 0, TaskArrival = 1, SampleTick = 2, WindowEnd = 3 };

struct Event {
    Seconds time = 0;
    EventKind kind = EventKind::SampleTick;
    std::string task_id;
    std::size_t host = 0; // FragmentComplete only

    friend auto operator<=>(const Event&, const Event&) = default;
};

struct RunningTask {
    WorkloadTask task;
    std::size_t fragment_index = 0;
    double fragment_elapsed_s = 0.0; // effective (speed-weighted) seconds
    int allocated_cores = 0;
    double delivered_mhz_s = 0.0;    // capacity delivered so far, host-side

    const Fragment& fragment() const { return task.fragments[fragment_index]; }
    friend bool operator==(const RunningTask&, const RunningTask&) = default;
};

struct HostState {
    std::vector<RunningTask> running;
    int allocated_cores = 0;
    std::vector<Event> scheduled_completions;

    double demand_mhz() const;
    friend bool operator==(const HostState&, const HostState&) = default;
};

struct CompletedTask {
    std::string task_id;
    Seconds finished_at = 0;
    double delivered_mhz_s = 0.0;
    double required_mhz_s = 0.0;

    friend bool operator==(const CompletedTask&, const CompletedTask&) = default;
};

struct SimState {
    Seconds clock = 0;
    std::deque<WorkloadTask> pending_queue;
    std::vector<HostState> hosts; // aligned with topology.hosts
    std::set<Event> event_queue;
    std::map<std::string, WorkloadTask> arrivals; // tasks with a TaskArrival queued
    std::vector<CompletedTask> completed;         // drained by simulate_window

    friend bool operator==(const SimState&, const SimState&) = default;
};

SimState initial_state(const SimConfig& config, Seconds clock = 0);

/// u = min(1, demand / capacity).
double host_utilization(const HostSpec& host, const HostState& state);

/// Effective progress rate of every fragment on the host (1 unless overloaded).
double host_speed(const HostSpec& host, const HostState& state);

/// Places `arriving` on the first host with enough free cores, otherwise
/// appends it to the pending queue. Throws TaskUnschedulable when no host could
/// ever hold it.
void schedule(const SimConfig& config, SimState& state, WorkloadTask arriving);

/// Cluster state observed at a sample tick.
struct Observation {
    TelemetrySample sample;
    std::vector<double> host_utilization;
    double tflops = 0.0;
};

struct StepResult {
    Event event;
    std::optional<Observation> observation; // SampleTick only
};

/// Pops the earliest event, advances fragment progress to its time and applies
/// it. Precondition: the event queue is non-empty. Throws ClockRegression if
/// the earliest event lies before the clock.
StepResult step_to_next_event(const SimConfig& config, SimState& state, std::span<const PowerModelParams> params);

struct WindowOutput {
    std::vector<TelemetrySample> predictions;
    std::vector<std::vector<double>> host_utilization; // per prediction, per host
    std::vector<TimedValue> tflops;
    std::vector<CompletedTask> completed;
    std::vector<std::string> trace;
    SimState end_state;
};

/// Simulates one window from `carryover` (whose clock must equal window.start)
/// with power exponent `r`. Emits one prediction per sample tick in
/// [window.start, window.end) and returns the state for the next window.
WindowOutput simulate_window(const SimConfig& config, const Window& window, SimState carryover,
                             const std::vector<WorkloadTask>& tasks, double r);

/// Nominal utilization-weighted throughput:
/// sum_h u_h * cores_h * MHz_h * 1e6 * flops_per_cycle / 1e12.
double cluster_tflops(const Topology& topology, std::span<const double> per_host_u, double flops_per_cycle);
double cluster_tflops(const Topology& topology, const std::map<std::string, double>& per_host_u, double flops_per_cycle);

} // namespace dctwin::sim
