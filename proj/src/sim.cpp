#include "dctwin/sim.hpp"

#include "dctwin/codec.hpp"
#include "dctwin/error.hpp"
#include "dctwin/power.hpp"

#include <algorithm>
#include <cmath>

namespace dctwin::sim {

namespace {

// A fragment counts as finished once less than this many effective seconds remain.
constexpr double kCompletionTolerance = 1e-6;

std::string_view kind_name(EventKind kind) {
    switch (kind) {
    case EventKind::FragmentComplete: return "fragment_complete";
    case EventKind::TaskArrival: return "task_arrival";
    case EventKind::SampleTick: return "sample_tick";
    case EventKind::WindowEnd: return "window_end";
    }
    return "unknown";
}

void reschedule_completions(const SimConfig& config, SimState& state, std::size_t h) {
    auto& host = state.hosts[h];
    for (const auto& e : host.scheduled_completions) state.event_queue.erase(e);
    host.scheduled_completions.clear();

    const double speed = host_speed(config.topology.hosts[h], host);
    for (const auto& rt : host.running) {
        const double remaining = static_cast<double>(rt.fragment().duration) - rt.fragment_elapsed_s;
        Seconds steps = 0;
        if (remaining > kCompletionTolerance) steps = static_cast<Seconds>(std::ceil((remaining - kCompletionTolerance) / speed));
        Event e{state.clock + steps, EventKind::FragmentComplete, rt.task.id, h};
        state.event_queue.insert(e);
        host.scheduled_completions.push_back(std::move(e));
    }
}

// Moves every running fragment forward by dt seconds at its host's current speed.
void advance_progress(const SimConfig& config, SimState& state, Seconds dt) {
    if (dt == 0) return;
    for (std::size_t h = 0; h < state.hosts.size(); ++h) {
        auto& host = state.hosts[h];
        if (host.running.empty()) continue;
        const auto& spec = config.topology.hosts[h];
        const double demand = host.demand_mhz();
        const double speed = host_speed(spec, host);
        const double delivered = std::min(demand, spec.capacity_mhz());
        for (auto& rt : host.running) {
            rt.fragment_elapsed_s += speed * static_cast<double>(dt);
            if (demand > 0.0) rt.delivered_mhz_s += delivered * (rt.fragment().cpu_demand_mhz / demand) * static_cast<double>(dt);
        }
    }
}

std::optional<std::size_t> first_fit(const SimConfig& config, const SimState& state, int cores) {
    for (std::size_t h = 0; h < state.hosts.size(); ++h) {
        if (config.topology.hosts[h].core_count - state.hosts[h].allocated_cores >= cores) return h;
    }
    return std::nullopt;
}

void place(const SimConfig& config, SimState& state, std::size_t h, WorkloadTask task) {
    auto& host = state.hosts[h];
    host.allocated_cores += task.core_request;
    RunningTask rt;
    rt.allocated_cores = task.core_request;
    rt.task = std::move(task);
    host.running.push_back(std::move(rt));
    reschedule_completions(config, state, h);
}

// Head-of-line FIFO: stops at the first queued task that does not fit.
void drain_pending(const SimConfig& config, SimState& state) {
    while (!state.pending_queue.empty()) {
        auto h = first_fit(config, state, state.pending_queue.front().core_request);
        if (!h) break;
        WorkloadTask task = std::move(state.pending_queue.front());
        state.pending_queue.pop_front();
        place(config, state, *h, std::move(task));
    }
}

void complete_fragment(const SimConfig& config, SimState& state, const Event& e) {
    auto& host = state.hosts[e.host];
    auto it = std::find_if(host.running.begin(), host.running.end(),
                           [&](const RunningTask& rt) { return rt.task.id == e.task_id; });
    if (it == host.running.end()) return; // superseded; cannot happen with consistent bookkeeping

    // Completion snaps to the next whole second; overshoot is not delivered work.
    const auto& frag = it->fragment();
    const double overshoot = it->fragment_elapsed_s - static_cast<double>(frag.duration);
    if (overshoot > 0.0) it->delivered_mhz_s -= overshoot * frag.cpu_demand_mhz;

    ++it->fragment_index;
    it->fragment_elapsed_s = 0.0;
    if (it->fragment_index == it->task.fragments.size()) {
        double required = 0.0;
        for (const auto& f : it->task.fragments) required += f.cpu_demand_mhz * static_cast<double>(f.duration);
        state.completed.push_back({it->task.id, state.clock, it->delivered_mhz_s, required});
        host.allocated_cores -= it->allocated_cores;
        host.running.erase(it);
        reschedule_completions(config, state, e.host);
        drain_pending(config, state);
    } else {
        reschedule_completions(config, state, e.host);
    }
}

Observation observe(const SimConfig& config, const SimState& state, std::span<const PowerModelParams> params) {
    Observation obs;
    obs.host_utilization.reserve(state.hosts.size());
    double delivered = 0.0;
    double capacity = 0.0;
    for (std::size_t h = 0; h < state.hosts.size(); ++h) {
        const auto& spec = config.topology.hosts[h];
        obs.host_utilization.push_back(host_utilization(spec, state.hosts[h]));
        delivered += std::min(state.hosts[h].demand_mhz(), spec.capacity_mhz());
        capacity += spec.capacity_mhz();
    }
    obs.sample.timestamp = state.clock;
    obs.sample.source = SampleSource::Prediction;
    obs.sample.cpu_utilization = capacity > 0.0 ? std::min(1.0, delivered / capacity) : 0.0;
    obs.sample.power_w = power::predict_cluster_power(config.topology, obs.host_utilization, params);
    obs.tflops = cluster_tflops(config.topology, obs.host_utilization, config.flops_per_cycle);
    return obs;
}

} // namespace

void validate(const SimConfig& config) {
    validate_topology(config.topology);
    if (config.sampling_granularity <= 0)
        throw TwinError(ErrorCode::InvalidConfig, "sampling_granularity", "must be positive");
    if (!(config.flops_per_cycle > 0.0)) throw TwinError(ErrorCode::InvalidConfig, "flops_per_cycle", "must be positive");
    for (const auto& [id, p] : config.power_params_override) {
        const bool known = std::any_of(config.topology.hosts.begin(), config.topology.hosts.end(),
                                       [&](const HostSpec& h) { return h.id == id; });
        if (!known) throw TwinError(ErrorCode::InvalidConfig, "power_params_override", "unknown host '" + id + "'");
        if (!(p.p_idle >= 0.0 && p.p_max >= p.p_idle))
            throw TwinError(ErrorCode::InvalidConfig, "power_params_override", "invalid power for host '" + id + "'");
    }
}

std::vector<PowerModelParams> host_params(const SimConfig& config, double r) {
    std::vector<PowerModelParams> out;
    out.reserve(config.topology.hosts.size());
    for (const auto& h : config.topology.hosts) {
        PowerModelParams p = h.power;
        if (auto it = config.power_params_override.find(h.id); it != config.power_params_override.end()) p = it->second;
        p.r = r;
        out.push_back(p);
    }
    return out;
}

PowerModelParams cluster_params(const SimConfig& config, double r) {
    PowerModelParams agg{0.0, 0.0, r};
    for (const auto& p : host_params(config, r)) {
        agg.p_idle += p.p_idle;
        agg.p_max += p.p_max;
    }
    return agg;
}

double HostState::demand_mhz() const {
    double total = 0.0;
    for (const auto& rt : running) total += rt.fragment().cpu_demand_mhz;
    return total;
}

SimState initial_state(const SimConfig& config, Seconds clock) {
    SimState s;
    s.clock = clock;
    s.hosts.resize(config.topology.hosts.size());
    return s;
}

double host_utilization(const HostSpec& host, const HostState& state) {
    const double demand = state.demand_mhz();
    if (demand <= 0.0) return 0.0;
    return std::min(1.0, demand / host.capacity_mhz());
}

double host_speed(const HostSpec& host, const HostState& state) {
    const double demand = state.demand_mhz();
    const double capacity = host.capacity_mhz();
    return demand > capacity ? capacity / demand : 1.0;
}

void schedule(const SimConfig& config, SimState& state, WorkloadTask arriving) {
    if (arriving.core_request > config.topology.max_core_count())
        throw TwinError(ErrorCode::TaskUnschedulable, arriving.id,
                        "requests " + std::to_string(arriving.core_request) + " cores, largest host has " +
                            std::to_string(config.topology.max_core_count()));
    if (auto h = first_fit(config, state, arriving.core_request)) {
        place(config, state, *h, std::move(arriving));
    } else {
        state.pending_queue.push_back(std::move(arriving));
    }
}

StepResult step_to_next_event(const SimConfig& config, SimState& state, std::span<const PowerModelParams> params) {
    const Event e = *state.event_queue.begin();
    if (e.time < state.clock)
        throw TwinError(ErrorCode::ClockRegression, std::to_string(e.time), "event precedes clock " + std::to_string(state.clock));
    state.event_queue.erase(state.event_queue.begin());
    advance_progress(config, state, e.time - state.clock);
    state.clock = e.time;

    StepResult result{e, std::nullopt};
    switch (e.kind) {
    case EventKind::FragmentComplete: {
        auto& scheduled = state.hosts[e.host].scheduled_completions;
        std::erase(scheduled, e);
        complete_fragment(config, state, e);
        break;
    }
    case EventKind::TaskArrival: {
        auto node = state.arrivals.extract(e.task_id);
        if (!node.empty()) schedule(config, state, std::move(node.mapped()));
        break;
    }
    case EventKind::SampleTick: result.observation = observe(config, state, params); break;
    case EventKind::WindowEnd: break;
    }
    return result;
}

WindowOutput simulate_window(const SimConfig& config, const Window& window, SimState carryover,
                             const std::vector<WorkloadTask>& tasks, double r) {
    if (carryover.clock != window.start)
        throw TwinError(ErrorCode::ClockRegression, "carryover",
                        "state clock " + std::to_string(carryover.clock) + " != window start " + std::to_string(window.start));
    if (carryover.hosts.size() != config.topology.hosts.size())
        throw TwinError(ErrorCode::InvalidConfig, "carryover", "state does not match topology");
    if (window.duration() % config.sampling_granularity != 0)
        throw TwinError(ErrorCode::InvalidConfig, "window_duration", "not a multiple of sampling granularity");

    SimState state = std::move(carryover);
    for (const auto& t : tasks) {
        if (!window.contains(t.submit_time))
            throw TwinError(ErrorCode::InvalidWorkload, "submit_time", "task '" + t.id + "' outside window");
        state.arrivals.emplace(t.id, t);
        state.event_queue.insert(Event{t.submit_time, EventKind::TaskArrival, t.id, 0});
    }
    for (Seconds t = window.start; t < window.end; t += config.sampling_granularity)
        state.event_queue.insert(Event{t, EventKind::SampleTick, {}, 0});
    state.event_queue.insert(Event{window.end, EventKind::WindowEnd, {}, 0});

    const auto params = host_params(config, r);
    WindowOutput out;
    const auto samples = static_cast<std::size_t>(window.duration() / config.sampling_granularity);
    out.predictions.reserve(samples);
    out.tflops.reserve(samples);

    while (true) {
        auto step = step_to_next_event(config, state, params);
        if (config.trace_events) {
            json line{{"t", step.event.time}, {"event", kind_name(step.event.kind)}};
            if (!step.event.task_id.empty()) line["task"] = step.event.task_id;
            if (step.observation) line["power_w"] = step.observation->sample.power_w;
            out.trace.push_back(line.dump());
        }
        if (step.observation) {
            out.tflops.push_back({step.observation->sample.timestamp, step.observation->tflops});
            out.predictions.push_back(step.observation->sample);
            out.host_utilization.push_back(std::move(step.observation->host_utilization));
        }
        if (step.event.kind == EventKind::WindowEnd) break;
    }
    out.completed = std::move(state.completed);
    state.completed.clear();
    out.end_state = std::move(state);
    return out;
}

double cluster_tflops(const Topology& topology, std::span<const double> per_host_u, double flops_per_cycle) {
    double total = 0.0;
    for (std::size_t i = 0; i < topology.hosts.size() && i < per_host_u.size(); ++i) {
        const auto& h = topology.hosts[i];
        total += per_host_u[i] * static_cast<double>(h.core_count) * h.core_frequency_mhz * 1e6 * flops_per_cycle;
    }
    return total / 1e12;
}

double cluster_tflops(const Topology& topology, const std::map<std::string, double>& per_host_u, double flops_per_cycle) {
    std::vector<double> u;
    u.reserve(topology.hosts.size());
    for (const auto& h : topology.hosts) {
        auto it = per_host_u.find(h.id);
        u.push_back(it == per_host_u.end() ? 0.0 : it->second);
    }
    return cluster_tflops(topology, u, flops_per_cycle);
}

} // namespace dctwin::sim
