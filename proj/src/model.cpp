#include "dctwin/model.hpp"

#include "dctwin/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace dctwin {

int Topology::max_core_count() const {
    int best = 0;
    for (const auto& h : hosts) best = std::max(best, h.core_count);
    return best;
}

Seconds WorkloadTask::total_duration() const {
    Seconds total = 0;
    for (const auto& f : fragments) total += f.duration;
    return total;
}

Window window_at(std::int64_t index, Seconds duration) {
    return Window{index, index * duration, (index + 1) * duration};
}

std::vector<Window> make_windows(Seconds duration, Seconds horizon) {
    if (duration <= 0) throw TwinError(ErrorCode::InvalidConfig, "window_duration", "must be positive");
    std::vector<Window> out;
    for (std::int64_t k = 0; k * duration < horizon; ++k) out.push_back(window_at(k, duration));
    return out;
}

std::size_t best_candidate(const std::vector<CandidateScore>& evaluated) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < evaluated.size(); ++i) {
        const auto& c = evaluated[i];
        const auto& b = evaluated[best];
        if (c.mape_percent < b.mape_percent || (c.mape_percent == b.mape_percent && c.r < b.r)) best = i;
    }
    return best;
}

AccelerationMode AccelerationMode::parse(const std::string& text) {
    if (text == "realtime" || text == "real-time") return real_time();
    if (text == "max" || text == "maximum") return maximum();
    if (text.rfind("fixed:", 0) == 0) {
        double f = 0.0;
        try {
            std::size_t used = 0;
            f = std::stod(text.substr(6), &used);
            if (used != text.size() - 6) f = 0.0;
        } catch (const std::exception&) {
            f = 0.0;
        }
        if (!(f > 0.0) || !std::isfinite(f))
            throw TwinError(ErrorCode::InvalidConfig, "acceleration", "fixed factor must be > 0: " + text);
        return fixed(f);
    }
    throw TwinError(ErrorCode::InvalidConfig, "acceleration", "expected realtime|fixed:<f>|max, got " + text);
}

std::string AccelerationMode::to_string() const {
    switch (kind) {
    case Kind::RealTime: return "realtime";
    case Kind::Maximum: return "max";
    case Kind::Fixed: {
        char buf[32];
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, factor);
        return "fixed:" + std::string(buf, ec == std::errc{} ? end : buf);
    }
    }
    return "max";
}

double AccelerationMode::speedup() const {
    switch (kind) {
    case Kind::RealTime: return 1.0;
    case Kind::Fixed: return factor;
    case Kind::Maximum: return 0.0;
    }
    return 0.0;
}

double WindowReport::mean_predicted_utilization() const {
    if (predictions.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : predictions) sum += s.cpu_utilization;
    return sum / static_cast<double>(predictions.size());
}

void Recommendation::decide(bool approve, std::string operator_name, WallClock::time_point when) {
    if (status != RecommendationStatus::Pending)
        throw TwinError(ErrorCode::InvalidTransition, id, "recommendation already decided");
    status = approve ? RecommendationStatus::Approved : RecommendationStatus::Rejected;
    decided_by = std::move(operator_name);
    decided_at = when;
}

void validate_params(const PowerModelParams& p) {
    if (!(p.p_idle >= 0.0) || !std::isfinite(p.p_idle))
        throw TwinError(ErrorCode::DomainError, "p_idle", "must be finite and >= 0");
    if (!(p.p_max >= p.p_idle) || !std::isfinite(p.p_max))
        throw TwinError(ErrorCode::DomainError, "p_max", "must be finite and >= p_idle");
    if (!(p.r >= kMinR && p.r <= kMaxR))
        throw TwinError(ErrorCode::DomainError, "r", "outside calibration bounds [0.5, 4.0]");
}

Topology validate_topology(Topology raw) {
    auto fail = [](const std::string& invariant, const std::string& host) {
        throw TwinError(ErrorCode::InvalidTopology, invariant, "host '" + host + "'");
    };
    if (raw.hosts.empty()) fail("no_hosts", "");
    std::set<std::string> seen;
    for (const auto& h : raw.hosts) {
        if (h.id.empty()) fail("id", h.id);
        if (h.core_count < 1) fail("core_count", h.id);
        if (!(h.core_frequency_mhz > 0.0) || !std::isfinite(h.core_frequency_mhz)) fail("core_frequency", h.id);
        if (!std::isfinite(h.capacity_mhz())) fail("capacity", h.id);
        if (h.memory_mib < 0) fail("memory", h.id);
        if (!(h.power.p_idle >= 0.0) || !std::isfinite(h.power.p_idle)) fail("p_idle", h.id);
        if (!(h.power.p_max >= h.power.p_idle) || !std::isfinite(h.power.p_max)) fail("p_max", h.id);
        if (!(h.power.r >= kMinR && h.power.r <= kMaxR)) fail("r", h.id);
        if (!seen.insert(h.id).second) fail("duplicate_id", h.id);
    }
    return raw;
}

std::vector<WorkloadTask> validate_workload(std::vector<WorkloadTask> tasks) {
    auto fail = [](const std::string& invariant, const std::string& task) {
        throw TwinError(ErrorCode::InvalidWorkload, invariant, "task '" + task + "'");
    };
    std::set<std::string> seen;
    for (const auto& t : tasks) {
        if (t.id.empty()) fail("id", t.id);
        if (t.submit_time < 0) fail("submit_time", t.id);
        if (t.core_request < 1) fail("core_request", t.id);
        if (t.fragments.empty()) fail("empty_fragments", t.id);
        for (const auto& f : t.fragments) {
            if (f.duration <= 0) fail("fragment_duration", t.id);
            if (!(f.cpu_demand_mhz >= 0.0) || !std::isfinite(f.cpu_demand_mhz)) fail("cpu_demand", t.id);
        }
        if (!seen.insert(t.id).second) fail("duplicate_id", t.id);
    }
    std::sort(tasks.begin(), tasks.end(), [](const WorkloadTask& a, const WorkloadTask& b) {
        if (a.submit_time != b.submit_time) return a.submit_time < b.submit_time;
        return a.id < b.id;
    });
    return tasks;
}

} // namespace dctwin
