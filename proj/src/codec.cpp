#include "dctwin/codec.hpp"

#include "dctwin/error.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace dctwin {

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

SampleSource parse_source(const std::string& s) {
    if (s == "ground_truth") return SampleSource::GroundTruth;
    if (s == "prediction") return SampleSource::Prediction;
    throw std::invalid_argument("unknown source '" + s + "'");
}

RecommendationKind parse_kind(const std::string& s) {
    if (s == "underutilization") return RecommendationKind::Underutilization;
    if (s == "accuracy_degraded") return RecommendationKind::AccuracyDegraded;
    throw std::invalid_argument("unknown recommendation kind '" + s + "'");
}

} // namespace

std::string to_string(SampleSource s) {
    return s == SampleSource::GroundTruth ? "ground_truth" : "prediction";
}

std::string to_string(RecommendationKind k) {
    return k == RecommendationKind::Underutilization ? "underutilization" : "accuracy_degraded";
}

std::string to_string(RecommendationStatus s) {
    switch (s) {
    case RecommendationStatus::Pending: return "pending";
    case RecommendationStatus::Approved: return "approved";
    case RecommendationStatus::Rejected: return "rejected";
    }
    return "pending";
}

RecommendationStatus parse_status(const std::string& text) {
    if (text == "pending") return RecommendationStatus::Pending;
    if (text == "approved") return RecommendationStatus::Approved;
    if (text == "rejected") return RecommendationStatus::Rejected;
    throw std::invalid_argument("unknown recommendation status '" + text + "'");
}

std::int64_t to_epoch_ms(WallClock::time_point t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

WallClock::time_point from_epoch_ms(std::int64_t ms) {
    return WallClock::time_point{std::chrono::duration_cast<WallClock::duration>(std::chrono::milliseconds{ms})};
}

void to_json(json& j, const PowerModelParams& p) {
    j = json{{"p_idle_w", p.p_idle}, {"p_max_w", p.p_max}, {"r", p.r}};
}

void from_json(const json& j, PowerModelParams& p) {
    p.p_idle = j.at("p_idle_w").get<double>();
    p.p_max = j.at("p_max_w").get<double>();
    p.r = j.at("r").get<double>();
}

void to_json(json& j, const Window& w) {
    j = json{{"index", w.index}, {"start", w.start}, {"end", w.end}};
}

void from_json(const json& j, Window& w) {
    w.index = j.at("index").get<std::int64_t>();
    w.start = j.at("start").get<Seconds>();
    w.end = j.at("end").get<Seconds>();
}

void to_json(json& j, const TelemetrySample& s) {
    j = json{{"ts", s.timestamp}, {"power_w", s.power_w}, {"cpu_util", s.cpu_utilization}, {"source", to_string(s.source)}};
}

void from_json(const json& j, TelemetrySample& s) {
    s.timestamp = j.at("ts").get<Seconds>();
    s.power_w = j.at("power_w").get<double>();
    s.cpu_utilization = j.at("cpu_util").get<double>();
    s.source = parse_source(j.at("source").get<std::string>());
}

void to_json(json& j, const CalibrationResult& c) {
    json evaluated = json::array();
    for (const auto& e : c.evaluated) evaluated.push_back(json{{"r", e.r}, {"mape_percent", e.mape_percent}});
    j = json{{"evaluated", std::move(evaluated)},
             {"selected_r", c.selected_r},
             {"history_window", json::array({c.history_start, c.history_end})},
             {"produced_in_window", c.produced_in_window},
             {"applies_from_window", c.applies_from_window}};
}

void from_json(const json& j, CalibrationResult& c) {
    c.evaluated.clear();
    for (const auto& e : j.at("evaluated"))
        c.evaluated.push_back({e.at("r").get<double>(), e.at("mape_percent").get<double>()});
    c.selected_r = j.at("selected_r").get<double>();
    c.history_start = j.at("history_window").at(0).get<Seconds>();
    c.history_end = j.at("history_window").at(1).get<Seconds>();
    c.produced_in_window = j.at("produced_in_window").get<std::int64_t>();
    c.applies_from_window = j.at("applies_from_window").get<std::int64_t>();
}

void to_json(json& j, const TimedValue& v) {
    j = json{{"ts", v.timestamp}, {"value", v.value}};
}

void from_json(const json& j, TimedValue& v) {
    v.timestamp = j.at("ts").get<Seconds>();
    v.value = j.at("value").get<double>();
}

void to_json(json& j, const Recommendation& r) {
    j = json{{"id", r.id},
             {"created_in_window", r.created_in_window},
             {"kind", to_string(r.kind)},
             {"summary", r.summary},
             {"evidence", r.evidence},
             {"status", to_string(r.status)},
             {"decided_by", r.decided_by ? json(*r.decided_by) : json(nullptr)},
             {"decided_at_ms", r.decided_at ? json(to_epoch_ms(*r.decided_at)) : json(nullptr)}};
}

void from_json(const json& j, Recommendation& r) {
    r.id = j.at("id").get<std::string>();
    r.created_in_window = j.at("created_in_window").get<std::int64_t>();
    r.kind = parse_kind(j.at("kind").get<std::string>());
    r.summary = j.value("summary", "");
    r.evidence = j.value("evidence", std::map<std::string, double>{});
    r.status = parse_status(j.at("status").get<std::string>());
    r.decided_by.reset();
    r.decided_at.reset();
    if (j.contains("decided_by") && !j["decided_by"].is_null()) r.decided_by = j["decided_by"].get<std::string>();
    if (j.contains("decided_at_ms") && !j["decided_at_ms"].is_null())
        r.decided_at = from_epoch_ms(j["decided_at_ms"].get<std::int64_t>());
}

void to_json(json& j, const Fragment& f) {
    j = json{{"duration_s", f.duration}, {"cpu_demand_mhz", f.cpu_demand_mhz}};
}

void from_json(const json& j, Fragment& f) {
    f.duration = j.at("duration_s").get<Seconds>();
    f.cpu_demand_mhz = j.at("cpu_demand_mhz").get<double>();
}

void to_json(json& j, const WorkloadTask& t) {
    j = json{{"id", t.id}, {"submit_time_s", t.submit_time}, {"core_request", t.core_request}, {"fragments", t.fragments}};
}

void from_json(const json& j, WorkloadTask& t) {
    t.id = j.at("id").get<std::string>();
    t.submit_time = j.at("submit_time_s").get<Seconds>();
    t.core_request = j.at("core_request").get<int>();
    t.fragments = j.at("fragments").get<std::vector<Fragment>>();
}

Topology topology_from_json(const json& j, double default_r) {
    Topology t;
    try {
        t.name = j.value("name", "");
        for (const auto& h : j.at("hosts")) {
            HostSpec host;
            host.id = h.at("id").get<std::string>();
            host.core_count = h.at("core_count").get<int>();
            host.core_frequency_mhz = h.at("core_frequency_mhz").get<double>();
            host.memory_mib = h.value("memory_mib", std::int64_t{0});
            if (!h.contains("p_idle_w")) throw TwinError(ErrorCode::InvalidTopology, "p_idle", "host '" + host.id + "' omits p_idle_w");
            if (!h.contains("p_max_w")) throw TwinError(ErrorCode::InvalidTopology, "p_max", "host '" + host.id + "' omits p_max_w");
            host.power.p_idle = h.at("p_idle_w").get<double>();
            host.power.p_max = h.at("p_max_w").get<double>();
            host.power.r = h.value("r", default_r);
            t.hosts.push_back(std::move(host));
        }
    } catch (const json::exception& e) {
        throw TwinError(ErrorCode::InvalidTopology, "format", e.what());
    }
    return validate_topology(std::move(t));
}

json topology_to_json(const Topology& t) {
    json hosts = json::array();
    for (const auto& h : t.hosts) {
        hosts.push_back(json{{"id", h.id},
                             {"core_count", h.core_count},
                             {"core_frequency_mhz", h.core_frequency_mhz},
                             {"memory_mib", h.memory_mib},
                             {"p_idle_w", h.power.p_idle},
                             {"p_max_w", h.power.p_max}});
    }
    return json{{"name", t.name}, {"hosts", std::move(hosts)}};
}

Topology read_topology_file(const std::filesystem::path& path, double default_r) {
    std::ifstream in(path);
    if (!in) throw TwinError(ErrorCode::InvalidTopology, "file", "cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw TwinError(ErrorCode::InvalidTopology, "format", e.what());
    }
    return topology_from_json(j, default_r);
}

void write_topology_file(const std::filesystem::path& path, const Topology& t) {
    std::ofstream out(path);
    out << topology_to_json(t).dump(2) << '\n';
}

std::vector<WorkloadTask> read_workload_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw TwinError(ErrorCode::InvalidWorkload, "line " + std::to_string(line_no), what);
    };
    if (!std::getline(in, line)) return {};
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kWorkloadCsvHeader) fail("unexpected header '" + line + "'");

    std::vector<WorkloadTask> tasks;
    std::map<std::string, std::size_t> index_of;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cols = split_csv(line);
        if (cols.size() != 6) fail("expected 6 columns");
        std::string id(cols[0]);
        Seconds submit = 0;
        int cores = 0;
        std::size_t frag_index = 0;
        Fragment frag;
        if (!parse_number(cols[1], submit)) fail("submit_time_s");
        if (!parse_number(cols[2], cores)) fail("core_request");
        if (!parse_number(cols[3], frag_index)) fail("fragment_index");
        if (!parse_number(cols[4], frag.duration)) fail("duration_s");
        if (!parse_number(cols[5], frag.cpu_demand_mhz)) fail("cpu_demand_mhz");

        auto it = index_of.find(id);
        if (it == index_of.end()) {
            if (frag_index != 0) fail("fragment_index must start at 0");
            index_of.emplace(id, tasks.size());
            tasks.push_back(WorkloadTask{id, submit, cores, {frag}});
            continue;
        }
        auto& task = tasks[it->second];
        if (task.submit_time != submit || task.core_request != cores) fail("task attributes differ between fragments");
        if (frag_index != task.fragments.size()) fail("fragment_index not contiguous");
        task.fragments.push_back(frag);
    }
    return validate_workload(std::move(tasks));
}

std::vector<WorkloadTask> read_workload_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TwinError(ErrorCode::InvalidWorkload, "file", "cannot open " + path.string());
    return read_workload_csv(in);
}

void write_workload_csv(std::ostream& out, const std::vector<WorkloadTask>& tasks) {
    out << kWorkloadCsvHeader << '\n';
    for (const auto& t : tasks) {
        for (std::size_t i = 0; i < t.fragments.size(); ++i) {
            const auto& f = t.fragments[i];
            out << t.id << ',' << t.submit_time << ',' << t.core_request << ',' << i << ',' << f.duration << ','
                << shortest(f.cpu_demand_mhz) << '\n';
        }
    }
}

std::string format_telemetry_line(const TelemetrySample& s) {
    return json(s).dump();
}

TelemetrySample parse_telemetry_line(const std::string& line, std::size_t line_no) {
    try {
        auto sample = json::parse(line).get<TelemetrySample>();
        if (!(sample.power_w >= 0.0) || !(sample.cpu_utilization >= 0.0 && sample.cpu_utilization <= 1.0))
            throw std::invalid_argument("value out of range");
        return sample;
    } catch (const std::exception& e) {
        throw TwinError(ErrorCode::ParseError, std::to_string(line_no), e.what());
    }
}

std::vector<TelemetrySample> read_telemetry_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TwinError(ErrorCode::ParseError, "0", "cannot open " + path.string());
    std::vector<TelemetrySample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(parse_telemetry_line(line, line_no));
    }
    return out;
}

json metadata_to_json(const RunMetadata& m, bool include_wall_clock) {
    json j{{"acceleration_mode", m.acceleration_mode.to_string()}, {"correlation_id", m.correlation_id}};
    if (include_wall_clock) {
        j["simulation_started_at_ms"] = to_epoch_ms(m.simulation_started_at);
        j["simulation_finished_at_ms"] = to_epoch_ms(m.simulation_finished_at);
    }
    return j;
}

RunMetadata metadata_from_json(const json& j) {
    RunMetadata m;
    m.acceleration_mode = AccelerationMode::parse(j.at("acceleration_mode").get<std::string>());
    m.correlation_id = j.at("correlation_id").get<std::string>();
    if (j.contains("simulation_started_at_ms")) m.simulation_started_at = from_epoch_ms(j["simulation_started_at_ms"].get<std::int64_t>());
    if (j.contains("simulation_finished_at_ms")) m.simulation_finished_at = from_epoch_ms(j["simulation_finished_at_ms"].get<std::int64_t>());
    return m;
}

json report_to_json(const WindowReport& r, bool include_wall_clock) {
    json j;
    j["window"] = r.window;
    j["complete"] = r.complete;
    j["mape_percent"] = r.mape_percent ? json(*r.mape_percent) : json(nullptr);
    j["params_used"] = r.params_used;
    j["params_calibrated"] = r.params_calibrated;
    j["calibration"] = r.calibration ? json(*r.calibration) : json(nullptr);
    j["bias"] = json{{"over", r.bias.over}, {"under", r.bias.under}, {"exact", r.bias.exact}};
    j["predictions"] = r.predictions;
    j["ground_truth"] = r.ground_truth;
    j["performance_tflops"] = r.performance_tflops;
    j["efficiency_tflops_per_kwh"] = r.efficiency_tflops_per_kwh;
    j["metadata"] = metadata_to_json(r.metadata, include_wall_clock);
    return j;
}

WindowReport report_from_json(const json& j) {
    WindowReport r;
    r.window = j.at("window").get<Window>();
    r.complete = j.at("complete").get<bool>();
    if (!j.at("mape_percent").is_null()) r.mape_percent = j["mape_percent"].get<double>();
    r.params_used = j.at("params_used").get<PowerModelParams>();
    r.params_calibrated = j.at("params_calibrated").get<bool>();
    if (!j.at("calibration").is_null()) r.calibration = j["calibration"].get<CalibrationResult>();
    const auto& b = j.at("bias");
    r.bias = BiasCounts{b.at("over").get<std::int64_t>(), b.at("under").get<std::int64_t>(), b.at("exact").get<std::int64_t>()};
    r.predictions = j.at("predictions").get<std::vector<TelemetrySample>>();
    r.ground_truth = j.at("ground_truth").get<std::vector<TelemetrySample>>();
    r.performance_tflops = j.at("performance_tflops").get<std::vector<TimedValue>>();
    r.efficiency_tflops_per_kwh = j.at("efficiency_tflops_per_kwh").get<std::vector<TimedValue>>();
    r.metadata = metadata_from_json(j.at("metadata"));
    return r;
}

} // namespace dctwin
