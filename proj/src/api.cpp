#include "dctwin/api.hpp"

#include "dctwin/calibrator.hpp"
#include "dctwin/error.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <sstream>

namespace dctwin::api {

namespace {

ApiResponse json_response(int status, const json& body) { return ApiResponse{status, body.dump(), "application/json"}; }

ApiResponse error(int status, const std::string& message) { return json_response(status, json{{"error", message}}); }

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '/'))
        if (!part.empty()) parts.push_back(part);
    return parts;
}

std::optional<std::int64_t> parse_index(const std::string& text) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || value < 0) return std::nullopt;
    return value;
}

std::string trim_newline(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

} // namespace

ApiService::ApiService(Options options) : options_(std::move(options)), workspace_(options_.workspace) {
    if (!options_.recommendations)
        options_.recommendations = std::make_shared<RecommendationStore>(workspace_.recommendations_log());
}

ApiResponse ApiService::handle(const ApiRequest& request) const {
    const auto parts = split_path(request.path);
    if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1") return error(404, "unknown route");
    const std::string& resource = parts[2];
    const bool get = request.method == "GET";
    const bool post = request.method == "POST";

    try {
        if (resource == "status" && parts.size() == 3 && get) return status();
        if (resource == "reports" && get) {
            if (parts.size() == 3) return report_range(request);
            if (parts.size() == 4) return report(parts[3]);
        }
        if (resource == "series" && parts.size() == 4 && get) return series(parts[3]);
        if (resource == "recommendations") {
            if (parts.size() == 3 && get) return list_recommendations(request);
            if (parts.size() == 5 && parts[4] == "decision" && post) return decide(parts[3], request.body);
        }
        if (resource == "control" && parts.size() == 3 && post) return control(request.body);
        if (resource == "telemetry" && parts.size() == 3 && post) return ingest(request);
    } catch (const std::exception& e) {
        if (!workspace_.readable()) return error(503, "workspace unreadable");
        return error(500, e.what());
    }
    return error(404, "unknown route");
}

std::optional<json> ApiService::snapshot() const {
    if (!workspace_.readable()) return std::nullopt;
    const auto state = workspace_.read_state();
    const auto reports = workspace_.committed_reports();

    json mape_series = json::array();
    std::vector<double> mapes;
    BiasCounts bias;
    for (const auto& r : reports) {
        mape_series.push_back(json{{"window", r.window.index},
                                   {"mape", r.mape_percent ? json(*r.mape_percent) : json(nullptr)},
                                   {"calibrated", r.params_calibrated}});
        if (r.mape_percent) mapes.push_back(*r.mape_percent);
        bias.over += r.bias.over;
        bias.under += r.bias.under;
        bias.exact += r.bias.exact;
    }
    const double total = static_cast<double>(bias.total());
    json latest = nullptr;
    if (!reports.empty()) {
        const auto& r = reports.back();
        latest = json{{"window", r.window},
                      {"complete", r.complete},
                      {"mape_percent", r.mape_percent ? json(*r.mape_percent) : json(nullptr)},
                      {"params_used", r.params_used},
                      {"params_calibrated", r.params_calibrated},
                      {"mean_utilization", r.mean_predicted_utilization()},
                      {"samples", r.predictions.size()},
                      {"correlation_id", r.metadata.correlation_id}};
    }
    return json{{"current_window", state ? state->committed_windows : 0},
                {"latest_report", latest},
                {"current_params", state ? json(state->current_params) : json(nullptr)},
                {"current_params_calibrated", state ? state->current_params_calibrated : false},
                {"compliance_nfr1", mapes.empty() ? json(nullptr) : json(calib::threshold_compliance(mapes, options_.nfr1_threshold))},
                {"mape_series", mape_series},
                {"bias_summary",
                 {{"over", bias.over},
                  {"under", bias.under},
                  {"exact", bias.exact},
                  {"underestimated_fraction", total > 0 ? bias.under / total : 0.0},
                  {"overestimated_fraction", total > 0 ? bias.over / total : 0.0}}},
                {"pending_recommendations", options_.recommendations->list(RecommendationStatus::Pending).size()},
                {"paused", options_.control ? options_.control->paused() : false}};
}

ApiResponse ApiService::status() const {
    auto snap = snapshot();
    if (!snap) return error(503, "workspace unreadable");
    return json_response(200, *snap);
}

ApiResponse ApiService::report(const std::string& k) const {
    if (!workspace_.readable()) return error(503, "workspace unreadable");
    const auto index = parse_index(k);
    if (!index) return error(404, "unknown window");
    const auto state = workspace_.read_state();
    if (!state || *index >= state->committed_windows) return error(404, "unknown window");
    auto text = workspace_.read_report_text(*index);
    if (!text) return error(404, "unknown window");
    return ApiResponse{200, trim_newline(std::move(*text)), "application/json"};
}

ApiResponse ApiService::report_range(const ApiRequest& request) const {
    if (!workspace_.readable()) return error(503, "workspace unreadable");
    const auto state = workspace_.read_state();
    const std::int64_t committed = state ? state->committed_windows : 0;
    std::int64_t from = 0;
    std::int64_t to = committed - 1;
    if (auto it = request.query.find("from"); it != request.query.end() && !it->second.empty()) {
        auto v = parse_index(it->second);
        if (!v) return error(400, "invalid 'from'");
        from = *v;
    }
    if (auto it = request.query.find("to"); it != request.query.end() && !it->second.empty()) {
        auto v = parse_index(it->second);
        if (!v) return error(400, "invalid 'to'");
        to = *v;
    }
    std::string body = "[";
    bool first = true;
    for (std::int64_t k = from; k <= std::min(to, committed - 1); ++k) {
        auto text = workspace_.read_report_text(k);
        if (!text) continue;
        if (!first) body += ",";
        body += trim_newline(std::move(*text));
        first = false;
    }
    body += "]";
    return ApiResponse{200, body, "application/json"};
}

ApiResponse ApiService::series(const std::string& metric) const {
    if (std::find(std::begin(kMetrics), std::end(kMetrics), metric) == std::end(kMetrics))
        return error(400, "unknown metric '" + metric + "'");
    if (!workspace_.readable()) return error(503, "workspace unreadable");
    json out = json::array();
    for (const auto& r : workspace_.committed_reports()) {
        if (metric == "power_predicted") {
            for (const auto& s : r.predictions) out.push_back(json{{"ts", s.timestamp}, {"value", s.power_w}});
        } else if (metric == "power_actual") {
            for (const auto& s : r.ground_truth) out.push_back(json{{"ts", s.timestamp}, {"value", s.power_w}});
        } else if (metric == "utilization") {
            for (const auto& s : r.predictions) out.push_back(json{{"ts", s.timestamp}, {"value", s.cpu_utilization}});
        } else if (metric == "tflops") {
            for (const auto& v : r.performance_tflops) out.push_back(json(v));
        } else if (metric == "efficiency") {
            for (const auto& v : r.efficiency_tflops_per_kwh) out.push_back(json(v));
        } else if (metric == "mape") {
            if (!r.mape_percent) continue;
            out.push_back(json{{"ts", r.window.start},
                               {"window", r.window.index},
                               {"value", *r.mape_percent},
                               {"calibrated", r.params_calibrated}});
        }
    }
    return json_response(200, out);
}

ApiResponse ApiService::list_recommendations(const ApiRequest& request) const {
    std::optional<RecommendationStatus> status;
    if (auto it = request.query.find("status"); it != request.query.end() && !it->second.empty()) {
        try {
            status = parse_status(it->second);
        } catch (const std::invalid_argument&) {
            return error(400, "invalid status '" + it->second + "'");
        }
    }
    return json_response(200, json(options_.recommendations->list(status)));
}

ApiResponse ApiService::decide(const std::string& id, const std::string& body) const {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        return error(400, "body must be JSON");
    }
    const std::string decision = j.value("decision", "");
    const std::string operator_name = j.value("operator", "");
    if (decision != "approve" && decision != "reject") return error(400, "decision must be approve or reject");
    if (operator_name.empty()) return error(400, "operator is required");
    switch (options_.recommendations->decide(id, decision == "approve", operator_name)) {
    case RecommendationStore::DecisionOutcome::NotFound: return error(404, "unknown recommendation '" + id + "'");
    case RecommendationStore::DecisionOutcome::AlreadyDecided: return error(409, "recommendation already decided");
    case RecommendationStore::DecisionOutcome::Ok: break;
    }
    return json_response(200, json(*options_.recommendations->get(id)));
}

ApiResponse ApiService::control(const std::string& body) const {
    if (!options_.control_enabled || !options_.control) return error(403, "runtime control disabled");
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        return error(400, "body must be JSON");
    }
    const std::string action = j.value("action", "");
    if (action == "pause") {
        options_.control->pause();
    } else if (action == "resume") {
        options_.control->resume();
    } else if (action == "set_acceleration") {
        try {
            options_.control->request_acceleration(AccelerationMode::parse(j.value("value", "")));
        } catch (const TwinError& e) {
            return error(400, e.what());
        }
    } else {
        return error(400, "action must be pause, resume or set_acceleration");
    }
    return json_response(200, json{{"ok", true}, {"paused", options_.control->paused()}});
}

ApiResponse ApiService::ingest(const ApiRequest& request) const {
    if (!options_.live_feed) return error(404, "no live telemetry stream attached");
    std::size_t accepted = 0;
    std::stringstream ss(request.body);
    std::string line;
    try {
        while (std::getline(ss, line)) {
            if (trim_newline(line).empty()) continue;
            if (options_.live_feed->push_line(trim_newline(line))) ++accepted;
        }
    } catch (const TwinError& e) {
        return json_response(400, json{{"error", e.what()}, {"accepted", accepted}});
    }
    if (auto it = request.query.find("close"); it != request.query.end() && (it->second == "1" || it->second == "true"))
        options_.live_feed->close();
    return json_response(202, json{{"accepted", accepted}});
}

std::pair<std::string, int> resolve_address(const std::string& configured) {
    std::string address = configured;
    if (const char* env = std::getenv("DCTWIN_API_ADDR"); env && *env) address = env;
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw TwinError(ErrorCode::InvalidConfig, "api.address", "expected host:port");
    const auto port = parse_index(address.substr(colon + 1));
    if (!port || *port > 65535) throw TwinError(ErrorCode::InvalidConfig, "api.address", "invalid port");
    return {address.substr(0, colon), static_cast<int>(*port)};
}

ApiServer::ApiServer(std::shared_ptr<const ApiService> service, std::string cors_origin)
    : service_(std::move(service)), cors_origin_(std::move(cors_origin)), server_(std::make_unique<httplib::Server>()) {
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
        ApiRequest request{req.method, req.path, {}, req.body};
        for (const auto& [k, v] : req.params) request.query[k] = v;
        const auto response = service_->handle(request);
        res.status = response.status;
        res.set_content(response.body, response.content_type);
    };
    server_->Get(R"(/api/v1/.*)", dispatch);
    server_->Post(R"(/api/v1/.*)", dispatch);
    server_->Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_->set_default_headers({{"Access-Control-Allow-Origin", cors_origin_},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                  {"Access-Control-Allow-Headers", "Content-Type"}});
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw TwinError(ErrorCode::InvalidConfig, "api.address", "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void ApiServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

} // namespace dctwin::api
