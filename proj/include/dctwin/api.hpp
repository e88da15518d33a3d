#pragma once

// HTTP/JSON surface for the operator console: twin status, committed reports,
// metric series, and the recommendation decision workflow under /api/v1.

#include "dctwin/codec.hpp"
#include "dctwin/orchestrator.hpp"
#include "dctwin/recommendations.hpp"
#include "dctwin/telemetry.hpp"
#include "dctwin/workspace.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace dctwin::api {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

inline constexpr const char* kMetrics[] = {"power_predicted", "power_actual", "mape", "tflops", "efficiency", "utilization"};

class ApiService {
public:
    struct Options {
        std::filesystem::path workspace;
        std::shared_ptr<RecommendationStore> recommendations; // defaults to the workspace log
        std::shared_ptr<TwinControl> control;
        bool control_enabled = false;
        std::shared_ptr<telemetry::StreamFeed> live_feed;
        double nfr1_threshold = 10.0;
    };

    explicit ApiService(Options options);

    /// Routes one request. Only POST decision/control/telemetry have side effects.
    ApiResponse handle(const ApiRequest& request) const;

    /// Snapshot over committed windows only. Nullopt when the workspace is unreadable.
    std::optional<json> snapshot() const;

private:
    ApiResponse status() const;
    ApiResponse report(const std::string& k) const;
    ApiResponse report_range(const ApiRequest& request) const;
    ApiResponse series(const std::string& metric) const;
    ApiResponse list_recommendations(const ApiRequest& request) const;
    ApiResponse decide(const std::string& id, const std::string& body) const;
    ApiResponse control(const std::string& body) const;
    ApiResponse ingest(const ApiRequest& request) const;

    Options options_;
    Workspace workspace_;
};

/// "host:port"; DCTWIN_API_ADDR overrides `configured` when set.
std::pair<std::string, int> resolve_address(const std::string& configured);

class ApiServer {
public:
    ApiServer(std::shared_ptr<const ApiService> service, std::string cors_origin = "*");
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

private:
    std::shared_ptr<const ApiService> service_;
    std::string cors_origin_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = -1;
};

} // namespace dctwin::api
