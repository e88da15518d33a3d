#include "dctwin/workspace.hpp"

#include "dctwin/error.hpp"

#include <fstream>
#include <sstream>

namespace dctwin {

namespace fs = std::filesystem;

void write_file_atomically(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw TwinError(ErrorCode::WorkspaceUnwritable, path.string(), "cannot open for writing");
        out << content;
        out.flush();
        if (!out) throw TwinError(ErrorCode::WorkspaceUnwritable, path.string(), "write failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw TwinError(ErrorCode::WorkspaceUnwritable, path.string(), ec.message());
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {}

fs::path Workspace::report_path(std::int64_t k) const {
    return root_ / "reports" / ("window-" + std::to_string(k) + ".json");
}

void Workspace::prepare_fresh_run(const json& config) {
    std::error_code ec;
    fs::create_directories(root_ / "reports", ec);
    if (ec) throw TwinError(ErrorCode::WorkspaceUnwritable, root_.string(), ec.message());
    for (const auto& entry : fs::directory_iterator(root_ / "reports")) fs::remove(entry.path(), ec);
    for (const auto& p : {calibrations_log(), recommendations_log(), metadata_log(), state_file()}) fs::remove(p, ec);
    write_file_atomically(config_file(), config.dump(2) + "\n");
}

void Workspace::append_line(const fs::path& path, const std::string& line) const {
    std::lock_guard lock(append_mutex_);
    std::ofstream out(path, std::ios::app);
    out << line << '\n';
    if (!out) throw TwinError(ErrorCode::WorkspaceUnwritable, path.string(), "append failed");
}

void Workspace::write_report(const WindowReport& report) const {
    write_file_atomically(report_path(report.window.index), report_to_json(report).dump() + "\n");
}

void Workspace::append_calibration(const CalibrationResult& result) const {
    append_line(calibrations_log(), json(result).dump());
}

void Workspace::append_metadata(std::int64_t window, const RunMetadata& metadata) const {
    json j = metadata_to_json(metadata, true);
    j["window"] = window;
    append_line(metadata_log(), j.dump());
}

void Workspace::write_state(const WorkspaceState& state) const {
    json j{{"committed_windows", state.committed_windows},
           {"current_params", state.current_params},
           {"current_params_calibrated", state.current_params_calibrated}};
    write_file_atomically(state_file(), j.dump() + "\n");
}

bool Workspace::readable() const {
    std::error_code ec;
    return fs::is_directory(root_, ec);
}

std::optional<WorkspaceState> Workspace::read_state() const {
    std::ifstream in(state_file());
    if (!in) return std::nullopt;
    try {
        json j = json::parse(in);
        WorkspaceState s;
        s.committed_windows = j.at("committed_windows").get<std::int64_t>();
        s.current_params = j.at("current_params").get<PowerModelParams>();
        s.current_params_calibrated = j.value("current_params_calibrated", false);
        return s;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::optional<std::string> Workspace::read_report_text(std::int64_t k) const {
    std::ifstream in(report_path(k), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<WindowReport> Workspace::read_report(std::int64_t k) const {
    auto text = read_report_text(k);
    if (!text) return std::nullopt;
    return report_from_json(json::parse(*text));
}

std::vector<WindowReport> Workspace::committed_reports() const {
    std::vector<WindowReport> out;
    const auto state = read_state();
    if (!state) return out;
    for (std::int64_t k = 0; k < state->committed_windows; ++k) {
        if (auto r = read_report(k)) out.push_back(std::move(*r));
    }
    return out;
}

std::vector<json> Workspace::read_metadata() const {
    std::vector<json> out;
    std::ifstream in(metadata_log());
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

} // namespace dctwin
