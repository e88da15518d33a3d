// dc-twin: command-line driver for the datacenter digital twin.
//
//   dc-twin run --config <path> [--acceleration realtime|fixed:<f>|max] [--no-calibration] [--horizon <s>]
//   dc-twin replay-check --config <path>
//   dc-twin synth --profile <name> --days <n> --out <dir> [--seed <n>] [--r-step <day>:<r>]...
//   dc-twin serve --workspace <dir> [--address host:port]

#include "dctwin/api.hpp"
#include "dctwin/codec.hpp"
#include "dctwin/error.hpp"
#include "dctwin/orchestrator.hpp"
#include "dctwin/telemetry.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace dctwin;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSource = 3;

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::SourceStalled:
    case ErrorCode::IrregularSeries:
    case ErrorCode::MisalignedSeries:
    case ErrorCode::WorkspaceUnwritable: return kExitSource;
    default: return kExitConfig;
    }
}

std::shared_ptr<TwinControl> g_control;

extern "C" void on_signal(int) {
    if (g_control) g_control->stop();
}

std::vector<WorkloadTask> load_workload(const TwinConfig& config) {
    std::ifstream in(config.workload_path);
    if (!in) throw TwinError(ErrorCode::InvalidConfig, "workload", "cannot open " + config.workload_path.string());
    return read_workload_csv(in);
}

void print_summary(const RunSummary& summary) {
    std::size_t with_mape = 0;
    double mape_sum = 0.0;
    for (const auto& r : summary.reports) {
        if (!r.mape_percent) continue;
        ++with_mape;
        mape_sum += *r.mape_percent;
    }
    std::cout << "windows: " << summary.reports.size() << "\n"
              << "stalled windows: " << summary.stalled_windows << "\n"
              << "calibrations: " << summary.calibrations_succeeded << " ok, " << summary.calibrations_failed
              << " skipped\n";
    if (with_mape > 0) std::cout << "mean MAPE: " << mape_sum / static_cast<double>(with_mape) << " %\n";
    std::cout << "wall time: " << summary.wall_time.count() << " s\n";
}

int cmd_run(const std::string& config_path, const std::string& acceleration, bool no_calibration,
            std::optional<Seconds> horizon) {
    TwinConfig config = load_config(config_path);
    if (!acceleration.empty()) config.acceleration = AccelerationMode::parse(acceleration);
    if (no_calibration) config.calibration.enabled = false;
    if (horizon) config.horizon = *horizon;
    validate(config);
    const auto workload = load_workload(config);

    RunOptions options;
    options.control = std::make_shared<TwinControl>();
    options.recommendations = std::make_shared<RecommendationStore>(Workspace(config.workspace).recommendations_log());
    g_control = options.control;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    std::shared_ptr<telemetry::StreamFeed> stream;
    if (config.telemetry.live()) {
        stream = std::make_shared<telemetry::StreamFeed>(config.telemetry.granularity, config.telemetry_buffer);
        options.feed = stream;
        // Records arrive on stdin unless the API ingest endpoint is used.
        if (config.telemetry.endpoint.empty() || config.telemetry.endpoint == "stdin") {
            std::thread([stream] {
                std::string line;
                while (std::getline(std::cin, line)) {
                    if (line.empty()) continue;
                    try {
                        stream->push_line(line);
                    } catch (const TwinError& e) {
                        std::cerr << "dc-twin: dropped record: " << e.what() << "\n";
                    }
                }
                stream->close();
            }).detach();
        }
    }

    std::unique_ptr<api::ApiServer> server;
    const bool api_requested = config.api.enabled || std::getenv("DCTWIN_API_ADDR") != nullptr;
    if (api_requested) {
        api::ApiService::Options api_options;
        api_options.workspace = config.workspace;
        api_options.recommendations = options.recommendations;
        api_options.control = options.control;
        api_options.control_enabled = config.api.control_enabled;
        api_options.live_feed = stream;
        api_options.nfr1_threshold = config.nfr1_threshold;
        auto service = std::make_shared<const api::ApiService>(api_options);
        const auto [host, port] = api::resolve_address(config.api.address);
        server = std::make_unique<api::ApiServer>(service, config.api.cors_origin);
        // Bind after the workspace is prepared so a fresh run never serves stale reports.
        options.on_started = [&server, host, port] {
            const int bound = server->start(host, port);
            std::cerr << "dc-twin: API listening on " << host << ":" << bound << "\n";
        };
    }

    const RunSummary summary = run_loop(config, workload, options);
    print_summary(summary);
    if (server) server->stop();
    return kExitOk;
}

int cmd_replay_check(const std::string& config_path) {
    TwinConfig config = load_config(config_path);
    if (config.telemetry.live()) {
        std::cerr << "dc-twin: replay-check needs a file-backed telemetry source\n";
        return kExitConfig;
    }
    config.acceleration = AccelerationMode::maximum();
    config.api.enabled = false;
    validate(config);
    const auto workload = load_workload(config);

    const fs::path base = config.workspace;
    const fs::path a = base.string() + ".check-a";
    const fs::path b = base.string() + ".check-b";
    for (const auto& dir : {a, b}) {
        fs::remove_all(dir);
        TwinConfig copy = config;
        copy.workspace = dir;
        run_loop(copy, workload);
    }

    const Workspace wa(a);
    const Workspace wb(b);
    const auto sa = wa.read_state();
    const auto sb = wb.read_state();
    if (!sa || !sb || sa->committed_windows != sb->committed_windows) {
        std::cout << "replay-check: FAIL (committed window counts differ)\n";
        return kExitFailure;
    }
    for (std::int64_t k = 0; k < sa->committed_windows; ++k) {
        if (wa.read_report_text(k) != wb.read_report_text(k)) {
            std::cout << "replay-check: FAIL (window " << k << " differs)\n";
            return kExitFailure;
        }
    }
    std::cout << "replay-check: PASS (" << sa->committed_windows << " windows byte-identical)\n";
    fs::remove_all(a);
    fs::remove_all(b);
    return kExitOk;
}

int cmd_synth(const std::string& profile_name, double days, const fs::path& out, std::uint64_t seed,
              const std::vector<std::string>& r_steps) {
    auto profile = telemetry::named_profile(profile_name);
    if (!r_steps.empty()) {
        profile.r_schedule.resize(1);
        for (const auto& step : r_steps) {
            const auto colon = step.find(':');
            if (colon == std::string::npos)
                throw TwinError(ErrorCode::InvalidProfile, "r-step", "expected <day>:<r>, got '" + step + "'");
            const double day = std::stod(step.substr(0, colon));
            const double r = std::stod(step.substr(colon + 1));
            profile.r_schedule.emplace_back(static_cast<Seconds>(day * 86400.0), r);
        }
        std::sort(profile.r_schedule.begin(), profile.r_schedule.end());
    }
    telemetry::validate(profile);

    const auto raw = static_cast<Seconds>(days * 86400.0);
    const Seconds horizon = raw / profile.window_duration * profile.window_duration;
    if (horizon <= 0) throw TwinError(ErrorCode::InvalidConfig, "days", "horizon shorter than one window");
    const auto trace = telemetry::synthesize_ground_truth(profile, horizon, seed);
    telemetry::write_trace(out, profile, trace);

    TwinConfig config;
    config.topology_path = "topology.json";
    config.workload_path = "workload.csv";
    config.telemetry.path = "telemetry.jsonl";
    config.telemetry.granularity = profile.granularity;
    config.sim.sampling_granularity = profile.granularity;
    config.window_duration = profile.window_duration;
    config.horizon = horizon;
    config.initial_r = profile.initial_r;
    config.workspace = "workspace";
    config.run_label = profile.name;
    write_file_atomically(out / "config.json", config_to_json(config).dump(2) + "\n");

    std::cout << "wrote " << trace.tasks.size() << " tasks and " << trace.telemetry.size() << " samples to "
              << out.string() << "\n";
    return kExitOk;
}

int cmd_serve(const fs::path& workspace, const std::string& address, double nfr1_threshold) {
    api::ApiService::Options options;
    options.workspace = workspace;
    options.nfr1_threshold = nfr1_threshold;
    auto service = std::make_shared<const api::ApiService>(options);
    const auto [host, port] = api::resolve_address(address);
    api::ApiServer server(service);
    const int bound = server.start(host, port);
    std::cerr << "dc-twin: serving " << workspace.string() << " on " << host << ":" << bound << "\n";

    g_control = std::make_shared<TwinControl>();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_control->stop_requested()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server.stop();
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Datacenter digital twin"};
    app.require_subcommand(1);

    std::string config_path;
    std::string acceleration;
    bool no_calibration = false;
    std::optional<Seconds> horizon;
    auto* run = app.add_subcommand("run", "Twin a datacenter from a config file");
    run->add_option("--config", config_path, "Twin config (JSON)")->required();
    run->add_option("--acceleration", acceleration, "realtime | fixed:<f> | max");
    run->add_flag("--no-calibration", no_calibration, "Keep the initial power exponent");
    run->add_option("--horizon", horizon, "Stop after this many simulated seconds");

    auto* check = app.add_subcommand("replay-check", "Run twice in maximum mode and compare reports byte for byte");
    check->add_option("--config", config_path, "Twin config (JSON)")->required();

    std::string profile;
    double days = 1.0;
    std::string out;
    std::uint64_t seed = 42;
    std::vector<std::string> r_steps;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic ground-truth trace");
    synth->add_option("--profile", profile, "Profile name")->required()->check(CLI::IsMember(telemetry::profile_names()));
    synth->add_option("--days", days, "Trace length in days")->required()->check(CLI::PositiveNumber);
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_option("--seed", seed, "RNG seed");
    synth->add_option("--r-step", r_steps, "Replace the exponent schedule with steps <day>:<r> (repeatable)");

    std::string workspace;
    std::string address = "127.0.0.1:8080";
    double nfr1_threshold = 10.0;
    auto* serve = app.add_subcommand("serve", "Serve the API over an existing workspace");
    serve->add_option("--workspace", workspace, "Workspace directory")->required();
    serve->add_option("--address", address, "host:port (DCTWIN_API_ADDR overrides)");
    serve->add_option("--nfr1-threshold", nfr1_threshold, "MAPE threshold in percent");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(config_path, acceleration, no_calibration, horizon);
        if (*check) return cmd_replay_check(config_path);
        if (*synth) return cmd_synth(profile, days, out, seed, r_steps);
        if (*serve) return cmd_serve(workspace, address, nfr1_threshold);
    } catch (const TwinError& e) {
        std::cerr << "dc-twin: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "dc-twin: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}
