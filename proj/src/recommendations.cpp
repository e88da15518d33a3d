#include "dctwin/recommendations.hpp"

#include "dctwin/calibrator.hpp"
#include "dctwin/codec.hpp"
#include "dctwin/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace dctwin {

std::vector<Recommendation> generate_recommendations(const WindowReport& report, std::span<const WindowReport> trailing,
                                                     const RecommendationRules& rules,
                                                     const std::set<RecommendationKind>& pending_kinds) {
    const std::size_t span = std::max<std::size_t>(1, rules.trailing_windows);
    const std::size_t take = std::min(trailing.size(), span - 1);
    std::vector<const WindowReport*> windows;
    for (std::size_t i = trailing.size() - take; i < trailing.size(); ++i) windows.push_back(&trailing[i]);
    windows.push_back(&report);

    std::vector<Recommendation> out;
    const auto k = report.window.index;
    const double span_windows = static_cast<double>(windows.size());

    double u_sum = 0.0;
    for (const auto* w : windows) u_sum += w->mean_predicted_utilization();
    const double mean_u = u_sum / span_windows;
    if (mean_u < rules.underutilization_threshold && !pending_kinds.contains(RecommendationKind::Underutilization)) {
        Recommendation rec;
        rec.id = "rec-" + std::to_string(k) + "-underutilization";
        rec.created_in_window = k;
        rec.kind = RecommendationKind::Underutilization;
        std::ostringstream summary;
        summary << "Cluster used " << static_cast<int>(mean_u * 100.0 + 0.5) << "% of its processing capacity over the last "
                << windows.size() << " windows; consider consolidating or powering down idle hosts.";
        rec.summary = summary.str();
        rec.evidence = {{"mean_u", mean_u}, {"span", span_windows}};
        out.push_back(std::move(rec));
    }

    std::vector<double> mapes;
    for (const auto* w : windows)
        if (w->mape_percent) mapes.push_back(*w->mape_percent);
    if (!mapes.empty()) {
        const double compliance = calib::threshold_compliance(mapes, rules.nfr1_threshold);
        if (compliance < rules.nfr1_fraction && !pending_kinds.contains(RecommendationKind::AccuracyDegraded)) {
            Recommendation rec;
            rec.id = "rec-" + std::to_string(k) + "-accuracy_degraded";
            rec.created_in_window = k;
            rec.kind = RecommendationKind::AccuracyDegraded;
            std::ostringstream summary;
            summary << "Prediction error stayed below " << rules.nfr1_threshold << "% in only "
                    << static_cast<int>(compliance * 100.0 + 0.5) << "% of recent windows; review the power model.";
            rec.summary = summary.str();
            rec.evidence = {{"compliance", compliance}, {"threshold", rules.nfr1_threshold}};
            out.push_back(std::move(rec));
        }
    }
    return out;
}

RecommendationStore::RecommendationStore(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<Recommendation> RecommendationStore::load_locked() const {
    std::vector<Recommendation> ordered;
    std::map<std::string, std::size_t> index;
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto rec = json::parse(line).get<Recommendation>();
        if (auto it = index.find(rec.id); it != index.end()) {
            ordered[it->second] = std::move(rec);
        } else {
            index.emplace(rec.id, ordered.size());
            ordered.push_back(std::move(rec));
        }
    }
    return ordered;
}

void RecommendationStore::append_locked(const Recommendation& rec) const {
    std::ofstream out(path_, std::ios::app);
    out << json(rec).dump() << '\n';
    if (!out) throw TwinError(ErrorCode::WorkspaceUnwritable, path_.string(), "append failed");
}

std::vector<Recommendation> RecommendationStore::list(std::optional<RecommendationStatus> status) const {
    std::lock_guard lock(mutex_);
    auto all = load_locked();
    if (!status) return all;
    std::erase_if(all, [&](const Recommendation& r) { return r.status != *status; });
    return all;
}

std::optional<Recommendation> RecommendationStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    for (auto& r : load_locked())
        if (r.id == id) return r;
    return std::nullopt;
}

std::set<RecommendationKind> RecommendationStore::pending_kinds() const {
    std::lock_guard lock(mutex_);
    std::set<RecommendationKind> kinds;
    for (const auto& r : load_locked())
        if (r.status == RecommendationStatus::Pending) kinds.insert(r.kind);
    return kinds;
}

std::vector<Recommendation> RecommendationStore::add(const std::vector<Recommendation>& recs) {
    std::lock_guard lock(mutex_);
    std::set<RecommendationKind> pending;
    std::set<std::string> ids;
    for (const auto& r : load_locked()) {
        ids.insert(r.id);
        if (r.status == RecommendationStatus::Pending) pending.insert(r.kind);
    }
    std::vector<Recommendation> added;
    for (const auto& r : recs) {
        if (r.status != RecommendationStatus::Pending || pending.contains(r.kind) || ids.contains(r.id)) continue;
        append_locked(r);
        pending.insert(r.kind);
        ids.insert(r.id);
        added.push_back(r);
    }
    return added;
}

RecommendationStore::DecisionOutcome RecommendationStore::decide(const std::string& id, bool approve,
                                                                 const std::string& operator_name,
                                                                 WallClock::time_point when) {
    std::lock_guard lock(mutex_);
    for (auto& r : load_locked()) {
        if (r.id != id) continue;
        if (r.status != RecommendationStatus::Pending) return DecisionOutcome::AlreadyDecided;
        r.decide(approve, operator_name, when);
        append_locked(r);
        return DecisionOutcome::Ok;
    }
    return DecisionOutcome::NotFound;
}

} // namespace dctwin
