#pragma once

// SLO recommendations for the human operator and their persisted decisions.

#include "dctwin/model.hpp"

#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <vector>

namespace dctwin {

struct RecommendationRules {
    std::size_t trailing_windows = 24;
    double underutilization_threshold = 0.30;
    double nfr1_threshold = 10.0;
    double nfr1_fraction = 0.90;
};

/// Trigger rules over the trailing span (the current report plus up to
/// trailing_windows - 1 predecessors from `trailing`):
///  - Underutilization when mean predicted cluster utilization < threshold;
///  - AccuracyDegraded when the fraction of windows with MAPE below the accuracy
///    threshold is < nfr1_fraction.
/// Kinds in `pending_kinds` are not emitted again.
std::vector<Recommendation> generate_recommendations(const WindowReport& report, std::span<const WindowReport> trailing,
                                                     const RecommendationRules& rules,
                                                     const std::set<RecommendationKind>& pending_kinds = {});

/// Append-only recommendation log. Each line is a full record; the last line
/// for an id is its current state. All operations serialize on one lock.
class RecommendationStore {
public:
    enum class DecisionOutcome { Ok, NotFound, AlreadyDecided };

    explicit RecommendationStore(std::filesystem::path path);

    std::vector<Recommendation> list(std::optional<RecommendationStatus> status = std::nullopt) const;
    std::optional<Recommendation> get(const std::string& id) const;
    std::set<RecommendationKind> pending_kinds() const;

    /// Appends pending records; a kind that already has a pending record is skipped.
    std::vector<Recommendation> add(const std::vector<Recommendation>& recs);

    DecisionOutcome decide(const std::string& id, bool approve, const std::string& operator_name,
                           WallClock::time_point when = WallClock::now());

    const std::filesystem::path& path() const { return path_; }

private:
    std::vector<Recommendation> load_locked() const;
    void append_locked(const Recommendation& rec) const;

    std::filesystem::path path_;
    mutable std::mutex mutex_;
};

} // namespace dctwin
