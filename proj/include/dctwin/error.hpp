#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dctwin {

enum class ErrorCode {
    InvalidTopology,
    InvalidWorkload,
    InvalidConfig,
    TaskUnschedulable,
    ClockRegression,
    DomainError,
    IrregularSeries,
    MisalignedSeries,
    NoOverlap,
    InsufficientHistory,
    DegenerateHistory,
    AllCandidatesFailed,
    SourceStalled,
    LiveSourceWithMaxAcceleration,
    ParseError,
    GranularityMismatch,
    InvalidProfile,
    WorkspaceUnwritable,
    InvalidMetadata,
    InvalidTransition,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the twin. `detail` carries the machine-readable
// part (violated invariant, offending id, line number).
class TwinError : public std::runtime_error {
public:
    TwinError(ErrorCode code, std::string detail, const std::string& message = {});

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace dctwin
