#include "dctwin/error.hpp"

namespace dctwin {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidTopology: return "InvalidTopology";
    case ErrorCode::InvalidWorkload: return "InvalidWorkload";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TaskUnschedulable: return "TaskUnschedulable";
    case ErrorCode::ClockRegression: return "ClockRegression";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::IrregularSeries: return "IrregularSeries";
    case ErrorCode::MisalignedSeries: return "MisalignedSeries";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::DegenerateHistory: return "DegenerateHistory";
    case ErrorCode::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorCode::SourceStalled: return "SourceStalled";
    case ErrorCode::LiveSourceWithMaxAcceleration: return "LiveSourceWithMaxAcceleration";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::GranularityMismatch: return "GranularityMismatch";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::WorkspaceUnwritable: return "WorkspaceUnwritable";
    case ErrorCode::InvalidMetadata: return "InvalidMetadata";
    case ErrorCode::InvalidTransition: return "InvalidTransition";
    }
    return "Unknown";
}

namespace {
std::string compose(ErrorCode code, const std::string& detail, const std::string& message) {
    std::string out{to_string(code)};
    out += "(" + detail + ")";
    if (!message.empty()) out += ": " + message;
    return out;
}
} // namespace

TwinError::TwinError(ErrorCode code, std::string detail, const std::string& message)
    : std::runtime_error(compose(code, detail, message)), code_(code), detail_(std::move(detail)) {}

} // namespace dctwin
