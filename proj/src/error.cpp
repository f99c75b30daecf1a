#include "avqoe/error.hpp"

namespace avqoe {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InsufficientClips: return "InsufficientClips";
        case ErrorCode::MissingGoldSpec: return "MissingGoldSpec";
        case ErrorCode::MissingTrappingSpec: return "MissingTrappingSpec";
        case ErrorCode::CalibrationOutOfRange: return "CalibrationOutOfRange";
        case ErrorCode::DistanceOutOfRange: return "DistanceOutOfRange";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::MissingPlate: return "MissingPlate";
        case ErrorCode::MalformedTask: return "MalformedTask";
        case ErrorCode::ClipTooShort: return "ClipTooShort";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::MalformedSubmission: return "MalformedSubmission";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::EmptyVotes: return "EmptyVotes";
        case ErrorCode::UnmatchedEntity: return "UnmatchedEntity";
        case ErrorCode::DegenerateInput: return "DegenerateInput";
        case ErrorCode::TooFewEntities: return "TooFewEntities";
        case ErrorCode::DegenerateLandmarks: return "DegenerateLandmarks";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::FrameTooSmall: return "FrameTooSmall";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NonPsdCovariance: return "NonPsdCovariance";
        case ErrorCode::TooFewModels: return "TooFewModels";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

ErrorCategory category(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidConfig:
        case ErrorCode::InsufficientClips:
        case ErrorCode::MissingGoldSpec:
        case ErrorCode::MissingTrappingSpec:
            return ErrorCategory::config;
        case ErrorCode::Io:
            return ErrorCategory::internal;
        default:
            return ErrorCategory::data;
    }
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}

}  // namespace avqoe
