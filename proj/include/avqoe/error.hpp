#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avqoe {

enum class ErrorCode {
    // configuration
    InvalidConfig,
    InsufficientClips,
    MissingGoldSpec,
    MissingTrappingSpec,
    // qualification
    CalibrationOutOfRange,
    DistanceOutOfRange,
    MalformedRow,
    MissingPlate,
    MalformedTask,
    // sessions / submissions
    ClipTooShort,
    UnknownSession,
    MalformedSubmission,
    ParseError,
    // statistics
    EmptyVotes,
    UnmatchedEntity,
    DegenerateInput,
    TooFewEntities,
    // objective metrics
    DegenerateLandmarks,
    DimensionMismatch,
    FrameTooSmall,
    LengthMismatch,
    NonPsdCovariance,
    TooFewModels,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

enum class ErrorCategory { config, data, internal };

ErrorCategory category(ErrorCode code) noexcept;

/// Domain error carrying a machine-readable code. Every failure raised by the
/// library is an Error; the message is prefixed with the code name.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace avqoe
