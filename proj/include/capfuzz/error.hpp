#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capfuzz {

enum class ErrorCode {
    // input / validation
    CapacityMismatch,
    NonPositiveWeight,
    NonPositiveCapacity,
    EmptyData,
    DimensionMismatch,
    LengthMismatch,
    UnsupportedFuzzifier,
    InvalidArgument,
    ParseError,
    RaggedRows,
    UnexpectedRowCount,
    IoError,
    // numerical
    SingularReducedSystem,
    InfeasibleBoxProblem,
    ActiveSetStall,
    EmptyCluster,
    NonMonotoneObjective,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::CapacityMismatch: return "CapacityMismatch";
        case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
        case ErrorCode::NonPositiveCapacity: return "NonPositiveCapacity";
        case ErrorCode::EmptyData: return "EmptyData";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::UnsupportedFuzzifier: return "UnsupportedFuzzifier";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::RaggedRows: return "RaggedRows";
        case ErrorCode::UnexpectedRowCount: return "UnexpectedRowCount";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::SingularReducedSystem: return "SingularReducedSystem";
        case ErrorCode::InfeasibleBoxProblem: return "InfeasibleBoxProblem";
        case ErrorCode::ActiveSetStall: return "ActiveSetStall";
        case ErrorCode::EmptyCluster: return "EmptyCluster";
        case ErrorCode::NonMonotoneObjective: return "NonMonotoneObjective";
    }
    return "Unknown";
}

/// True for failures of the numerical machinery, false for bad input.
inline bool is_numerical(ErrorCode code) {
    switch (code) {
        case ErrorCode::SingularReducedSystem:
        case ErrorCode::InfeasibleBoxProblem:
        case ErrorCode::ActiveSetStall:
        case ErrorCode::EmptyCluster:
        case ErrorCode::NonMonotoneObjective:
            return true;
        default:
            return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace capfuzz
