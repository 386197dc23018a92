#include "koopman/errors.hpp"

namespace koopman {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::Singular: return "Singular";
        case ErrorCode::NoPrincipalRoot: return "NoPrincipalRoot";
        case ErrorCode::Diverged: return "Diverged";
        case ErrorCode::DegenerateChannel: return "DegenerateChannel";
        case ErrorCode::Empty: return "Empty";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::AssumptionViolated: return "AssumptionViolated";
        case ErrorCode::PreconditionViolated: return "PreconditionViolated";
        case ErrorCode::Config: return "Config";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Validation: return "Validation";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace koopman
