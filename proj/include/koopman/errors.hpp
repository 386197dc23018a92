#pragma once

#include <stdexcept>
#include <string>

namespace koopman {

enum class ErrorCode {
    RankDeficient,
    Singular,
    NoPrincipalRoot,
    Diverged,
    DegenerateChannel,
    Empty,
    NonFiniteGradient,
    NonFinite,
    LengthMismatch,
    AssumptionViolated,
    PreconditionViolated,
    Config,
    Io,
    Validation,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map error families onto exit statuses.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace koopman
