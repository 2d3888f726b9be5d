#pragma once

#include <stdexcept>
#include <string>

namespace resobs {

enum class ErrorCode {
    InvalidModel,
    ContractViolation,
    AnnihilatorUnavailable,
    OracleTooLarge,
    BoundInapplicable,
    Domain,
    PriorDegenerate,
    InfeasiblePrior,
    InvalidGain,
    Reduction,
    Config,
    Io,
};

/// Name of an error code, used in CLI diagnostics.
const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library; the code says which contract failed.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

namespace detail {
[[noreturn]] void raise(ErrorCode code, const std::string& what);

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) raise(code, what);
}
}  // namespace detail

}  // namespace resobs
