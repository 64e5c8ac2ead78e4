#pragma once

#include <stdexcept>
#include <string>

namespace ompath {

enum class ErrorCode {
    invalid_parameter,
    bounded_variation,
    singular_noise,
    wrong_reduction,
    blow_up,
    input,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_parameter: return "invalid-parameter";
        case ErrorCode::bounded_variation: return "bounded-variation-violation";
        case ErrorCode::singular_noise: return "singular-noise";
        case ErrorCode::wrong_reduction: return "wrong-reduction";
        case ErrorCode::blow_up: return "blow-up";
        case ErrorCode::input: return "input";
    }
    return "unknown";
}

/// Error raised by every ompath operation that can fail on its inputs.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Integration produced a non-finite state.
class BlowUpError : public Error {
public:
    BlowUpError(double time, const std::string& what)
        : Error(ErrorCode::blow_up, what), time_(time) {}

    double time() const noexcept { return time_; }

private:
    double time_;
};

}  // namespace ompath
