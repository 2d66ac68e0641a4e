#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dualfringe {

enum class Errc {
    InvalidArgument,
    ZeroScaleFactor,
    GridTooCoarse,
    TwoCloudsNotFound,
    NotConverged,
    SingularJacobian,
    BoundsViolation,
    InsufficientData,
    TimestampMismatch,
    WindowTooLarge,
    SeriesTooShort,
    ConfigParse,
    IoFailure,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ZeroScaleFactor: return "ZeroScaleFactor";
    case Errc::GridTooCoarse: return "GridTooCoarse";
    case Errc::TwoCloudsNotFound: return "TwoCloudsNotFound";
    case Errc::NotConverged: return "NotConverged";
    case Errc::SingularJacobian: return "SingularJacobian";
    case Errc::BoundsViolation: return "BoundsViolation";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::TimestampMismatch: return "TimestampMismatch";
    case Errc::WindowTooLarge: return "WindowTooLarge";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::ConfigParse: return "ConfigParse";
    case Errc::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map error classes to exit codes.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline void require(bool condition, Errc code, const std::string& what) {
    if (!condition) throw Error(code, what);
}

} // namespace dualfringe
