#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mflsi {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    UnsupportedTransport,
    GibbsUndefined,
    DefectiveInvalid,
    CorollaryInvalid,
    BlowUp,
    WindowTooSmall,
    Config,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::UnsupportedTransport: return "unsupported-transport-instance";
    case ErrorKind::GibbsUndefined: return "gibbs-undefined";
    case ErrorKind::DefectiveInvalid: return "defective-invalid";
    case ErrorKind::CorollaryInvalid: return "corollary-invalid";
    case ErrorKind::BlowUp: return "blow-up";
    case ErrorKind::WindowTooSmall: return "window-too-small";
    case ErrorKind::Config: return "config-error";
    }
    return "unknown";
}

/// Library-wide exception; `kind()` is the machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

} // namespace mflsi
