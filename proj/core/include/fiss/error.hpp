#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fiss {

/// Failure categories raised across the library.
enum class Errc {
    NotPositiveDefinite,
    NonSquare,
    DimensionMismatch,
    DomainError,
    InvalidParameters,
    OutOfSupport,
    InvalidTuning,
    InconsistentParts,
    InvalidSpec,
    UnsupportedRule,
    SingularDesign,
    RankDeficientFullModel,
    NoConvergence,
    SeparationDetected,
    SingularHessian,
    EmptyRejectionSet,
    TooShort,
    RankDeficientBasis,
    SingularBasis,
    ConfigError,
    IoError,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const char* what)
{
    if (!cond) {
        fail(code, what);
    }
}

}  // namespace fiss
