#include "fiss/error.hpp"

namespace fiss {

std::string_view to_string(Errc code) noexcept
{
    switch (code) {
        case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
        case Errc::NonSquare: return "NonSquare";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::DomainError: return "DomainError";
        case Errc::InvalidParameters: return "InvalidParameters";
        case Errc::OutOfSupport: return "OutOfSupport";
        case Errc::InvalidTuning: return "InvalidTuning";
        case Errc::InconsistentParts: return "InconsistentParts";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::UnsupportedRule: return "UnsupportedRule";
        case Errc::SingularDesign: return "SingularDesign";
        case Errc::RankDeficientFullModel: return "RankDeficientFullModel";
        case Errc::NoConvergence: return "NoConvergence";
        case Errc::SeparationDetected: return "SeparationDetected";
        case Errc::SingularHessian: return "SingularHessian";
        case Errc::EmptyRejectionSet: return "EmptyRejectionSet";
        case Errc::TooShort: return "TooShort";
        case Errc::RankDeficientBasis: return "RankDeficientBasis";
        case Errc::SingularBasis: return "SingularBasis";
        case Errc::ConfigError: return "ConfigError";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace fiss
