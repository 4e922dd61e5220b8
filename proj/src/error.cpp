#include "kkl/error.hpp"

namespace kkl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::StencilOutOfDomain: return "StencilOutOfDomain";
    case ErrorKind::SignError: return "SignError";
    case ErrorKind::BracketFailure: return "BracketFailure";
    case ErrorKind::DuplicateLambda: return "DuplicateLambda";
    case ErrorKind::GapUnderflow: return "GapUnderflow";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::BackwardEscape: return "BackwardEscape";
    case ErrorKind::NormUnderflow: return "NormUnderflow";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ZeroAmplitude: return "ZeroAmplitude";
    case ErrorKind::MismatchedObservers: return "MismatchedObservers";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace kkl
