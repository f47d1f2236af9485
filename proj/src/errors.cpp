#include "hanam/errors.hpp"

namespace hanam {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::BadShape: return "BadShape";
    case ErrorKind::NegativeEntry: return "NegativeEntry";
    case ErrorKind::NonzeroDiagonal: return "NonzeroDiagonal";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::ChainDiverged: return "ChainDiverged";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DegenerateDraws: return "DegenerateDraws";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::FactorizationFailure: return "FactorizationFailure";
    case ErrorKind::RankDeficientInstruments: return "RankDeficientInstruments";
    case ErrorKind::SingularSecondStage: return "SingularSecondStage";
    case ErrorKind::AllStartsFailed: return "AllStartsFailed";
    case ErrorKind::IndefiniteHessian: return "IndefiniteHessian";
    case ErrorKind::EmptyNetwork: return "EmptyNetwork";
    case ErrorKind::Diverging: return "Diverging";
  }
  return "Unknown";
}

bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::BadShape:
    case ErrorKind::NegativeEntry:
    case ErrorKind::NonzeroDiagonal:
    case ErrorKind::Parse:
    case ErrorKind::Io:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace hanam
