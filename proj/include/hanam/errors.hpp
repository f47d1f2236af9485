#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hanam {

enum class ErrorKind {
  // input validation
  InvalidArgument,
  BadShape,
  NegativeEntry,
  NonzeroDiagonal,
  Parse,
  Io,
  // numerical
  NoConvergence,
  ChainDiverged,
  RankDeficient,
  DegenerateDraws,
  NotPositiveDefinite,
  Unstable,
  FactorizationFailure,
  RankDeficientInstruments,
  SingularSecondStage,
  AllStartsFailed,
  IndefiniteHessian,
  EmptyNetwork,
  Diverging,
};

std::string_view to_string(ErrorKind kind);

/// True for failures caused by bad input rather than by the numerics.
bool is_validation_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace hanam
