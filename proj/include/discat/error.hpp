#pragma once

#include <stdexcept>
#include <string>

namespace discat {

enum class ErrorKind {
  OutOfRangeCategory,
  RaggedRow,
  EmptyTable,
  BadInput,
  MissingColumn,
  NegativeResidual,
  AtKink,
  ZeroModelProbability,
  InvalidParameter,
  DegenerateProbability,
  HessianUnavailable,
  DegenerateMargin,
  ScoreMismatch,
  CountExceedsTruncation,
  TooManyItems,
  NonConvergence,
  InsufficientCells,
  ZeroVariance,
  SingularM,
  SingularInformation,
  HeywoodCase,
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::OutOfRangeCategory: return "OutOfRangeCategory";
    case ErrorKind::RaggedRow: return "RaggedRow";
    case ErrorKind::EmptyTable: return "EmptyTable";
    case ErrorKind::BadInput: return "BadInput";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NegativeResidual: return "NegativeResidual";
    case ErrorKind::AtKink: return "AtKink";
    case ErrorKind::ZeroModelProbability: return "ZeroModelProbability";
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::DegenerateProbability: return "DegenerateProbability";
    case ErrorKind::HessianUnavailable: return "HessianUnavailable";
    case ErrorKind::DegenerateMargin: return "DegenerateMargin";
    case ErrorKind::ScoreMismatch: return "ScoreMismatch";
    case ErrorKind::CountExceedsTruncation: return "CountExceedsTruncation";
    case ErrorKind::TooManyItems: return "TooManyItems";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::InsufficientCells: return "InsufficientCells";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::SingularM: return "SingularM";
    case ErrorKind::SingularInformation: return "SingularInformation";
    case ErrorKind::HeywoodCase: return "HeywoodCase";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind k, const std::string& msg)
      : std::runtime_error(std::string(kind_name(k)) + ": " + msg), kind_(k) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace discat
