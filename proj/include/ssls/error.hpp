#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssls {

enum class ErrorKind {
  LengthMismatch,
  NonBinaryTreatment,
  EmptyGroup,
  NonFinite,
  PropensityOutOfRange,
  TooFewSamples,
  SingularDesign,
  OneArmOnly,
  SingularGram,
  NotSPD,
  DegenerateGroup,
  ClusteringDegenerate,
  GroupTooSmall,
  DomainError,
  ZeroVarianceContrast,
  EmptyArm,
  InvalidArgument,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind plus the row / column /
// group it refers to (-1 when not applicable).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, long row = -1, long col = -1, long group = -1)
      : std::runtime_error(message), kind_(kind), row_(row), col_(col), group_(group) {}

  ErrorKind kind() const noexcept { return kind_; }
  long row() const noexcept { return row_; }
  long col() const noexcept { return col_; }
  long group() const noexcept { return group_; }

 private:
  ErrorKind kind_;
  long row_;
  long col_;
  long group_;
};

}  // namespace ssls
