#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clids {

enum class ErrorKind {
  ShapeMismatch,
  DegenerateInput,
  AxisOutOfRange,
  StaleCache,
  InvalidConfig,
  EmptyInput,
  EmptyDataset,
  EmptyFile,
  MissingColumn,
  LengthMismatch,
  SingleClass,
  FeatureCountMismatch,
  SplitMismatch,
  DomainError,
  CorruptFile,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it to an exit code and print a stable name.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace clids
