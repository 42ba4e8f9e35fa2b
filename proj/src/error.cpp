#include "clids/error.hpp"

namespace clids {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::AxisOutOfRange: return "AxisOutOfRange";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::FeatureCountMismatch: return "FeatureCountMismatch";
    case ErrorKind::SplitMismatch: return "SplitMismatch";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace clids
