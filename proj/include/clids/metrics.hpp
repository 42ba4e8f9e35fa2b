#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

// Binary classification metrics. The positive class is malicious (label 1):
// a true positive is a correctly flagged intrusion.

namespace clids::metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Throws LengthMismatch, EmptyInput.
ConfusionCounts confusion(std::span<const std::uint8_t> labels,
                          std::span<const std::uint8_t> predicted);

/// accuracy = (TP + TN) / total, recall = TP / (TP + FN),
/// precision = TP / (TP + FP), f1 = 2 P R / (P + R), fpr = FP / (FP + TN).
/// Any zero denominator yields 0.
struct Rates {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
};

Rates scalar_metrics(const ConfusionCounts& c) noexcept;

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct Average {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct MetricsReport {
  ConfusionCounts counts;
  Rates rates;
  std::array<ClassMetrics, 2> per_class;  // benign, malicious
  Average macro;
  Average weighted;
  /// Rows are the true class, columns the predicted class (benign, malicious).
  std::array<std::array<std::uint64_t, 2>, 2> matrix{};
  /// Each row divided by its support (a zero-support row stays zero).
  std::array<std::array<double, 2>, 2> matrix_normalized{};
};

MetricsReport classification_report(std::span<const std::uint8_t> labels,
                                     std::span<const std::uint8_t> predicted);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1), non-decreasing
  double auc = 0.0;
};

/// Thresholds at +inf and at every distinct score (predict malicious when
/// score >= threshold); AUC by the trapezoidal rule. Throws SingleClass,
/// LengthMismatch, EmptyInput, DomainError (score outside [0, 1]).
RocCurve roc_and_auc(std::span<const std::uint8_t> labels, std::span<const double> scores);

}  // namespace clids::metrics
