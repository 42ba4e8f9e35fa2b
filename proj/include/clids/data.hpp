#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "clids/tensor.hpp"

namespace clids::data {

inline constexpr std::string_view kDefaultLabelColumn = "label";
inline constexpr std::string_view kDefaultBenignLabel = "BenignTraffic";
inline constexpr std::size_t kSynthFeatures = 45;

struct FlowRecord {
  std::vector<double> features;
  std::string raw_label;
};

struct LoadOptions {
  std::string label_column = std::string(kDefaultLabelColumn);
  /// When false a missing label column is tolerated and raw labels are empty.
  bool require_label = true;
  /// If non-empty, pick exactly these columns (by trimmed header name, in
  /// this order) instead of every non-label column.
  std::vector<std::string> feature_columns;
};

struct LoadedCsv {
  std::vector<std::string> feature_names;
  std::vector<FlowRecord> records;
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
};

/// Header-driven ingestion. Every non-label column must parse as a finite
/// real; rows that do not (or have the wrong field count) are dropped and
/// counted, not reported as errors. Throws EmptyFile, MissingColumn, IoError.
LoadedCsv load_csv(const std::filesystem::path& path, const LoadOptions& options = {});
LoadedCsv parse_csv(std::istream& in, const LoadOptions& options = {});

enum class SplitRole : std::uint8_t { Whole, Train, Validation };

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  /// Partition the statistics were fit on; see apply_normalizer.
  std::uint64_t partition_id = 0;
};

/// Feature matrix [rows x num_features] (row-major) with binary labels
/// (0 benign, 1 malicious).
struct FlowDataset {
  std::size_t num_features = 0;
  std::vector<double> features;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> feature_names;
  std::string provenance;
  SplitRole role = SplitRole::Whole;
  std::uint64_t partition_id = 0;
  /// Row indices into the dataset this one was split from.
  std::vector<std::size_t> source_rows;
  /// Statistics already applied to `features`, if any.
  std::optional<NormStats> norm_stats;

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * num_features, num_features);
  }
  std::size_t count(std::uint8_t label) const noexcept;
};

enum class LabelMatch { Exact, Prefix };

/// raw_label == benign_label (or starts with it, in prefix mode) -> 0, else 1.
/// Throws EmptyInput.
FlowDataset binarize(const LoadedCsv& loaded, std::string_view benign_label,
                     LabelMatch mode = LabelMatch::Exact);

/// Population z-score statistics. Only train partitions are accepted
/// (SplitMismatch otherwise); std below 1e-12 is replaced by 1.
NormStats fit_normalizer(const FlowDataset& train);

/// Applies (x - mean) / std. A dataset that came out of split() must carry
/// the same partition id as the statistics; whole (unsplit) datasets, such
/// as a separate evaluation file, accept any statistics.
FlowDataset apply_normalizer(const FlowDataset& ds, const NormStats& stats);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitResult {
  FlowDataset train;
  FlowDataset validation;
};

/// Deterministic in seed. Stratified mode rounds each class's share
/// separately. Throws EmptyInput (fewer than 2 rows) and InvalidConfig.
SplitResult split(const FlowDataset& ds, const SplitSpec& spec);

template <typename T>
struct Batch {
  Tensor<T> features;  // [n x F]
  Tensor<T> labels;    // one-hot [n x 2]
  std::vector<std::size_t> rows;
};

/// Fixed partition of a dataset into mini-batches. The order is the
/// identity without a seed, otherwise a pure function of the seed.
class BatchSequence {
 public:
  BatchSequence(const FlowDataset& ds, std::size_t batch_size,
                std::optional<std::uint64_t> shuffle_seed);

  std::size_t size() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }
  const std::vector<std::size_t>& order() const noexcept { return order_; }

  template <typename T>
  Batch<T> get(std::size_t index) const;

 private:
  const FlowDataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

BatchSequence batches(const FlowDataset& ds, std::size_t batch_size,
                      std::optional<std::uint64_t> shuffle_seed);

template <typename T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels);

template <typename T>
Tensor<T> feature_tensor(const FlowDataset& ds);

enum class Difficulty { Separable, Noisy };

/// Balanced two-class Gaussian clusters over 45 unit-variance features. Eight
/// informative features carry class means 6 sigma (separable) or 1 sigma
/// (noisy) apart. Throws InvalidConfig for n < 2.
FlowDataset synth_generate(std::size_t n, std::uint64_t seed, Difficulty difficulty);

/// Indices of the informative synthetic features.
std::vector<std::size_t> synth_informative_features();

/// Writes header (feature names, label_column) and one row per sample.
void write_csv(std::ostream& out, const FlowDataset& ds, std::string_view label_column,
               std::string_view benign_label, std::string_view malicious_label);

}  // namespace clids::data
