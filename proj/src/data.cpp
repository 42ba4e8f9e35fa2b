#include "clids/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "clids/csv.hpp"
#include "clids/rng.hpp"

namespace clids::data {

std::size_t FlowDataset::count(std::uint8_t label) const noexcept {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

// ---------------------------------------------------------------------------
// Ingestion

LoadedCsv parse_csv(std::istream& in, const LoadOptions& options) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) fail(ErrorKind::EmptyFile, "no header row");

  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < header->size(); ++i) {
    by_name.emplace(std::string(csv::trim((*header)[i])), i);
  }

  std::optional<std::size_t> label_idx;
  if (auto it = by_name.find(std::string(csv::trim(options.label_column))); it != by_name.end()) {
    label_idx = it->second;
  } else if (options.require_label) {
    fail(ErrorKind::MissingColumn, "label column '" + options.label_column + "' not in header");
  }

  LoadedCsv out;
  std::vector<std::size_t> columns;
  if (options.feature_columns.empty()) {
    for (std::size_t i = 0; i < header->size(); ++i) {
      if (label_idx && i == *label_idx) continue;
      columns.push_back(i);
      out.feature_names.emplace_back(csv::trim((*header)[i]));
    }
  } else {
    for (const auto& name : options.feature_columns) {
      auto it = by_name.find(name);
      if (it == by_name.end()) fail(ErrorKind::MissingColumn, "feature column '" + name + "'");
      columns.push_back(it->second);
      out.feature_names.push_back(name);
    }
  }

  const std::size_t width = header->size();
  while (auto fields = reader.next()) {
    ++out.rows_read;
    if (fields->size() != width) {
      ++out.rows_dropped;
      continue;
    }
    FlowRecord rec;
    rec.features.reserve(columns.size());
    bool ok = true;
    for (std::size_t c : columns) {
      const auto v = csv::parse_real((*fields)[c]);
      if (!v || !std::isfinite(*v)) {
        ok = false;
        break;
      }
      rec.features.push_back(*v);
    }
    if (!ok) {
      ++out.rows_dropped;
      continue;
    }
    if (label_idx) rec.raw_label = std::string(csv::trim((*fields)[*label_idx]));
    out.records.push_back(std::move(rec));
  }
  return out;
}

LoadedCsv load_csv(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return parse_csv(in, options);
}

FlowDataset binarize(const LoadedCsv& loaded, std::string_view benign_label, LabelMatch mode) {
  if (loaded.records.empty()) fail(ErrorKind::EmptyInput, "no records to binarize");
  FlowDataset ds;
  ds.num_features = loaded.feature_names.size();
  ds.feature_names = loaded.feature_names;
  ds.features.reserve(loaded.records.size() * ds.num_features);
  ds.labels.reserve(loaded.records.size());
  for (const auto& rec : loaded.records) {
    ds.features.insert(ds.features.end(), rec.features.begin(), rec.features.end());
    const bool benign = mode == LabelMatch::Exact ? rec.raw_label == benign_label
                                                  : rec.raw_label.starts_with(benign_label);
    ds.labels.push_back(benign ? 0 : 1);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Normalization

NormStats fit_normalizer(const FlowDataset& train) {
  if (train.role != SplitRole::Train) {
    fail(ErrorKind::SplitMismatch, "normalizer statistics may only be fit on a train split");
  }
  if (train.rows() == 0) fail(ErrorKind::EmptyInput, "cannot fit normalizer on zero rows");
  const std::size_t F = train.num_features, N = train.rows();
  NormStats s;
  s.partition_id = train.partition_id;
  s.mean.assign(F, 0.0);
  s.stddev.assign(F, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < F; ++j) s.mean[j] += train.features[i * F + j];
  }
  for (auto& m : s.mean) m /= static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < F; ++j) {
      const double d = train.features[i * F + j] - s.mean[j];
      s.stddev[j] += d * d;
    }
  }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / static_cast<double>(N));
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

FlowDataset apply_normalizer(const FlowDataset& ds, const NormStats& stats) {
  if (stats.mean.size() != ds.num_features || stats.stddev.size() != ds.num_features) {
    fail(ErrorKind::FeatureCountMismatch,
         "normalizer has " + std::to_string(stats.mean.size()) + " features, dataset has " +
             std::to_string(ds.num_features));
  }
  if (ds.role != SplitRole::Whole && ds.partition_id != stats.partition_id) {
    fail(ErrorKind::SplitMismatch, "statistics were fit on a different partition");
  }
  if (ds.norm_stats) fail(ErrorKind::DomainError, "dataset is already normalized");
  FlowDataset out = ds;
  const std::size_t F = ds.num_features;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < F; ++j) {
      double& v = out.features[i * F + j];
      v = (v - stats.mean[j]) / stats.stddev[j];
    }
  }
  out.norm_stats = stats;
  return out;
}

// ---------------------------------------------------------------------------
// Splitting and batching

namespace {

FlowDataset subset(const FlowDataset& ds, const std::vector<std::size_t>& rows, SplitRole role,
                   std::uint64_t partition_id) {
  FlowDataset out;
  out.num_features = ds.num_features;
  out.feature_names = ds.feature_names;
  out.provenance = ds.provenance;
  out.norm_stats = ds.norm_stats;
  out.role = role;
  out.partition_id = partition_id;
  out.source_rows = rows;
  out.features.reserve(rows.size() * ds.num_features);
  for (std::size_t r : rows) {
    auto src = ds.row(r);
    out.features.insert(out.features.end(), src.begin(), src.end());
    out.labels.push_back(ds.labels[r]);
  }
  return out;
}

std::size_t rounded_share(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 0.5));
}

}  // namespace

SplitResult split(const FlowDataset& ds, const SplitSpec& spec) {
  if (ds.rows() < 2) fail(ErrorKind::EmptyInput, "split needs at least 2 rows");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    fail(ErrorKind::InvalidConfig, "train_fraction must lie in (0, 1)");
  }
  Rng rng(derive_seed(spec.seed, 0x5b1));
  std::vector<std::size_t> train, val;
  auto take = [&](std::vector<std::size_t> idx) {
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t k = std::min(idx.size(), rounded_share(idx.size(), spec.train_fraction));
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    val.insert(val.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  };
  if (spec.stratified) {
    for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < ds.rows(); ++i) {
        if (ds.labels[i] == cls) idx.push_back(i);
      }
      take(std::move(idx));
    }
  } else {
    std::vector<std::size_t> idx(ds.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    take(std::move(idx));
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());

  std::uint64_t id = derive_seed(spec.seed, ds.rows());
  id = mix64(id ^ std::bit_cast<std::uint64_t>(spec.train_fraction));
  id = mix64(id ^ (spec.stratified ? 1u : 2u));
  for (std::size_t r : train) id = mix64(id ^ r);
  return {subset(ds, train, SplitRole::Train, id), subset(ds, val, SplitRole::Validation, id)};
}

BatchSequence::BatchSequence(const FlowDataset& ds, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed)
    : ds_(&ds), batch_size_(batch_size), order_(ds.rows()) {
  if (batch_size == 0) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (ds.rows() == 0) fail(ErrorKind::EmptyInput, "cannot batch an empty dataset");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(std::span<std::size_t>(order_));
  }
}

template <typename T>
Batch<T> BatchSequence::get(std::size_t index) const {
  if (index >= size()) fail(ErrorKind::AxisOutOfRange, "batch index " + std::to_string(index));
  const std::size_t begin = index * batch_size_;
  const std::size_t end = std::min(order_.size(), begin + batch_size_);
  const std::size_t n = end - begin, F = ds_->num_features;
  Batch<T> b;
  b.rows.assign(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                order_.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<T> x(n * F);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = ds_->row(b.rows[i]);
    for (std::size_t j = 0; j < F; ++j) x[i * F + j] = static_cast<T>(src[j]);
    y[i] = ds_->labels[b.rows[i]];
  }
  b.features = Tensor<T>({n, F}, std::move(x));
  b.labels = one_hot<T>(y);
  return b;
}

BatchSequence batches(const FlowDataset& ds, std::size_t batch_size,
                      std::optional<std::uint64_t> shuffle_seed) {
  return BatchSequence(ds, batch_size, shuffle_seed);
}

template <typename T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels) {
  auto out = Tensor<T>::zeros({labels.size(), 2});
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(i, labels[i] ? 1 : 0) = T{1};
  return out;
}

template <typename T>
Tensor<T> feature_tensor(const FlowDataset& ds) {
  std::vector<T> x(ds.features.begin(), ds.features.end());
  return Tensor<T>({ds.rows(), ds.num_features}, std::move(x));
}

// ---------------------------------------------------------------------------
// Synthetic data

std::vector<std::size_t> synth_informative_features() {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < 8; ++j) idx.push_back(j * 5);
  return idx;
}

FlowDataset synth_generate(std::size_t n, std::uint64_t seed, Difficulty difficulty) {
  if (n < 2) fail(ErrorKind::InvalidConfig, "synth_generate needs n >= 2");
  const double separation = difficulty == Difficulty::Separable ? 6.0 : 1.0;
  std::vector<double> shift(kSynthFeatures, 0.0);
  for (std::size_t j : synth_informative_features()) shift[j] = separation / 2.0;

  Rng rng(derive_seed(seed, 0x5e7));
  FlowDataset ds;
  ds.num_features = kSynthFeatures;
  for (std::size_t j = 0; j < kSynthFeatures; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  ds.provenance = std::string("synthetic:") +
                  (difficulty == Difficulty::Separable ? "separable" : "noisy") +
                  ":n=" + std::to_string(n) + ":seed=" + std::to_string(seed);
  ds.features.reserve(n * kSynthFeatures);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t label = static_cast<std::uint8_t>(i % 2);
    const double sign = label ? 1.0 : -1.0;
    for (std::size_t j = 0; j < kSynthFeatures; ++j) {
      const double offset = static_cast<double>(j % 7) - 3.0;
      ds.features.push_back(offset + sign * shift[j] + rng.normal());
    }
    ds.labels.push_back(label);
  }
  return ds;
}

void write_csv(std::ostream& out, const FlowDataset& ds, std::string_view label_column,
               std::string_view benign_label, std::string_view malicious_label) {
  std::vector<std::string> fields = ds.feature_names;
  fields.emplace_back(label_column);
  csv::write_row(out, fields);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    fields.clear();
    for (double v : ds.row(i)) fields.push_back(csv::format_real(v));
    fields.emplace_back(ds.labels[i] ? malicious_label : benign_label);
    csv::write_row(out, fields);
  }
}

template Batch<float> BatchSequence::get<float>(std::size_t) const;
template Batch<double> BatchSequence::get<double>(std::size_t) const;
template Tensor<float> one_hot<float>(std::span<const std::uint8_t>);
template Tensor<double> one_hot<double>(std::span<const std::uint8_t>);
template Tensor<float> feature_tensor<float>(const FlowDataset&);
template Tensor<double> feature_tensor<double>(const FlowDataset&);

}  // namespace clids::data
