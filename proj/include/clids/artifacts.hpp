#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clids/data.hpp"
#include "clids/metrics.hpp"
#include "clids/model.hpp"
#include "clids/optim.hpp"

// On-disk layout of a run directory and the JSON/CSV encodings of every
// artifact in it. Schemas are in docs/schemas/.

namespace clids::artifacts {

using Json = nlohmann::ordered_json;

inline constexpr const char* kWeightsFile = "weights.bin";
inline constexpr const char* kNormFile = "norm.json";
inline constexpr const char* kTrainReportFile = "train_report.json";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kRocFile = "roc.csv";

Json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const optim::TrainConfig& config);
Json to_json(const optim::TrainReport& report);

/// {"format", "partition_id", "features": [{feature_index, name, mean, std}]}
Json norm_to_json(const data::NormStats& stats, const std::vector<std::string>& feature_names);

struct PersistedNorm {
  data::NormStats stats;
  std::vector<std::string> feature_names;
};
PersistedNorm norm_from_json(const Json& j);

Json metrics_to_json(const metrics::MetricsReport& report, std::optional<double> auc,
                     std::optional<double> loss);

/// Structural and range checks for a metrics document: required fields, every
/// rate a real in [0, 1], counts consistent with supports. Throws DomainError.
void validate_metrics_json(const Json& j);

/// Two columns, "fpr,tpr", one row per curve point.
void write_roc_csv(std::ostream& out, const metrics::RocCurve& curve);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

}  // namespace clids::artifacts
