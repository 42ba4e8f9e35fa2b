#include "clids/artifacts.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include "clids/csv.hpp"

namespace clids::artifacts {

Json to_json(const ModelConfig& c) {
  Json blocks = Json::array();
  for (const auto& b : c.conv_blocks) {
    blocks.push_back(
        {{"filters", b.filters}, {"kernel_width", b.kernel_width}, {"pool_window", b.pool_window}});
  }
  return {{"input_features", c.input_features},
          {"conv_blocks", blocks},
          {"dense_trunk", c.dense_trunk},
          {"lstm_hidden", c.lstm_hidden},
          {"lstm_layers", c.lstm_layers},
          {"classes", c.classes},
          {"bn_momentum", c.bn_momentum},
          {"bn_epsilon", c.bn_epsilon}};
}

ModelConfig model_config_from_json(const Json& j) {
  try {
    ModelConfig c;
    c.input_features = j.at("input_features").get<std::size_t>();
    c.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks")) {
      c.conv_blocks.push_back({b.at("filters").get<std::size_t>(),
                               b.at("kernel_width").get<std::size_t>(),
                               b.at("pool_window").get<std::size_t>()});
    }
    c.dense_trunk = j.at("dense_trunk").get<std::vector<std::size_t>>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_epsilon = j.at("bn_epsilon").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, std::string("model config: ") + e.what());
  }
}

Json to_json(const optim::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer", "adam"},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"epsilon", c.adam.epsilon},
          {"seed", c.seed},
          {"shuffle", c.shuffle},
          {"loss", "categorical_cross_entropy"}};
}

Json to_json(const optim::TrainReport& report) {
  Json history = Json::array();
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  for (const auto& e : report.history) {
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"val_loss", opt(e.val_loss)},
                       {"val_accuracy", opt(e.val_accuracy)}});
  }
  return history;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

}  // namespace

Json norm_to_json(const data::NormStats& stats, const std::vector<std::string>& feature_names) {
  Json features = Json::array();
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    features.push_back({{"feature_index", i},
                        {"name", i < feature_names.size() ? feature_names[i] : ""},
                        {"mean", stats.mean[i]},
                        {"std", stats.stddev[i]}});
  }
  return {{"format", "clids-norm/1"}, {"partition_id", hex64(stats.partition_id)},
          {"features", features}};
}

PersistedNorm norm_from_json(const Json& j) {
  try {
    PersistedNorm out;
    out.stats.partition_id = std::stoull(j.at("partition_id").get<std::string>(), nullptr, 16);
    const auto& features = j.at("features");
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto& f = features[i];
      if (f.at("feature_index").get<std::size_t>() != i) {
        fail(ErrorKind::CorruptFile, "norm features out of order at index " + std::to_string(i));
      }
      out.feature_names.push_back(f.at("name").get<std::string>());
      out.stats.mean.push_back(f.at("mean").get<double>());
      const double sd = f.at("std").get<double>();
      if (!(sd > 0.0)) fail(ErrorKind::CorruptFile, "non-positive std in norm file");
      out.stats.stddev.push_back(sd);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, std::string("norm stats: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorKind::CorruptFile, std::string("norm stats: ") + e.what());
  }
}

Json metrics_to_json(const metrics::MetricsReport& r, std::optional<double> auc,
                     std::optional<double> loss) {
  Json per_class = Json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"class", c.name},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"support", c.support}});
  }
  auto avg = [](const metrics::Average& a) {
    return Json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1},
                {"support", a.support}};
  };
  return {{"format", "clids-metrics/1"},
          {"samples", r.counts.total()},
          {"positive_class", "malicious"},
          {"accuracy", r.rates.accuracy},
          {"precision", r.rates.precision},
          {"recall", r.rates.recall},
          {"f1", r.rates.f1},
          {"fpr", r.rates.fpr},
          {"loss", loss ? Json(*loss) : Json(nullptr)},
          {"roc_auc", auc ? Json(*auc) : Json(nullptr)},
          {"confusion", {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp},
                         {"fn", r.counts.fn}}},
          {"confusion_matrix",
           {{"labels", {"benign", "malicious"}},
            {"counts", r.matrix},
            {"normalized", r.matrix_normalized}}},
          {"per_class", per_class},
          {"macro_avg", avg(r.macro)},
          {"weighted_avg", avg(r.weighted)}};
}

void validate_metrics_json(const Json& j) {
  auto bad = [](const std::string& what) { fail(ErrorKind::DomainError, "metrics.json: " + what); };
  auto rate = [&](const Json& obj, const char* key) {
    if (!obj.contains(key) || !obj.at(key).is_number()) bad(std::string("missing rate ") + key);
    const double v = obj.at(key).get<double>();
    if (!(v >= 0.0 && v <= 1.0)) bad(std::string(key) + " outside [0, 1]");
  };
  auto count = [&](const Json& obj, const char* key) {
    if (!obj.contains(key) || !obj.at(key).is_number_unsigned()) {
      bad(std::string("missing count ") + key);
    }
    return obj.at(key).get<std::uint64_t>();
  };
  if (!j.is_object() || j.value("format", "") != "clids-metrics/1") bad("bad format tag");
  for (const char* k : {"accuracy", "precision", "recall", "f1", "fpr"}) rate(j, k);
  if (!j.at("roc_auc").is_null()) rate(j, "roc_auc");
  if (!j.at("loss").is_null() && !(j.at("loss").get<double>() >= 0.0)) bad("negative loss");

  const Json& c = j.at("confusion");
  const std::uint64_t tp = count(c, "tp"), tn = count(c, "tn"), fp = count(c, "fp"),
                      fn = count(c, "fn");
  if (count(j, "samples") != tp + tn + fp + fn) bad("samples != tp + tn + fp + fn");

  const Json& m = j.at("confusion_matrix");
  const auto counts = m.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
  const auto norm = m.at("normalized").get<std::vector<std::vector<double>>>();
  if (counts.size() != 2 || norm.size() != 2) bad("confusion matrix must be 2x2");
  if (counts != std::vector<std::vector<std::uint64_t>>{{tn, fp}, {fn, tp}}) {
    bad("confusion matrix disagrees with confusion counts");
  }
  for (const auto& row : norm) {
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0)) bad("normalized confusion entry outside [0, 1]");
    }
  }

  const Json& per_class = j.at("per_class");
  if (!per_class.is_array() || per_class.size() != 2) bad("per_class must have two entries");
  const std::uint64_t supports[2] = {tn + fp, tp + fn};
  for (std::size_t k = 0; k < 2; ++k) {
    for (const char* key : {"precision", "recall", "f1"}) rate(per_class[k], key);
    if (count(per_class[k], "support") != supports[k]) bad("class support != confusion row sum");
  }
  for (const char* avg : {"macro_avg", "weighted_avg"}) {
    for (const char* key : {"precision", "recall", "f1"}) rate(j.at(avg), key);
  }
}

void write_roc_csv(std::ostream& out, const metrics::RocCurve& curve) {
  out << "fpr,tpr\n";
  for (const auto& p : curve.points) out << csv::format_real(p.fpr) << ',' << csv::format_real(p.tpr) << '\n';
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::IoError, "short write to " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, path.string() + ": " + e.what());
  }
}

}  // namespace clids::artifacts
