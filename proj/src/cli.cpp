#include "clids/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "clids/artifacts.hpp"
#include "clids/csv.hpp"
#include "clids/data.hpp"
#include "clids/gradcheck.hpp"
#include "clids/metrics.hpp"
#include "clids/model.hpp"
#include "clids/nn.hpp"
#include "clids/optim.hpp"
#include "clids/serialize.hpp"

namespace clids::cli {

namespace fs = std::filesystem;
using artifacts::Json;

namespace {

constexpr std::uint64_t kFallbackSeed = 42;
constexpr std::size_t kInferChunk = 256;

std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv)) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0') return v;
  }
  return kFallbackSeed;
}

struct LabelArgs {
  std::string label_column = std::string(data::kDefaultLabelColumn);
  std::string benign_label = std::string(data::kDefaultBenignLabel);
  data::LabelMatch match = data::LabelMatch::Exact;
};

void add_label_flags(CLI::App* cmd, LabelArgs& a) {
  cmd->add_option("--label-col", a.label_column, "Name of the label column")
      ->capture_default_str();
  cmd->add_option("--benign-label", a.benign_label, "Raw label value that means benign")
      ->capture_default_str();
  cmd->add_option("--label-match", a.match, "How raw labels are compared with --benign-label")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, data::LabelMatch>{{"exact", data::LabelMatch::Exact},
                                                  {"prefix", data::LabelMatch::Prefix}},
          CLI::ignore_case));
}

const char* match_name(data::LabelMatch m) { return m == data::LabelMatch::Exact ? "exact" : "prefix"; }

const char* difficulty_name(data::Difficulty d) {
  return d == data::Difficulty::Separable ? "separable" : "noisy";
}

std::vector<std::uint8_t> predicted_labels(const std::vector<Prediction>& preds) {
  std::vector<std::uint8_t> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.label == Label::Malicious ? 1 : 0);
  return out;
}

/// Infer-mode predictions in chunks, plus mean cross-entropy when labels exist.
struct Scored {
  std::vector<Prediction> predictions;
  std::optional<double> loss;
};

Scored score(const ModelGraph<float>& model, const data::FlowDataset& ds, bool with_loss) {
  Scored s;
  if (ds.rows() == 0) return s;
  const auto seq = data::batches(ds, kInferChunk, std::nullopt);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto b = seq.get<float>(i);
    const auto r = infer(model, b.features);
    for (std::size_t k = 0; k < b.rows.size(); ++k) {
      Prediction p;
      p.probabilities = {r.probs.at(k, 0), r.probs.at(k, 1)};
      p.label = decide(p.probabilities.first, p.probabilities.second);
      p.head_a = {r.head_a.at(k, 0), r.head_a.at(k, 1)};
      p.head_b = {r.head_b.at(k, 0), r.head_b.at(k, 1)};
      s.predictions.push_back(p);
    }
    if (with_loss) {
      loss_sum += static_cast<double>(nn::softmax_cross_entropy(r.logits, b.labels).first) *
                  static_cast<double>(b.rows.size());
    }
  }
  if (with_loss) s.loss = loss_sum / static_cast<double>(ds.rows());
  return s;
}

/// metrics.json + roc.csv contents for a labelled dataset.
struct Evaluated {
  Json metrics;
  std::string roc_csv;
  metrics::MetricsReport report;
};

Evaluated evaluate_dataset(const ModelGraph<float>& model, const data::FlowDataset& ds) {
  const Scored s = score(model, ds, true);
  Evaluated e;
  e.report = metrics::classification_report(ds.labels, predicted_labels(s.predictions));
  std::optional<double> auc;
  std::ostringstream roc;
  if (ds.count(0) > 0 && ds.count(1) > 0) {
    std::vector<double> scores;
    for (const auto& p : s.predictions) scores.push_back(std::clamp(p.probabilities.second, 0.0, 1.0));
    const auto curve = metrics::roc_and_auc(ds.labels, scores);
    auc = curve.auc;
    artifacts::write_roc_csv(roc, curve);
  } else {
    roc << "fpr,tpr\n";
  }
  e.metrics = artifacts::metrics_to_json(e.report, auc, s.loss);
  artifacts::validate_metrics_json(e.metrics);
  e.roc_csv = roc.str();
  return e;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

std::string rate_line(const metrics::MetricsReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "accuracy=%.4f precision=%.4f recall=%.4f f1=%.4f fpr=%.4f",
                r.rates.accuracy, r.rates.precision, r.rates.recall, r.rates.f1, r.rates.fpr);
  return buf;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data_path;
  std::size_t synth_n = 0;
  data::Difficulty difficulty = data::Difficulty::Noisy;
  LabelArgs labels;
  optim::TrainConfig train;
  double train_fraction = 0.8;
  std::string out_dir;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  a.train.validate();
  if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) {
    fail(ErrorKind::InvalidConfig, "--train-fraction must lie in (0, 1)");
  }

  Json source, ingest;
  data::FlowDataset whole;
  if (!a.data_path.empty()) {
    data::LoadOptions opts;
    opts.label_column = a.labels.label_column;
    const auto loaded = data::load_csv(a.data_path, opts);
    whole = data::binarize(loaded, a.labels.benign_label, a.labels.match);
    whole.provenance = a.data_path;
    source = {{"kind", "csv"}, {"path", a.data_path}};
    ingest = {{"rows_read", loaded.rows_read},
              {"rows_dropped", loaded.rows_dropped},
              {"rows_kept", loaded.records.size()},
              {"label_column", a.labels.label_column},
              {"benign_label", a.labels.benign_label},
              {"label_match", match_name(a.labels.match)}};
  } else {
    whole = data::synth_generate(a.synth_n, a.train.seed, a.difficulty);
    source = {{"kind", "synthetic"},
              {"n", a.synth_n},
              {"seed", a.train.seed},
              {"difficulty", difficulty_name(a.difficulty)}};
    ingest = {{"rows_read", whole.rows()}, {"rows_dropped", 0}, {"rows_kept", whole.rows()}};
  }

  const data::SplitSpec split_spec{a.train_fraction, a.train.seed, true};
  const auto parts = data::split(whole, split_spec);
  const data::NormStats stats = data::fit_normalizer(parts.train);
  const auto train_ds = data::apply_normalizer(parts.train, stats);
  const auto val_ds = data::apply_normalizer(parts.validation, stats);

  ModelConfig model_cfg;
  model_cfg.input_features = whole.num_features;
  ModelGraph<float> model = build_model<float>(model_cfg, a.train.seed);
  const auto history = optim::train(model, train_ds, &val_ds, a.train);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_weights(model, dir / artifacts::kWeightsFile);
  artifacts::write_json(dir / artifacts::kNormFile, artifacts::norm_to_json(stats, whole.feature_names));

  Json report = {
      {"format", "clids-train-report/1"},
      {"source", source},
      {"ingest", ingest},
      {"split",
       {{"train_fraction", a.train_fraction},
        {"seed", a.train.seed},
        {"stratified", true},
        {"train_rows", train_ds.rows()},
        {"validation_rows", val_ds.rows()},
        {"train_class_counts", {train_ds.count(0), train_ds.count(1)}},
        {"validation_class_counts", {val_ds.count(0), val_ds.count(1)}}}},
      {"model_config", artifacts::to_json(model_cfg)},
      {"train_config", artifacts::to_json(a.train)},
      {"history", artifacts::to_json(history)},
  };
  artifacts::write_json(dir / artifacts::kTrainReportFile, report);

  if (val_ds.rows() > 0) {
    const Evaluated ev = evaluate_dataset(model, val_ds);
    artifacts::write_json(dir / artifacts::kMetricsFile, ev.metrics);
    write_text(dir / artifacts::kRocFile, ev.roc_csv);
    out << "validation: " << rate_line(ev.report) << '\n';
  }
  const auto& last = history.history.back();
  char buf[128];
  std::snprintf(buf, sizeof buf, "epoch %zu: train_loss=%.6f train_accuracy=%.4f\n", last.epoch,
                last.train_loss, last.train_accuracy);
  out << buf << "artifacts written to " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LoadedModel {
  ModelGraph<float> model;
  artifacts::PersistedNorm norm;
};

LoadedModel load_model_dir(const fs::path& dir) {
  const Json report = artifacts::read_json(dir / artifacts::kTrainReportFile);
  if (!report.contains("model_config")) fail(ErrorKind::CorruptFile, "train report lacks model_config");
  const ModelConfig cfg = artifacts::model_config_from_json(report.at("model_config"));
  LoadedModel m{build_model<float>(cfg, 0), artifacts::norm_from_json(artifacts::read_json(dir / artifacts::kNormFile))};
  load_weights(dir / artifacts::kWeightsFile, m.model);
  if (m.norm.stats.mean.size() != cfg.input_features) {
    fail(ErrorKind::CorruptFile, "norm stats width does not match the model input");
  }
  return m;
}

/// Reads the CSV against the model's feature schema: columns are matched by
/// training-time name when all are present, otherwise taken positionally.
data::LoadedCsv load_for_model(const fs::path& path, const LoadedModel& m,
                               const std::string& label_column, bool require_label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  csv::Reader reader(in);
  const auto header = reader.next();
  if (!header) fail(ErrorKind::EmptyFile, "no header row in " + path.string());
  std::set<std::string> names;
  for (const auto& h : *header) names.emplace(csv::trim(h));

  data::LoadOptions opts;
  opts.label_column = label_column;
  opts.require_label = require_label;
  const bool by_name = std::all_of(m.norm.feature_names.begin(), m.norm.feature_names.end(),
                                   [&](const std::string& n) { return !n.empty() && names.count(n); });
  if (by_name) opts.feature_columns = m.norm.feature_names;
  auto loaded = data::load_csv(path, opts);
  const std::size_t expected = m.model.config.input_features;
  if (loaded.feature_names.size() != expected) {
    fail(ErrorKind::FeatureCountMismatch,
         path.string() + " has " + std::to_string(loaded.feature_names.size()) +
             " feature columns, model expects " + std::to_string(expected));
  }
  return loaded;
}

struct EvalArgs {
  std::string model_dir;
  std::string data_path;
  LabelArgs labels;
  std::string out_dir;
};

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  const LoadedModel m = load_model_dir(a.model_dir);
  const auto loaded = load_for_model(a.data_path, m, a.labels.label_column, true);
  const auto ds = data::apply_normalizer(data::binarize(loaded, a.labels.benign_label, a.labels.match),
                                         m.norm.stats);
  Evaluated ev = evaluate_dataset(m.model, ds);
  ev.metrics["rows_dropped"] = loaded.rows_dropped;
  if (a.out_dir.empty()) {
    out << ev.metrics.dump(2) << '\n';
  } else {
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    artifacts::write_json(dir / artifacts::kMetricsFile, ev.metrics);
    write_text(dir / artifacts::kRocFile, ev.roc_csv);
    out << rate_line(ev.report) << '\n';
  }
  return kExitOk;
}

struct PredictArgs {
  std::string model_dir;
  std::string data_path;
  std::string label_column = std::string(data::kDefaultLabelColumn);
  std::string out_path;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const LoadedModel m = load_model_dir(a.model_dir);
  const auto loaded = load_for_model(a.data_path, m, a.label_column, false);
  data::FlowDataset ds;
  ds.num_features = loaded.feature_names.size();
  ds.feature_names = loaded.feature_names;
  for (const auto& r : loaded.records) {
    ds.features.insert(ds.features.end(), r.features.begin(), r.features.end());
    ds.labels.push_back(0);
  }
  ds = data::apply_normalizer(ds, m.norm.stats);
  const Scored s = score(m.model, ds, false);

  std::ofstream file(a.out_path, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorKind::IoError, "cannot write " + a.out_path);
  file << "p_benign,p_malicious,label\n";
  for (const auto& p : s.predictions) {
    file << csv::format_real(p.probabilities.first) << ',' << csv::format_real(p.probabilities.second)
         << ',' << label_name(p.label) << '\n';
  }
  out << s.predictions.size() << " predictions written to " << a.out_path << '\n';
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = kFallbackSeed;
  double tolerance = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const auto report = gradcheck::check_all(a.seed);
  bool ok = true;
  char buf[256];
  for (const auto& r : report.results) {
    const bool pass = r.rel_error < a.tolerance;
    ok = ok && pass;
    std::snprintf(buf, sizeof buf, "%-40s rel_error=%.3e max_abs=%.3e checked=%zu skipped=%zu %s%s\n",
                  r.name.c_str(), r.rel_error, r.max_abs_error, r.checked, r.skipped,
                  pass ? "ok" : "FAIL", r.structural_zero ? " (zero gradient)" : "");
    out << buf;
  }
  const auto& worst = report.worst();
  std::snprintf(buf, sizeof buf, "worst: %s rel_error=%.3e (tolerance %.1e)\n", worst.name.c_str(),
                worst.rel_error, a.tolerance);
  out << buf;
  if (!ok) {
    for (const auto& r : report.results) {
      if (!(r.rel_error < a.tolerance)) out << "failing tensor: " << r.name << '\n';
    }
  }
  return ok ? kExitOk : kExitFailure;
}

struct SynthArgs {
  std::size_t n = 1024;
  std::uint64_t seed = kFallbackSeed;
  data::Difficulty difficulty = data::Difficulty::Noisy;
  std::string label_column = std::string(data::kDefaultLabelColumn);
  std::string benign_label = std::string(data::kDefaultBenignLabel);
  std::string malicious_label = "SyntheticAttack";
  std::string out_path;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto ds = data::synth_generate(a.n, a.seed, a.difficulty);
  std::ofstream file(a.out_path, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorKind::IoError, "cannot write " + a.out_path);
  data::write_csv(file, ds, a.label_column, a.benign_label, a.malicious_label);
  out << ds.rows() << " synthetic rows written to " << a.out_path << '\n';
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig: return kExitUsage;
    case ErrorKind::ShapeMismatch:
    case ErrorKind::StaleCache:
    case ErrorKind::AxisOutOfRange: return kExitFailure;
    default: return kExitData;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CNN-LSTM intrusion detection toolkit", "clids"};
  app.require_subcommand(1);
  const std::uint64_t seed = default_seed();
  const std::map<std::string, data::Difficulty> difficulties{
      {"separable", data::Difficulty::Separable}, {"noisy", data::Difficulty::Noisy}};

  TrainArgs train;
  train.train.seed = seed;
  auto* t = app.add_subcommand("train", "Train on a CSV or synthetic data and write a run directory");
  auto* data_opt = t->add_option("--data", train.data_path, "Flow CSV with a header row");
  auto* synth_opt = t->add_option("--synth", train.synth_n, "Generate N synthetic rows instead");
  data_opt->excludes(synth_opt);
  synth_opt->excludes(data_opt);
  t->add_option("--difficulty", train.difficulty, "Synthetic cluster separation")
      ->transform(CLI::CheckedTransformer(difficulties, CLI::ignore_case));
  add_label_flags(t, train.labels);
  t->add_option("--epochs", train.train.epochs)->capture_default_str();
  t->add_option("--batch-size", train.train.batch_size)->capture_default_str();
  t->add_option("--lr", train.train.adam.lr)->capture_default_str();
  t->add_option("--seed", train.train.seed, "Defaults to $CLIDS_SEED or 42")->capture_default_str();
  t->add_option("--train-fraction", train.train_fraction)->capture_default_str();
  t->add_option("--out", train.out_dir, "Run directory")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("evaluate", "Score a labelled CSV with a trained run directory");
  e->add_option("--model", eval.model_dir)->required();
  e->add_option("--data", eval.data_path)->required();
  add_label_flags(e, eval.labels);
  e->add_option("--out", eval.out_dir, "Directory for metrics.json and roc.csv (stdout if omitted)");

  PredictArgs pred;
  auto* p = app.add_subcommand("predict", "Write per-row class probabilities");
  p->add_option("--model", pred.model_dir)->required();
  p->add_option("--data", pred.data_path)->required();
  p->add_option("--label-col", pred.label_column, "Ignored if present")->capture_default_str();
  p->add_option("--out", pred.out_path)->required();

  GradcheckArgs gc;
  gc.seed = seed;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  g->add_option("--seed", gc.seed)->capture_default_str();
  g->add_option("--tolerance", gc.tolerance)->capture_default_str();

  SynthArgs syn;
  syn.seed = seed;
  auto* s = app.add_subcommand("synth", "Write a synthetic flow CSV");
  s->add_option("--n", syn.n)->capture_default_str();
  s->add_option("--seed", syn.seed)->capture_default_str();
  s->add_option("--difficulty", syn.difficulty)
      ->transform(CLI::CheckedTransformer(difficulties, CLI::ignore_case));
  s->add_option("--label-col", syn.label_column)->capture_default_str();
  s->add_option("--benign-label", syn.benign_label)->capture_default_str();
  s->add_option("--malicious-label", syn.malicious_label)->capture_default_str();
  s->add_option("--out", syn.out_path)->required();

  std::vector<std::string> argv_store{"clids"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (t->parsed() && data_opt->count() + synth_opt->count() != 1) {
      throw CLI::ValidationError("train", "exactly one of --data or --synth is required");
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_evaluate(eval, out);
    if (p->parsed()) return cmd_predict(pred, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
    if (s->parsed()) return cmd_synth(syn, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_code_for(ex.kind());
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace clids::cli
