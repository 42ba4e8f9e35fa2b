#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "clids/csv.hpp"
#include "clids/data.hpp"
#include "clids/error.hpp"
#include "support/oracles.hpp"

using namespace clids;
using namespace clids::data;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a clids::Error";
  return ErrorKind::IoError;
}

LoadedCsv parse(const std::string& text, LoadOptions opts = {}) {
  std::istringstream in(text);
  return parse_csv(in, opts);
}

FlowDataset labelled(std::size_t n, std::size_t positives, std::size_t features = 2) {
  FlowDataset ds;
  ds.num_features = features;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < features; ++j) ds.features.push_back(double(i * features + j));
    ds.labels.push_back(i < positives ? 1 : 0);
  }
  return ds;
}

FlowDataset column(std::vector<double> v) {
  FlowDataset ds;
  ds.num_features = 1;
  ds.features = v;
  ds.labels.assign(v.size(), 0);
  ds.role = SplitRole::Train;
  return ds;
}

}  // namespace

// ingestion

TEST(LoadCsv, DropsNonFiniteRows) {
  const auto r = parse("a,b,label\n1,2,BenignTraffic\nNaN,3,X\n4,5,DDoS-ICMP_Flood\n");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.rows_dropped, 1u);
  EXPECT_EQ(r.rows_read, 3u);
  EXPECT_EQ(r.records[1].raw_label, "DDoS-ICMP_Flood");
  EXPECT_EQ(r.records[1].features, (std::vector<double>{4, 5}));
  EXPECT_EQ(r.feature_names, (std::vector<std::string>{"a", "b"}));
}

TEST(LoadCsv, MissingLabelColumn) {
  EXPECT_EQ(kind_of([] { parse("a,b\n1,2\n"); }), ErrorKind::MissingColumn);
  LoadOptions lenient;
  lenient.require_label = false;
  const auto r = parse("a,b\n1,2\n", lenient);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].features.size(), 2u);
}

TEST(LoadCsv, EmptyFile) {
  EXPECT_EQ(kind_of([] { parse(""); }), ErrorKind::EmptyFile);
  EXPECT_EQ(kind_of([] { parse("\n\n"); }), ErrorKind::EmptyFile);
  EXPECT_EQ(parse("a,label\n").records.size(), 0u);
}

TEST(LoadCsv, LabelColumnAnywhereAndCustomName) {
  LoadOptions o;
  o.label_column = "Class";
  const auto r = parse("Class,x,y\nBenignTraffic,1,2\n", o);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].features, (std::vector<double>{1, 2}));
  EXPECT_EQ(r.records[0].raw_label, "BenignTraffic");
}

TEST(LoadCsv, QuotingCrlfAndBadRows) {
  const auto r = parse("\"a\",b,label\r\n\" 1.5 \",2,\"Recon-PortScan\"\r\n1,2\r\n1,2,3,4\r\n1,x,L\r\n1,inf,L\r\n1,-2e3,\"a,b\"\r\n");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.rows_dropped, 4u);
  EXPECT_EQ(r.records[0].features[0], 1.5);
  EXPECT_EQ(r.records[1].features[1], -2000.0);
  EXPECT_EQ(r.records[1].raw_label, "a,b");
}

TEST(LoadCsv, SelectedColumnsByName) {
  LoadOptions o;
  o.feature_columns = {"c", "a"};
  const auto r = parse("a,b,c,label\n1,2,3,L\n", o);
  EXPECT_EQ(r.records[0].features, (std::vector<double>{3, 1}));
  o.feature_columns = {"z"};
  EXPECT_EQ(kind_of([&] { parse("a,label\n1,L\n", o); }), ErrorKind::MissingColumn);
}

TEST(LoadCsv, NeverYieldsNonFiniteValues) {
  std::mt19937_64 gen(3);
  const char* junk[] = {"nan", "NaN", "inf", "-inf", "1e999", "", "abc", "0x10", "1.5", "-3", "2e-3", " 7 "};
  std::ostringstream text;
  text << "a,b,c,label\n";
  for (int i = 0; i < 500; ++i) {
    for (int j = 0; j < 3; ++j) text << junk[gen() % std::size(junk)] << ',';
    text << "L\n";
  }
  const auto r = parse(text.str());
  EXPECT_EQ(r.records.size() + r.rows_dropped, 500u);
  EXPECT_GT(r.records.size(), 0u);
  for (const auto& rec : r.records)
    for (double v : rec.features) EXPECT_TRUE(std::isfinite(v));
}

TEST(LoadCsv, FileRoundTripAndIoError) {
  const auto path = std::filesystem::temp_directory_path() / "clids_data_test.csv";
  const auto ds = synth_generate(10, 1, Difficulty::Noisy);
  {
    std::ofstream out(path);
    write_csv(out, ds, "label", "BenignTraffic", "Attack");
  }
  const auto r = load_csv(path);
  ASSERT_EQ(r.records.size(), 10u);
  const auto back = binarize(r, "BenignTraffic");
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.features, ds.features);  // shortest round-trip formatting
  EXPECT_EQ(kind_of([] { load_csv("/nonexistent/clids.csv"); }), ErrorKind::IoError);
}

// csv helpers

TEST(Csv, EscapeAndReadBack) {
  const std::vector<std::string> fields = {"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  std::ostringstream out;
  csv::write_row(out, fields);
  std::istringstream in(out.str());
  csv::Reader reader(in);
  EXPECT_EQ(reader.next(), fields);
  EXPECT_FALSE(reader.next().has_value());
  EXPECT_EQ(csv::escape("x"), "x");
}

TEST(Csv, RealParsingIsStrict) {
  EXPECT_EQ(csv::parse_real(" 2.5 "), 2.5);
  EXPECT_FALSE(csv::parse_real("2.5x").has_value());
  EXPECT_FALSE(csv::parse_real("").has_value());
  std::mt19937_64 gen(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(oracle::uniform_vector(gen, 1)[0], int(gen() % 200) - 100);
    EXPECT_EQ(csv::parse_real(csv::format_real(v)), v);
  }
}

// labels

TEST(Binarize, ExactAndPrefix) {
  const auto r = parse("x,label\n1,BenignTraffic\n2,Recon-PortScan\n3,BenignTraffic-extra\n");
  EXPECT_EQ(binarize(r, "BenignTraffic").labels, (std::vector<std::uint8_t>{0, 1, 1}));
  EXPECT_EQ(binarize(r, "BenignTraffic", LabelMatch::Prefix).labels, (std::vector<std::uint8_t>{0, 1, 0}));
  const auto benign = parse("x,label\n1,BenignTraffic\n2,BenignTraffic\n");
  EXPECT_EQ(binarize(benign, "BenignTraffic").labels, (std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(kind_of([] { binarize(LoadedCsv{}, "BenignTraffic"); }), ErrorKind::EmptyInput);
}

// normalization

TEST(Normalizer, HandComputedColumn) {
  const auto stats = fit_normalizer(column({2, 4, 6}));
  EXPECT_DOUBLE_EQ(stats.mean[0], 4.0);
  EXPECT_NEAR(stats.stddev[0], std::sqrt(8.0 / 3.0), 1e-15);
  const auto n = apply_normalizer(column({2, 4, 6}), stats);
  EXPECT_NEAR(n.features[0], -1.2247, 1e-4);
  EXPECT_EQ(n.features[1], 0.0);
  EXPECT_NEAR(n.features[2], 1.2247, 1e-4);
}

TEST(Normalizer, ConstantColumnIsCentered) {
  const auto stats = fit_normalizer(column({5, 5, 5}));
  EXPECT_EQ(stats.stddev[0], 1.0);
  EXPECT_EQ(apply_normalizer(column({5, 5, 5}), stats).features, (std::vector<double>{0, 0, 0}));
}

TEST(Normalizer, RefitAfterApplyIsStandard) {
  const auto parts = split(synth_generate(200, 4, Difficulty::Noisy), {0.8, 4, true});
  const auto stats = fit_normalizer(parts.train);
  const auto z = apply_normalizer(parts.train, stats);
  const auto again = fit_normalizer(z);
  for (std::size_t j = 0; j < z.num_features; ++j) {
    EXPECT_NEAR(again.mean[j], 0.0, 1e-12);
    EXPECT_NEAR(again.stddev[j], 1.0, 1e-12);
  }
}

TEST(Normalizer, LeakageGuard) {
  const auto ds = synth_generate(100, 5, Difficulty::Noisy);
  const auto a = split(ds, {0.8, 5, true});
  const auto b = split(ds, {0.8, 6, true});
  EXPECT_EQ(kind_of([&] { fit_normalizer(ds); }), ErrorKind::SplitMismatch);
  EXPECT_EQ(kind_of([&] { fit_normalizer(a.validation); }), ErrorKind::SplitMismatch);
  const auto stats = fit_normalizer(a.train);
  EXPECT_NO_THROW(apply_normalizer(a.validation, stats));
  EXPECT_EQ(kind_of([&] { apply_normalizer(b.validation, stats); }), ErrorKind::SplitMismatch);
  EXPECT_EQ(kind_of([&] { apply_normalizer(b.train, stats); }), ErrorKind::SplitMismatch);
  // A separate, unsplit dataset (an evaluation file) takes persisted stats.
  EXPECT_NO_THROW(apply_normalizer(synth_generate(10, 9, Difficulty::Noisy), stats));
  const auto once = apply_normalizer(a.train, stats);
  EXPECT_EQ(kind_of([&] { apply_normalizer(once, stats); }), ErrorKind::DomainError);
  auto narrow = column({1, 2});
  narrow.role = SplitRole::Whole;
  EXPECT_EQ(kind_of([&] { apply_normalizer(narrow, stats); }), ErrorKind::FeatureCountMismatch);
}

// splitting

TEST(Split, EightyTwenty) {
  const auto parts = split(labelled(10, 5), {0.8, 1, true});
  EXPECT_EQ(parts.train.rows(), 8u);
  EXPECT_EQ(parts.validation.rows(), 2u);
  EXPECT_EQ(parts.train.role, SplitRole::Train);
  EXPECT_EQ(parts.validation.role, SplitRole::Validation);
  EXPECT_EQ(parts.train.partition_id, parts.validation.partition_id);
}

TEST(Split, StratifiedArithmetic) {
  const auto parts = split(labelled(100, 10), {0.8, 2, true});
  EXPECT_EQ(parts.train.count(0), 72u);
  EXPECT_EQ(parts.train.count(1), 8u);
}

TEST(Split, DeterministicInSeed) {
  const auto ds = labelled(50, 20);
  EXPECT_EQ(split(ds, {0.7, 3, true}).train.source_rows, split(ds, {0.7, 3, true}).train.source_rows);
  EXPECT_NE(split(ds, {0.7, 3, true}).train.source_rows, split(ds, {0.7, 4, true}).train.source_rows);
}

TEST(Split, PartitionProperty) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + gen() % 300;
    const std::size_t pos = gen() % (n + 1);
    const double f = std::uniform_real_distribution<double>(0.05, 0.95)(gen);
    const bool strat = rep % 2 == 0;
    const auto ds = labelled(n, pos, 1);
    const auto parts = split(ds, {f, gen(), strat});
    std::set<std::size_t> seen;
    for (auto i : parts.train.source_rows) EXPECT_TRUE(seen.insert(i).second);
    for (auto i : parts.validation.source_rows) EXPECT_TRUE(seen.insert(i).second);
    EXPECT_EQ(seen.size(), n);
    for (std::size_t k = 0; k < parts.train.rows(); ++k) {
      const std::size_t src = parts.train.source_rows[k];
      EXPECT_EQ(parts.train.labels[k], ds.labels[src]);
      EXPECT_EQ(parts.train.features[k], ds.features[src]);
    }
    const double want = double(n) * f;
    if (strat) {
      const double wp = double(pos) * f, wn = double(n - pos) * f;
      EXPECT_LE(std::abs(double(parts.train.count(1)) - wp), 1.0);
      EXPECT_LE(std::abs(double(parts.train.count(0)) - wn), 1.0);
      EXPECT_LE(std::abs(double(parts.train.rows()) - want), 2.0);
    } else {
      EXPECT_LE(std::abs(double(parts.train.rows()) - want), 1.0);
    }
  }
}

TEST(Split, Errors) {
  EXPECT_EQ(kind_of([] { split(labelled(1, 0), {}); }), ErrorKind::EmptyInput);
  EXPECT_EQ(kind_of([] { split(labelled(10, 3), {1.0, 1, true}); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { split(labelled(10, 3), {0.0, 1, true}); }), ErrorKind::InvalidConfig);
}

// batching

TEST(Batches, PartitionSizes) {
  const auto ds = labelled(10, 4);
  const auto seq = batches(ds, 4, std::nullopt);
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq.get<float>(0).rows.size(), 4u);
  EXPECT_EQ(seq.get<float>(1).rows.size(), 4u);
  EXPECT_EQ(seq.get<float>(2).rows.size(), 2u);
  EXPECT_EQ(seq.get<float>(2).features.shape(), (Shape{2, 2}));
  EXPECT_EQ(kind_of([&] { batches(ds, 0, std::nullopt); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { batches(FlowDataset{}, 4, std::nullopt); }), ErrorKind::EmptyInput);
}

TEST(Batches, ShuffleIsAPureFunctionOfSeedAndCoversEveryRow) {
  const auto ds = labelled(37, 10);
  const auto a = batches(ds, 8, 99), b = batches(ds, 8, 99), c = batches(ds, 8, 100);
  EXPECT_EQ(a.order(), b.order());
  EXPECT_NE(a.order(), c.order());
  std::multiset<std::size_t> rows;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto batch = a.get<double>(i);
    for (std::size_t k = 0; k < batch.rows.size(); ++k) {
      rows.insert(batch.rows[k]);
      EXPECT_EQ(batch.features.at(k, 0), ds.features[batch.rows[k] * 2]);
      EXPECT_EQ(batch.labels.at(k, 1), double(ds.labels[batch.rows[k]]));
    }
  }
  EXPECT_EQ(rows.size(), 37u);
  EXPECT_EQ(std::set<std::size_t>(rows.begin(), rows.end()).size(), 37u);
}

TEST(Batches, OneHot) {
  const std::vector<std::uint8_t> y = {1, 0, 1};
  const auto t = one_hot<float>(y);
  EXPECT_EQ(t.values(), (std::vector<float>{0, 1, 1, 0, 0, 1}));
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(t.at(r, 0) + t.at(r, 1), 1.0f);
}

// synthetic data

TEST(Synth, SeparableIsNearestCentroidSeparable) {
  const auto ds = synth_generate(256, 42, Difficulty::Separable);
  EXPECT_EQ(ds.num_features, 45u);
  EXPECT_EQ(ds.count(0), 128u);
  EXPECT_EQ(ds.count(1), 128u);
  EXPECT_EQ(oracle::nearest_centroid_accuracy(ds.features, ds.labels, 45), 1.0);
  EXPECT_EQ(oracle::logistic_regression_accuracy(ds.features, ds.labels, 45), 1.0);
}

TEST(Synth, ClassMeanGaps) {
  const auto informative = synth_informative_features();
  ASSERT_EQ(informative.size(), 8u);
  for (auto [difficulty, gap] : {std::pair{Difficulty::Separable, 6.0}, std::pair{Difficulty::Noisy, 1.0}}) {
    const auto ds = synth_generate(20000, 1, difficulty);
    for (std::size_t j = 0; j < 45; ++j) {
      double m[2] = {0, 0};
      for (std::size_t i = 0; i < ds.rows(); ++i) m[ds.labels[i]] += ds.features[i * 45 + j];
      const double diff = (m[1] - m[0]) / 10000.0;
      const bool is_inf = std::find(informative.begin(), informative.end(), j) != informative.end();
      EXPECT_NEAR(std::abs(diff), is_inf ? gap : 0.0, 0.1) << j;
    }
  }
}

TEST(Synth, DeterministicAndValidated) {
  EXPECT_EQ(synth_generate(64, 3, Difficulty::Noisy).features, synth_generate(64, 3, Difficulty::Noisy).features);
  EXPECT_NE(synth_generate(64, 3, Difficulty::Noisy).features, synth_generate(64, 4, Difficulty::Noisy).features);
  EXPECT_EQ(kind_of([] { synth_generate(1, 3, Difficulty::Noisy); }), ErrorKind::InvalidConfig);
}
