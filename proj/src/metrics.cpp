#include "clids/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "clids/error.hpp"

namespace clids::metrics {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) noexcept { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    fail(ErrorKind::LengthMismatch,
         std::to_string(a) + " labels but " + std::to_string(b) + " predictions");
  }
  if (a == 0) fail(ErrorKind::EmptyInput, "no samples to score");
}

}  // namespace

ConfusionCounts confusion(std::span<const std::uint8_t> labels,
                          std::span<const std::uint8_t> predicted) {
  check_lengths(labels.size(), predicted.size());
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool truth = labels[i] != 0, guess = predicted[i] != 0;
    if (truth && guess) ++c.tp;
    else if (!truth && !guess) ++c.tn;
    else if (!truth && guess) ++c.fp;
    else ++c.fn;
  }
  return c;
}

Rates scalar_metrics(const ConfusionCounts& c) noexcept {
  Rates r;
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.f1 = harmonic(r.precision, r.recall);
  r.fpr = ratio(c.fp, c.fp + c.tn);
  return r;
}

MetricsReport classification_report(std::span<const std::uint8_t> labels,
                                     std::span<const std::uint8_t> predicted) {
  MetricsReport rep;
  rep.counts = confusion(labels, predicted);
  rep.rates = scalar_metrics(rep.counts);
  const ConfusionCounts& c = rep.counts;

  // Benign as the positive class swaps the roles of the four cells.
  const ConfusionCounts benign_view{c.tn, c.tp, c.fn, c.fp};
  const std::array<ConfusionCounts, 2> views{benign_view, c};
  const std::array<const char*, 2> names{"benign", "malicious"};
  for (std::size_t k = 0; k < 2; ++k) {
    const Rates r = scalar_metrics(views[k]);
    rep.per_class[k] = {names[k], r.precision, r.recall, r.f1, views[k].tp + views[k].fn};
  }

  const double total = static_cast<double>(c.total());
  rep.macro.support = rep.weighted.support = c.total();
  for (const ClassMetrics& m : rep.per_class) {
    rep.macro.precision += m.precision / 2.0;
    rep.macro.recall += m.recall / 2.0;
    rep.macro.f1 += m.f1 / 2.0;
    const double w = static_cast<double>(m.support) / total;
    rep.weighted.precision += w * m.precision;
    rep.weighted.recall += w * m.recall;
    rep.weighted.f1 += w * m.f1;
  }

  rep.matrix = {{{c.tn, c.fp}, {c.fn, c.tp}}};
  for (std::size_t i = 0; i < 2; ++i) {
    const std::uint64_t row = rep.matrix[i][0] + rep.matrix[i][1];
    for (std::size_t j = 0; j < 2; ++j) rep.matrix_normalized[i][j] = ratio(rep.matrix[i][j], row);
  }
  return rep;
}

RocCurve roc_and_auc(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  check_lengths(labels.size(), scores.size());
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) fail(ErrorKind::DomainError, "score outside [0, 1]");
  }
  const std::uint64_t pos = static_cast<std::uint64_t>(
      std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) fail(ErrorKind::SingleClass, "ROC needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});  // threshold +inf
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      if (labels[order[i]]) ++tp;
      else ++fp;
    }
    const RocPoint p{ratio(fp, neg), ratio(tp, pos)};
    if (!(p == curve.points.back())) curve.points.push_back(p);
  }

  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return curve;
}

}  // namespace clids::metrics
