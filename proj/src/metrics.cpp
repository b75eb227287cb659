#include "saltseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"

namespace saltseg {

namespace {

struct Counts {
  std::size_t truth = 0, predicted = 0, intersection = 0;
  std::size_t union_size() const { return truth + predicted - intersection; }
};

Counts count_pixels(const Mask& truth, const Mask& prediction) {
  if (!truth.same_shape(prediction))
    throw ShapeError("mask shapes differ: " + std::to_string(truth.height()) + "x" +
                     std::to_string(truth.width()) + " vs " + std::to_string(prediction.height()) + "x" +
                     std::to_string(prediction.width()));
  Counts c;
  auto a = truth.values();
  auto b = prediction.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    c.truth += x;
    c.predicted += y;
    c.intersection += x && y;
  }
  return c;
}

int precision_from_counts(const Counts& c, double t) {
  if (c.truth == 0 && c.predicted == 0) return 1;
  if (c.truth == 0 || c.predicted == 0) return 0;
  const double value = static_cast<double>(c.intersection) / static_cast<double>(c.union_size());
  return value > t ? 1 : 0;
}

}  // namespace

ThresholdVector::ThresholdVector() {
  for (int i = 0; i < count; ++i) values[static_cast<std::size_t>(i)] = (50 + 5 * i) / 100.0;
}

double iou(const Mask& a, const Mask& b) {
  const Counts c = count_pixels(a, b);
  if (c.union_size() == 0) throw DomainError("IoU of two empty masks is undefined");
  return static_cast<double>(c.intersection) / static_cast<double>(c.union_size());
}

int precision_at(const Mask& truth, const Mask& prediction, double t) {
  return precision_from_counts(count_pixels(truth, prediction), t);
}

double average_precision(const Mask& truth, const Mask& prediction, const ThresholdVector& thresholds) {
  const Counts c = count_pixels(truth, prediction);
  int hits = 0;
  for (double t : thresholds.values) hits += precision_from_counts(c, t);
  return hits / static_cast<double>(ThresholdVector::count);
}

EvaluationReport mean_ap(const std::vector<ScoredPair>& pairs) {
  if (pairs.empty()) throw DomainError("mean_ap needs at least one pair");
  const ThresholdVector thresholds;
  EvaluationReport report;
  // Accumulate hit counts as integers so the mean does not depend on order.
  long long total_hits = 0;
  for (const auto& p : pairs) {
    const double ap = average_precision(*p.truth, *p.prediction, thresholds);
    if (!report.per_image_ap.emplace(p.id, ap).second) throw DomainError("duplicate id '" + p.id + "'");
    total_hits += std::llround(ap * ThresholdVector::count);
  }
  report.map_score = static_cast<double>(total_hits) /
                     (static_cast<double>(ThresholdVector::count) * static_cast<double>(pairs.size()));
  return report;
}

double mask_confidence(const ProbabilityMap& probabilities) {
  if (probabilities.empty()) throw DomainError("mask_confidence of an empty mask");
  double entropy_sum = 0.0;
  for (float v : probabilities.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DomainError("probability " + std::to_string(v) + " outside [0,1]");
    const double p = v;
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
    entropy_sum += h;
  }
  return -entropy_sum / static_cast<double>(probabilities.size());
}

void write_report_csv(const std::filesystem::path& path, const EvaluationReport& report) {
  CsvTable table{{"id", "ap"}, {}};
  char buf[32];
  for (const auto& [id, ap] : report.per_image_ap) {
    std::snprintf(buf, sizeof(buf), "%.1f", ap);
    table.rows.push_back({id, buf});
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.map_score);
  table.rows.push_back({"mAP", buf});
  write_csv(path, table);
}

}  // namespace saltseg
