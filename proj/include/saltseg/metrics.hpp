#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "saltseg/grid.hpp"

namespace saltseg {

/// IoU thresholds 0.50, 0.55, ..., 0.95. Each value is the correctly rounded
/// double of k/100, so an IoU that equals a threshold exactly compares equal.
struct ThresholdVector {
  static constexpr int count = 10;
  std::array<double, count> values;
  ThresholdVector();
};

struct EvaluationReport {
  std::map<std::string, double> per_image_ap;
  double map_score = 0.0;
};

/// |A n B| / |A u B|. Throws ShapeError on mismatch and DomainError when both
/// masks are empty.
double iou(const Mask& a, const Mask& b);

/// Per-threshold precision: 1 for empty/empty, 0 when exactly one side is
/// empty, otherwise [IoU > t] with a strict comparison.
int precision_at(const Mask& truth, const Mask& prediction, double t);

double average_precision(const Mask& truth, const Mask& prediction,
                         const ThresholdVector& thresholds = ThresholdVector{});

struct ScoredPair {
  std::string id;
  const Mask* truth;
  const Mask* prediction;
};

/// Throws DomainError on empty input or duplicate ids.
EvaluationReport mean_ap(const std::vector<ScoredPair>& pairs);

/// Negative mean binary entropy (natural log, 0 ln 0 = 0). 0 iff every pixel
/// is exactly 0 or 1. Throws DomainError for values outside [0,1].
double mask_confidence(const ProbabilityMap& probabilities);

/// CSV `id,ap` followed by a `mAP,<score>` summary row.
void write_report_csv(const std::filesystem::path& path, const EvaluationReport& report);

}  // namespace saltseg
