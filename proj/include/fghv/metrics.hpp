#pragma once

#include <string>
#include <vector>

namespace fghv {

/// Higher score means "more likely real". label 1 = real, 0 = attack.
struct LabeledScore {
  double score = 0.0;
  int label = 0;
};

/// One point of the ROC sweep: everything with score >= threshold is accepted.
struct OperatingPoint {
  double threshold = 0.0;
  double far = 0.0;  // attacks accepted / attacks
  double frr = 0.0;  // reals rejected / reals
};

/// Points for threshold = +inf followed by every distinct score in
/// descending order. Tied scores form one point.
std::vector<OperatingPoint> roc_curve(const std::vector<LabeledScore>& scores);

/// Probability that a random real outscores a random attack, ties counting
/// one half (equivalently the trapezoidal area under the ROC curve).
double roc_auc(const std::vector<LabeledScore>& scores);

struct EerResult {
  double rate = 0.0;
  double threshold = 0.0;
};

/// Rate where FAR equals FRR, interpolated linearly between the two adjacent
/// operating points whose FAR - FRR changes sign. When an operating point
/// hits FAR == FRR exactly, the threshold is the midpoint to the next lower
/// distinct score.
EerResult eer(const std::vector<LabeledScore>& scores);

double far_at(const std::vector<LabeledScore>& scores, double threshold);
double frr_at(const std::vector<LabeledScore>& scores, double threshold);

/// (FAR + FRR) / 2 at a fixed threshold.
double hter(const std::vector<LabeledScore>& scores, double threshold);

struct LabeledPrediction {
  int label = 0;
  int predicted = 0;
};

/// (APCER + BPCER) / 2: attacks accepted as real, reals rejected.
double acer(const std::vector<LabeledPrediction>& predictions);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<long> real;
  std::vector<long> attack;
};

/// Equal-width bins over [lo, hi]; values outside are clamped into the end
/// bins so counts always sum to the sample count.
Histogram histogram(const std::vector<LabeledScore>& values, int bins, double lo, double hi);

/// Same, with the range spanning the observed values.
Histogram histogram(const std::vector<LabeledScore>& values, int bins);

struct MetricsReport {
  double auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  double hter = 0.0;
  double hter_threshold = 0.0;
  double acer = 0.0;
  double softmax_threshold = 0.0;
  double var_threshold = 0.0;
  double delta_kl_threshold = 0.0;
  long real_count = 0;
  long attack_count = 0;

  /// key=value lines, one metric per line.
  std::string to_key_values() const;
  /// Fixed-width human-readable table.
  std::string to_table() const;
};

}  // namespace fghv
