#include "fghv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fghv/errors.hpp"
#include "fghv/keyvalue.hpp"

namespace fghv {

namespace {

struct ClassCounts {
  long real = 0;
  long attack = 0;
};

ClassCounts count_classes(const std::vector<LabeledScore>& scores) {
  ClassCounts c;
  for (const auto& s : scores) {
    if (s.label == 1) {
      ++c.real;
    } else if (s.label == 0) {
      ++c.attack;
    } else {
      throw MetricError("label must be 0 or 1");
    }
    if (!std::isfinite(s.score)) throw MetricError("non-finite score");
  }
  if (c.real == 0 || c.attack == 0) {
    throw MetricError("metric needs both classes (" + std::to_string(c.real) + " real, " +
                      std::to_string(c.attack) + " attack)");
  }
  return c;
}

}  // namespace

std::vector<OperatingPoint> roc_curve(const std::vector<LabeledScore>& scores) {
  const ClassCounts n = count_classes(scores);
  std::vector<LabeledScore> sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });

  std::vector<OperatingPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  long accepted_real = 0, accepted_attack = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == t; ++i) {
      (sorted[i].label == 1 ? accepted_real : accepted_attack)++;
    }
    curve.push_back({t, static_cast<double>(accepted_attack) / static_cast<double>(n.attack),
                     static_cast<double>(n.real - accepted_real) / static_cast<double>(n.real)});
  }
  return curve;
}

double roc_auc(const std::vector<LabeledScore>& scores) {
  const ClassCounts n = count_classes(scores);
  std::vector<LabeledScore> sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore& a, const LabeledScore& b) { return a.score < b.score; });
  // Mann-Whitney U with average ranks for ties. Ranks are half-integers, so
  // the sum is exact.
  double rank_sum_real = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (sorted[k].label == 1) rank_sum_real += avg_rank;
    }
    i = j;
  }
  const double nr = static_cast<double>(n.real);
  const double u = rank_sum_real - nr * (nr + 1.0) / 2.0;
  return u / (nr * static_cast<double>(n.attack));
}

EerResult eer(const std::vector<LabeledScore>& scores) {
  const auto curve = roc_curve(scores);
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const double d = curve[k].far - curve[k].frr;
    if (d < 0) continue;
    if (d == 0) {
      const double next = k + 1 < curve.size() ? curve[k + 1].threshold : curve[k].threshold;
      return {curve[k].far, 0.5 * (curve[k].threshold + next)};
    }
    const auto& a = curve[k - 1];
    const auto& b = curve[k];
    const double da = a.far - a.frr;
    const double t = da / (da - d);
    const double rate = a.far + t * (b.far - a.far);
    const double threshold =
        std::isinf(a.threshold) ? b.threshold : a.threshold + t * (b.threshold - a.threshold);
    return {rate, threshold};
  }
  // The last point accepts everything (FAR = 1, FRR = 0), so d > 0 there.
  throw MetricError("no equal-error crossing found");
}

double far_at(const std::vector<LabeledScore>& scores, double threshold) {
  const ClassCounts n = count_classes(scores);
  long accepted = 0;
  for (const auto& s : scores)
    if (s.label == 0 && s.score >= threshold) ++accepted;
  return static_cast<double>(accepted) / static_cast<double>(n.attack);
}

double frr_at(const std::vector<LabeledScore>& scores, double threshold) {
  const ClassCounts n = count_classes(scores);
  long rejected = 0;
  for (const auto& s : scores)
    if (s.label == 1 && s.score < threshold) ++rejected;
  return static_cast<double>(rejected) / static_cast<double>(n.real);
}

double hter(const std::vector<LabeledScore>& scores, double threshold) {
  if (std::isnan(threshold)) throw MetricError("threshold must not be NaN");
  return 0.5 * (far_at(scores, threshold) + frr_at(scores, threshold));
}

double acer(const std::vector<LabeledPrediction>& predictions) {
  long reals = 0, attacks = 0, rejected_real = 0, accepted_attack = 0;
  for (const auto& p : predictions) {
    if (p.label == 1) {
      ++reals;
      if (p.predicted == 0) ++rejected_real;
    } else if (p.label == 0) {
      ++attacks;
      if (p.predicted == 1) ++accepted_attack;
    } else {
      throw MetricError("label must be 0 or 1");
    }
  }
  if (reals == 0 || attacks == 0) throw MetricError("ACER needs both classes");
  const double apcer = static_cast<double>(accepted_attack) / static_cast<double>(attacks);
  const double bpcer = static_cast<double>(rejected_real) / static_cast<double>(reals);
  return 0.5 * (apcer + bpcer);
}

Histogram histogram(const std::vector<LabeledScore>& values, int bins, double lo, double hi) {
  if (bins < 1) throw MetricError("histogram needs at least one bin");
  if (!(hi >= lo)) throw MetricError("histogram range is empty");
  Histogram h{lo, hi, std::vector<long>(bins, 0), std::vector<long>(bins, 0)};
  const double width = (hi - lo) / bins;
  for (const auto& v : values) {
    int b = width > 0 ? static_cast<int>(std::floor((v.score - lo) / width)) : 0;
    b = std::clamp(b, 0, bins - 1);
    (v.label == 1 ? h.real : h.attack)[b]++;
  }
  return h;
}

Histogram histogram(const std::vector<LabeledScore>& values, int bins) {
  if (values.empty()) return histogram(values, bins, 0.0, 1.0);
  const auto [mn, mx] = std::minmax_element(
      values.begin(), values.end(),
      [](const LabeledScore& a, const LabeledScore& b) { return a.score < b.score; });
  return histogram(values, bins, mn->score, mx->score);
}

std::string MetricsReport::to_key_values() const {
  std::ostringstream os;
  os << "auc=" << format_double(auc) << '\n'
     << "eer=" << format_double(eer) << '\n'
     << "eer_threshold=" << format_double(eer_threshold) << '\n'
     << "hter=" << format_double(hter) << '\n'
     << "hter_threshold=" << format_double(hter_threshold) << '\n'
     << "acer=" << format_double(acer) << '\n'
     << "softmax_threshold=" << format_double(softmax_threshold) << '\n'
     << "var_threshold=" << format_double(var_threshold) << '\n'
     << "delta_kl_threshold=" << format_double(delta_kl_threshold) << '\n'
     << "real_count=" << real_count << '\n'
     << "attack_count=" << attack_count << '\n';
  return os.str();
}

std::string MetricsReport::to_table() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "metric      value      threshold\n"
                "AUC(%%)    %8.2f\n"
                "EER(%%)    %8.2f   %12.6g\n"
                "HTER(%%)   %8.2f   %12.6g\n"
                "ACER(%%)   %8.2f   softmax>=%.6g var<=%.6g dKL<=%.6g\n"
                "samples     %ld real / %ld attack\n",
                100.0 * auc, 100.0 * eer, eer_threshold, 100.0 * hter, hter_threshold,
                100.0 * acer, softmax_threshold, var_threshold, delta_kl_threshold,
                real_count, attack_count);
  return buf;
}

}  // namespace fghv
