#include <charconv>
#include <cstdio>
#include <fstream>
#include <thread>

#include "fghv/errors.hpp"
#include "fghv/harness.hpp"

namespace fghv {

std::vector<ScoredSample> score_samples(const Checkpoint& ckpt,
                                        const std::vector<Sample>& samples,
                                        const ScoreOptions& options) {
  if (options.hypotheses < 2) throw ConfigError("scoring needs N >= 2 hypotheses");
  if (samples.empty()) return {};
  const Index d_in = ckpt.extractor.input_dim();
  for (const auto& s : samples) {
    if (s.x.size() != d_in) {
      throw ConfigError("dataset dimension " + std::to_string(s.x.size()) +
                        " does not match checkpoint input dimension " + std::to_string(d_in));
    }
  }
  const Matrix features = extract_features(stack_inputs(samples), ckpt.extractor);

  std::vector<ScoredSample> out(samples.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < samples.size(); i += stride) {
      out[i].scores = score_feature(features.row(static_cast<Index>(i)).transpose(),
                                    ckpt.real_gen, ckpt.attack_gen, options.hypotheses,
                                    options.ghvm, derive_seed(options.seed, i),
                                    options.with_ghvm);
      out[i].label = samples[i].label;
      out[i].domain = samples[i].domain;
    }
  };

  const auto threads = static_cast<std::size_t>(std::max(1, options.threads));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            work(t, threads);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_scores(const std::vector<ScoredSample>& scores, ScoreMode mode,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << (mode == ScoreMode::CrossDataset ? "# mode=cross-dataset delta_kl=unused\n"
                                          : "# mode=cross-type\n");
  out << "softmax_mean,var,delta_kl,label,domain\n";
  for (const auto& s : scores) {
    out << format_double(s.scores.softmax_mean) << ',' << format_double(s.scores.var) << ','
        << format_double(s.scores.delta_kl) << ',' << s.label << ',' << s.domain << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

ScoreFile read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file " + path.string());
  ScoreFile file;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.find("mode=cross-type") != std::string::npos) file.mode = ScoreMode::CrossType;
      continue;
    }
    if (line.rfind("softmax_mean", 0) == 0) continue;
    double f[5];
    const char* p = line.data();
    const char* end = p + line.size();
    for (int k = 0; k < 5; ++k) {
      const auto [next, ec] = std::from_chars(p, end, f[k]);
      const bool last = k == 4;
      if (ec != std::errc() || (last ? next != end : (next == end || *next != ','))) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": expected softmax_mean,var,delta_kl,label,domain");
      }
      p = next + 1;
    }
    if (f[3] != 0 && f[3] != 1) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    }
    file.rows.push_back({{f[0], f[1], f[2]}, static_cast<int>(f[3]), static_cast<int>(f[4])});
  }
  return file;
}

std::vector<LabeledScore> softmax_scores(const std::vector<ScoredSample>& s) {
  std::vector<LabeledScore> out;
  out.reserve(s.size());
  for (const auto& r : s) out.push_back({r.scores.softmax_mean, r.label});
  return out;
}

std::vector<LabeledScore> negated_var_scores(const std::vector<ScoredSample>& s) {
  std::vector<LabeledScore> out;
  out.reserve(s.size());
  for (const auto& r : s) out.push_back({-r.scores.var, r.label});
  return out;
}

std::vector<LabeledScore> negated_delta_kl_scores(const std::vector<ScoredSample>& s) {
  std::vector<LabeledScore> out;
  out.reserve(s.size());
  for (const auto& r : s) out.push_back({-r.scores.delta_kl, r.label});
  return out;
}

Thresholds fit_thresholds(const std::vector<ScoredSample>& dev) {
  Thresholds t;
  t.softmax = eer(softmax_scores(dev)).threshold;
  t.var = -eer(negated_var_scores(dev)).threshold;
  t.delta_kl = -eer(negated_delta_kl_scores(dev)).threshold;
  return t;
}

MetricsReport evaluate(const std::vector<ScoredSample>& test,
                       const std::vector<ScoredSample>& dev, ScoreMode mode) {
  const auto scores = softmax_scores(test);
  const Thresholds t = fit_thresholds(dev);
  MetricsReport r;
  r.auc = roc_auc(scores);
  const EerResult e = eer(scores);
  r.eer = e.rate;
  r.eer_threshold = e.threshold;
  r.hter_threshold = t.softmax;
  r.hter = hter(scores, t.softmax);
  std::vector<LabeledPrediction> predictions;
  for (const auto& s : test) {
    predictions.push_back({s.label, classify(s.scores, t, mode)});
    (s.label == 1 ? r.real_count : r.attack_count)++;
  }
  r.acer = acer(predictions);
  r.softmax_threshold = t.softmax;
  r.var_threshold = t.var;
  r.delta_kl_threshold = t.delta_kl;
  return r;
}

void write_histogram(const Histogram& h, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "bin_lo,bin_hi,real,attack\n";
  const int bins = static_cast<int>(h.real.size());
  const double width = (h.hi - h.lo) / bins;
  for (int b = 0; b < bins; ++b) {
    out << format_double(h.lo + b * width) << ',' << format_double(h.lo + (b + 1) * width)
        << ',' << h.real[b] << ',' << h.attack[b] << '\n';
  }
}

}  // namespace fghv
