#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fghv/keyvalue.hpp"
#include "fghv/metrics.hpp"
#include "fghv/models.hpp"
#include "fghv/synthdata.hpp"
#include "fghv/verification.hpp"

namespace fghv {

struct ConfigKey {
  std::string name;
  std::string help;
  bool from_paper = false;
};

/// Everything a training or scoring run depends on.
///
/// A disabled generator is replaced by a learnable constant prototype (zero
/// weights, trainable output bias). Constraints that reference a disabled
/// generator are rejected by validate(). With no constraint enabled (only
/// legal when the real generator is disabled) training falls back to the
/// cross-entropy over cosine logits against whatever hypotheses exist, which
/// is a conventional binary classifier.
struct RunConfig {
  // objective
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  bool use_var = true;
  bool use_rcc = true;
  bool use_ddc = true;
  bool real_generator = true;
  bool attack_generator = true;
  int hypotheses = 14;  // N

  // latent search
  int ghvm_iterations = 15;  // M
  double ghvm_step = 1.0;    // alpha
  double sigma_floor = 1e-6;

  // optimizer
  double learning_rate = 1e-3;
  double learning_rate_late = 1e-4;
  int lr_drop_epoch = 50;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 60;
  int batch_size = 32;
  std::uint64_t seed = 7;

  // model shape
  int latent_dim = 64;
  int generator_hidden = 128;
  int feature_dim = 16;
  std::vector<int> extractor_hidden = {128};
  double leaky_slope = 0.01;

  // paths
  std::string train_data;
  std::string checkpoint = "fghv.ckpt";
  std::string log = "train_log.csv";

  bool baseline_objective() const { return !use_var && !use_rcc && !use_ddc; }
  GhvmConfig ghvm() const { return {ghvm_iterations, ghvm_step, sigma_floor}; }

  /// Throws ConfigError on an inconsistent combination.
  void validate() const;

  static RunConfig from(const KeyValues& kv);
  KeyValues to_key_values() const;
  static const std::vector<ConfigKey>& keys();

  /// Comma lists, e.g. "var,rcc,ddc" and "real,attack". Empty string = none.
  std::string constraints_string() const;
  std::string generators_string() const;
};

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double var = 0.0;
  double rcc = 0.0;
  double ddc = 0.0;
  double overall = 0.0;
  double var_real = 0.0;
  double var_attack = 0.0;
  double rcc_real = 0.0;
  double rcc_attack = 0.0;
};

std::string log_header();
std::string log_row(const EpochStats& s);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> history;
};

/// Deterministic in (config, samples). Writes one CSV row per epoch to `log`
/// when given.
TrainResult train(const RunConfig& config, const std::vector<Sample>& samples,
                  std::ostream* log = nullptr);

/// Rebuilds the run configuration echoed into a checkpoint.
RunConfig config_of(const Checkpoint& ckpt);

struct ScoredSample {
  ScoreTriple scores;
  int label = 0;
  int domain = 0;
};

struct ScoreOptions {
  int hypotheses = 14;
  GhvmConfig ghvm;
  std::uint64_t seed = 11;
  bool with_ghvm = true;
  int threads = 1;
};

/// Scores every sample; sample i uses latent stream derive_seed(seed, i), so
/// the result does not depend on the thread count.
std::vector<ScoredSample> score_samples(const Checkpoint& ckpt,
                                        const std::vector<Sample>& samples,
                                        const ScoreOptions& options);

/// Score file: a `# mode=...` comment line, then the CSV header
/// `softmax_mean,var,delta_kl,label,domain`, then one row per sample.
void write_scores(const std::vector<ScoredSample>& scores, ScoreMode mode,
                  const std::filesystem::path& path);

struct ScoreFile {
  ScoreMode mode = ScoreMode::CrossDataset;
  std::vector<ScoredSample> rows;
};

ScoreFile read_scores(const std::filesystem::path& path);

std::vector<LabeledScore> softmax_scores(const std::vector<ScoredSample>& s);
/// Negated so that higher means more likely real.
std::vector<LabeledScore> negated_var_scores(const std::vector<ScoredSample>& s);
std::vector<LabeledScore> negated_delta_kl_scores(const std::vector<ScoredSample>& s);

/// Equal-error thresholds of each score, fitted on `dev`.
Thresholds fit_thresholds(const std::vector<ScoredSample>& dev);

/// AUC and EER of the softmax score on `test`; HTER at the dev-fitted softmax
/// threshold; ACER of classify() under the dev-fitted thresholds.
MetricsReport evaluate(const std::vector<ScoredSample>& test,
                       const std::vector<ScoredSample>& dev, ScoreMode mode);

void write_histogram(const Histogram& h, const std::filesystem::path& path);

struct SweepCell {
  int hypotheses = 0;
  int repeat = 0;
  double auc = 0.0;
};

struct SweepRow {
  int hypotheses = 0;
  double mean_auc = 0.0;
  double min_auc = 0.0;
  double max_auc = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
};

/// Trains and scores one model per (N, repeat). Repeat r uses training seed
/// derive_seed(base.seed, r) for every N. Test AUC uses the softmax score.
SweepResult sweep_hypotheses(const RunConfig& base, const std::vector<Sample>& train_set,
                             const std::vector<Sample>& test_set,
                             const std::vector<int>& n_values, int repeats,
                             int threads = 1);

std::string sweep_table(const SweepResult& result);

struct AblationRow {
  std::string name;
  RunConfig config;
  double auc = 0.0;
  double hter = 0.0;
};

/// The seven constraint subsets and four generator subsets, as RunConfigs
/// derived from `base`.
std::vector<AblationRow> constraint_ablations(const RunConfig& base);
std::vector<AblationRow> generator_ablations(const RunConfig& base);

/// Trains each row, scores dev and test, fills in AUC and HTER.
void run_ablations(std::vector<AblationRow>& rows, const std::vector<Sample>& train_set,
                   const std::vector<Sample>& dev_set, const std::vector<Sample>& test_set,
                   int threads = 1);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace fghv
