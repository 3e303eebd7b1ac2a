#pragma once

#include <cstdint>

#include "fghv/models.hpp"

namespace fghv {

/// Latent-search settings for the distribution check.
struct GhvmConfig {
  int iterations = 15;         // M
  double step = 1.0;           // alpha
  double sigma_floor = 1e-6;   // lower bound on the per-dimension std estimate
};

/// The three classification bases for one input.
struct ScoreTriple {
  double softmax_mean = 0.5;
  double var = 0.0;
  double delta_kl = 0.0;
};

struct FhvmScore {
  double softmax_mean = 0.5;
  double var = 0.0;
};

struct KlDiagnostics {
  int clamped_dims = 0;
};

struct LatentTrajectory {
  LatentMatrix initial;
  LatentMatrix final;
  double kl_initial = 0.0;
  double kl_final = 0.0;
  KlDiagnostics diagnostics;

  double delta_kl() const { return kl_final - kl_initial; }
};

/// Mean softmax probability of the real class over the index-aligned pairs
/// (cos(f, g_i), cos(f, h_i)), and the variance of cos(f, g_i).
FhvmScore fhvm_score(const FeatureVector& f, const HypothesisBatch& batch);

/// KL(N(mu, sigma^2) || N(0, 1)) = -log sigma + (sigma^2 + mu^2)/2 - 1/2.
double kl_per_dim(double mu, double sigma);

/// Per-dimension KL of the Gaussian fitted to the rows of `latents` (sample
/// mean, unbiased sample std floored at sigma_floor), averaged over dimensions.
double kl_mean(const LatentMatrix& latents, double sigma_floor = 1e-6,
               KlDiagnostics* diagnostics = nullptr);

/// Sum over i of the y'=1 RCC term for latent z_i, evaluated in closed form.
/// This is the objective whose gradient drives the latent search.
double latent_objective(const FeatureVector& f, const LatentMatrix& latents,
                        const GeneratorParams& real_gen,
                        const GeneratorParams& attack_gen);

/// Gradient of latent_objective with respect to every latent, by reverse-mode
/// differentiation through both (frozen) generators.
Matrix latent_gradient(const FeatureVector& f, const LatentMatrix& latents,
                       const GeneratorTensors& real_gen,
                       const GeneratorTensors& attack_gen);

/// M plain gradient-descent steps z <- z - alpha * grad on latent_objective.
/// Throws OptimizationError if a gradient entry becomes non-finite.
LatentTrajectory optimize_latents(const FeatureVector& f, const LatentMatrix& initial,
                                  const GeneratorParams& real_gen,
                                  const GeneratorParams& attack_gen,
                                  const GhvmConfig& cfg);

double ghvm_score(const FeatureVector& f, const HypothesisBatch& batch,
                  const GeneratorParams& real_gen, const GeneratorParams& attack_gen,
                  const GhvmConfig& cfg);

/// Population variance (divisor T = N) of cos(f, g_t). Equals
/// var_constraint * (N - 1) / N.
double epistemic_uncertainty(const FeatureVector& f, const Matrix& real_hypotheses);

enum class ScoreMode { CrossDataset, CrossType };

struct Thresholds {
  double softmax = 0.5;  // real needs softmax_mean >= this
  double var = 1.0;      // real needs var <= this (cross-type only)
  double delta_kl = 0.0; // real needs delta_kl <= this (cross-type only)
};

/// 1 = real, 0 = attack.
int classify(const ScoreTriple& triple, const Thresholds& thresholds, ScoreMode mode);

/// Samples n latents from `seed`, then evaluates both verification modules.
/// The delta_kl field is skipped (left 0) when with_ghvm is false.
ScoreTriple score_feature(const FeatureVector& f, const GeneratorParams& real_gen,
                          const GeneratorParams& attack_gen, Index n,
                          const GhvmConfig& cfg, std::uint64_t seed,
                          bool with_ghvm = true);

}  // namespace fghv
