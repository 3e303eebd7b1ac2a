#include "fghv/verification.hpp"

#include <cmath>
#include <string>

#include "fghv/constraints.hpp"
#include "fghv/errors.hpp"

namespace fghv {

FhvmScore fhvm_score(const FeatureVector& f, const HypothesisBatch& batch) {
  if (batch.size() < 2) {
    throw ConfigError("fhvm needs N >= 2 hypotheses, got " + std::to_string(batch.size()));
  }
  const Vector cg = cosines(f, batch.real);
  const Vector ch = cosines(f, batch.attack);
  double acc = 0.0;
  for (Index i = 0; i < cg.size(); ++i) {
    // e^a / (e^a + e^b) = 1 / (1 + e^(b - a)); |b - a| <= 2 so no overflow.
    acc += 1.0 / (1.0 + std::exp(ch(i) - cg(i)));
  }
  return {acc / static_cast<double>(cg.size()), sample_variance(cg)};
}

double kl_per_dim(double mu, double sigma) {
  if (!(sigma > 0)) throw ContractError("kl_per_dim needs sigma > 0");
  return -std::log(sigma) + (sigma * sigma + mu * mu) / 2.0 - 0.5;
}

double kl_mean(const LatentMatrix& latents, double sigma_floor,
               KlDiagnostics* diagnostics) {
  if (latents.rows() < 2) {
    throw ConfigError("kl_mean needs at least 2 latents, got " +
                      std::to_string(latents.rows()));
  }
  if (!(sigma_floor > 0)) throw ConfigError("sigma floor must be positive");
  const double n = static_cast<double>(latents.rows());
  double total = 0.0;
  for (Index d = 0; d < latents.cols(); ++d) {
    const auto col = latents.col(d);
    const double mu = col.mean();
    const double var = (col.array() - mu).square().sum() / (n - 1.0);
    double sigma = std::sqrt(var);
    if (sigma < sigma_floor) {
      sigma = sigma_floor;
      if (diagnostics) ++diagnostics->clamped_dims;
    }
    total += kl_per_dim(mu, sigma);
  }
  return total / static_cast<double>(latents.cols());
}

double latent_objective(const FeatureVector& f, const LatentMatrix& latents,
                        const GeneratorParams& real_gen,
                        const GeneratorParams& attack_gen) {
  const HypothesisBatch batch = generate_hypotheses(latents, real_gen, attack_gen);
  return rcc(f, batch.real, batch.attack, 1) * static_cast<double>(batch.size());
}

namespace {

struct LatentStep {
  double objective;
  Matrix gradient;
};

LatentStep latent_step(const Tensor& feature, const LatentMatrix& latents,
                       const GeneratorTensors& real_gen,
                       const GeneratorTensors& attack_gen) {
  Tensor z = Tensor::matrix(latents, true);
  const Tensor terms =
      graph::rcc_terms(feature, forward(real_gen, z), forward(attack_gen, z), {1});
  const Tensor objective = ad::sum(terms);
  ad::backward(objective);
  return {objective.item(), z.grad()};
}

}  // namespace

Matrix latent_gradient(const FeatureVector& f, const LatentMatrix& latents,
                       const GeneratorTensors& real_gen,
                       const GeneratorTensors& attack_gen) {
  return latent_step(Tensor::row(f), latents, real_gen, attack_gen).gradient;
}

LatentTrajectory optimize_latents(const FeatureVector& f, const LatentMatrix& initial,
                                  const GeneratorParams& real_gen,
                                  const GeneratorParams& attack_gen,
                                  const GhvmConfig& cfg) {
  if (cfg.iterations < 0) throw ConfigError("iteration count must be nonnegative");
  if (!(cfg.step > 0)) throw ConfigError("latent step length must be positive");
  if (initial.rows() < 2) throw ConfigError("latent search needs N >= 2 latents");
  if (real_gen.latent_dim() != initial.cols() || attack_gen.latent_dim() != initial.cols()) {
    throw ConfigError("latent dimension does not match the generators");
  }

  LatentTrajectory out;
  out.initial = initial;
  out.final = initial;
  out.kl_initial = kl_mean(initial, cfg.sigma_floor, &out.diagnostics);

  // Frozen copies: no weight gradients are recorded.
  const GeneratorTensors real_t = to_tensors(real_gen, false);
  const GeneratorTensors attack_t = to_tensors(attack_gen, false);
  const Tensor feature = Tensor::row(f);
  for (int it = 0; it < cfg.iterations; ++it) {
    const Matrix grad = latent_step(feature, out.final, real_t, attack_t).gradient;
    if (!grad.allFinite()) {
      throw OptimizationError("non-finite latent gradient at iteration " +
                              std::to_string(it));
    }
    out.final -= cfg.step * grad;
  }
  out.kl_final = kl_mean(out.final, cfg.sigma_floor, &out.diagnostics);
  return out;
}

double ghvm_score(const FeatureVector& f, const HypothesisBatch& batch,
                  const GeneratorParams& real_gen, const GeneratorParams& attack_gen,
                  const GhvmConfig& cfg) {
  return optimize_latents(f, batch.latents, real_gen, attack_gen, cfg).delta_kl();
}

double epistemic_uncertainty(const FeatureVector& f, const Matrix& real_hypotheses) {
  if (real_hypotheses.rows() < 2) {
    throw ConfigError("epistemic uncertainty needs N >= 2 hypotheses");
  }
  const Vector y = cosines(f, real_hypotheses);
  const double t = static_cast<double>(y.size());
  const double mean = y.sum() / t;
  return y.squaredNorm() / t - mean * mean;
}

int classify(const ScoreTriple& triple, const Thresholds& thresholds, ScoreMode mode) {
  const bool softmax_ok = triple.softmax_mean >= thresholds.softmax;
  if (mode == ScoreMode::CrossDataset) return softmax_ok ? 1 : 0;
  return softmax_ok && triple.var <= thresholds.var &&
                 triple.delta_kl <= thresholds.delta_kl
             ? 1
             : 0;
}

ScoreTriple score_feature(const FeatureVector& f, const GeneratorParams& real_gen,
                          const GeneratorParams& attack_gen, Index n,
                          const GhvmConfig& cfg, std::uint64_t seed, bool with_ghvm) {
  const HypothesisBatch batch = generate_hypotheses(
      sample_latents(n, real_gen.latent_dim(), seed), real_gen, attack_gen);
  const FhvmScore fhvm = fhvm_score(f, batch);
  ScoreTriple out{fhvm.softmax_mean, fhvm.var, 0.0};
  if (with_ghvm) out.delta_kl = ghvm_score(f, batch, real_gen, attack_gen, cfg);
  return out;
}

}  // namespace fghv
