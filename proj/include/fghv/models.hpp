#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fghv/autodiff.hpp"

namespace fghv {

using Index = Eigen::Index;
using Matrix = ad::Matrix<double>;
using Vector = Eigen::VectorXd;
using Tensor = ad::Tensor<double>;

/// Row i of a latent matrix is the latent vector z_i.
using LatentMatrix = Matrix;
using FeatureVector = Vector;

/// splitmix64 mix of a base seed with stream coordinates. Used to give every
/// (epoch, batch) and every scored sample its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0);

/// Two affine layers with a leaky ReLU in between: z -> W2 lrelu(W1 z + b1) + b2.
struct GeneratorParams {
  Matrix w1;  // hidden x latent
  Vector b1;
  Matrix w2;  // feature x hidden
  Vector b2;
  double slope = 0.01;

  Index latent_dim() const { return w1.cols(); }
  Index hidden_dim() const { return w1.rows(); }
  Index feature_dim() const { return w2.rows(); }
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

/// Leaky-ReLU MLP. No activation after the last layer.
struct ExtractorParams {
  std::vector<DenseLayer> layers;
  double slope = 0.01;

  Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }
};

/// Glorot-uniform weights, zero biases.
GeneratorParams init_generator(Index latent_dim, Index hidden_dim,
                               Index feature_dim, double slope,
                               std::mt19937_64& rng);

ExtractorParams init_extractor(Index input_dim,
                               const std::vector<Index>& hidden_dims,
                               Index feature_dim, double slope,
                               std::mt19937_64& rng);

/// n independent N(0, I) latents of dimension latent_dim, one per row.
/// Throws ConfigError when n < 2 or latent_dim < 1.
LatentMatrix sample_latents(Index n, Index latent_dim, std::uint64_t seed);

/// Index-aligned hypotheses: real.row(i) and attack.row(i) both come from
/// latents.row(i).
struct HypothesisBatch {
  LatentMatrix latents;
  Matrix real;
  Matrix attack;

  Index size() const { return latents.rows(); }
};

Matrix generate(const GeneratorParams& gen, const LatentMatrix& latents);

HypothesisBatch generate_hypotheses(const LatentMatrix& latents,
                                    const GeneratorParams& real_gen,
                                    const GeneratorParams& attack_gen);

FeatureVector extract_feature(const Vector& x, const ExtractorParams& extractor);

/// Row-wise batch version of extract_feature.
Matrix extract_features(const Matrix& inputs, const ExtractorParams& extractor);

// ---------------------------------------------------------------------------
// Differentiable views. Tensors created here are graph leaves that own a copy
// of the parameter values.
// ---------------------------------------------------------------------------

struct GeneratorTensors {
  Tensor w1, b1, w2, b2;
  double slope = 0.01;

  std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
};

struct ExtractorTensors {
  std::vector<std::pair<Tensor, Tensor>> layers;
  double slope = 0.01;

  std::vector<Tensor> parameters() const;
};

GeneratorTensors to_tensors(const GeneratorParams& gen, bool requires_grad);
GeneratorParams to_params(const GeneratorTensors& gen);
ExtractorTensors to_tensors(const ExtractorParams& ext, bool requires_grad);
ExtractorParams to_params(const ExtractorTensors& ext);

Tensor forward(const GeneratorTensors& gen, const Tensor& latents);
Tensor forward(const ExtractorTensors& ext, const Tensor& inputs);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  ExtractorParams extractor;
  GeneratorParams real_gen;
  GeneratorParams attack_gen;
  ConfigEcho config;
};

/// File layout (text header, binary payload):
///
///   fghv-checkpoint
///   version 1
///   config <k>
///   <key>=<value>                      k lines
///   tensors <t>
///   <name> <rows> <cols>               t lines, payload order
///   payload <bytes> <fnv1a64 hex>
///   <raw IEEE-754 binary64, little-endian, row-major>
///
/// Tensor names: extractor.slope, extractor.<i>.weight, extractor.<i>.bias,
/// {real,attack}.{slope,w1,b1,w2,b2}. Vectors are stored as 1 x n.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws LoadError on a missing file, bad magic, unsupported version,
/// truncated payload, checksum mismatch, or inconsistent shapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fghv
