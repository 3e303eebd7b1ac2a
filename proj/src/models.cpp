#include "fghv/models.hpp"

#include <cmath>
#include <string>

#include "fghv/errors.hpp"

namespace fghv {

namespace {

Matrix glorot_uniform(Index out, Index in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(out, in);
  for (Index r = 0; r < out; ++r)
    for (Index c = 0; c < in; ++c) w(r, c) = dist(rng);
  return w;
}

double leaky(double v, double slope) { return v > 0 ? v : slope * v; }

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix out = x * w.transpose();
  out.rowwise() += b.transpose();
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0xd6e8feb86659fd93ULL));
}

GeneratorParams init_generator(Index latent_dim, Index hidden_dim,
                               Index feature_dim, double slope,
                               std::mt19937_64& rng) {
  if (latent_dim < 1 || hidden_dim < 1 || feature_dim < 1) {
    throw ConfigError("generator dimensions must be positive");
  }
  if (!(slope > 0 && slope < 1)) {
    throw ConfigError("leaky ReLU slope must lie in (0, 1)");
  }
  GeneratorParams g;
  g.w1 = glorot_uniform(hidden_dim, latent_dim, rng);
  g.b1 = Vector::Zero(hidden_dim);
  g.w2 = glorot_uniform(feature_dim, hidden_dim, rng);
  g.b2 = Vector::Zero(feature_dim);
  g.slope = slope;
  return g;
}

ExtractorParams init_extractor(Index input_dim,
                               const std::vector<Index>& hidden_dims,
                               Index feature_dim, double slope,
                               std::mt19937_64& rng) {
  if (input_dim < 1 || feature_dim < 1) {
    throw ConfigError("extractor dimensions must be positive");
  }
  if (!(slope > 0 && slope < 1)) {
    throw ConfigError("leaky ReLU slope must lie in (0, 1)");
  }
  ExtractorParams e;
  e.slope = slope;
  Index in = input_dim;
  for (Index width : hidden_dims) {
    if (width < 1) throw ConfigError("extractor hidden width must be positive");
    e.layers.push_back({glorot_uniform(width, in, rng), Vector::Zero(width)});
    in = width;
  }
  e.layers.push_back({glorot_uniform(feature_dim, in, rng), Vector::Zero(feature_dim)});
  return e;
}

LatentMatrix sample_latents(Index n, Index latent_dim, std::uint64_t seed) {
  if (n < 2) {
    throw ConfigError("need at least 2 latent samples, got " + std::to_string(n));
  }
  if (latent_dim < 1) throw ConfigError("latent dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentMatrix z(n, latent_dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < latent_dim; ++j) z(i, j) = normal(rng);
  return z;
}

Matrix generate(const GeneratorParams& gen, const LatentMatrix& latents) {
  if (latents.cols() != gen.latent_dim()) {
    throw DimensionError("latent dimension " + std::to_string(latents.cols()) +
                         " does not match generator input " +
                         std::to_string(gen.latent_dim()));
  }
  const double slope = gen.slope;
  Matrix hidden = affine(latents, gen.w1, gen.b1).unaryExpr(
      [slope](double v) { return leaky(v, slope); });
  return affine(hidden, gen.w2, gen.b2);
}

HypothesisBatch generate_hypotheses(const LatentMatrix& latents,
                                    const GeneratorParams& real_gen,
                                    const GeneratorParams& attack_gen) {
  if (latents.rows() < 1) throw ContractError("empty latent list");
  if (real_gen.latent_dim() != attack_gen.latent_dim() ||
      real_gen.feature_dim() != attack_gen.feature_dim()) {
    throw ConfigError("generator shapes disagree: real " +
                      std::to_string(real_gen.latent_dim()) + "->" +
                      std::to_string(real_gen.feature_dim()) + ", attack " +
                      std::to_string(attack_gen.latent_dim()) + "->" +
                      std::to_string(attack_gen.feature_dim()));
  }
  return {latents, generate(real_gen, latents), generate(attack_gen, latents)};
}

Matrix extract_features(const Matrix& inputs, const ExtractorParams& extractor) {
  if (extractor.layers.empty()) throw ConfigError("extractor has no layers");
  if (inputs.cols() != extractor.input_dim()) {
    throw DataError("input dimension " + std::to_string(inputs.cols()) +
                    " does not match extractor input " +
                    std::to_string(extractor.input_dim()));
  }
  Matrix h = inputs;
  const double slope = extractor.slope;
  for (std::size_t i = 0; i < extractor.layers.size(); ++i) {
    h = affine(h, extractor.layers[i].weight, extractor.layers[i].bias);
    if (i + 1 < extractor.layers.size()) {
      h = h.unaryExpr([slope](double v) { return leaky(v, slope); });
    }
  }
  return h;
}

FeatureVector extract_feature(const Vector& x, const ExtractorParams& extractor) {
  return extract_features(Matrix(x.transpose()), extractor).row(0).transpose();
}

// ---------------------------------------------------------------------------

std::vector<Tensor> ExtractorTensors::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [w, b] : layers) {
    out.push_back(w);
    out.push_back(b);
  }
  return out;
}

namespace {

Vector row_to_vector(const Tensor& t) { return t.value().row(0).transpose(); }

}  // namespace

GeneratorTensors to_tensors(const GeneratorParams& gen, bool requires_grad) {
  return {Tensor::matrix(gen.w1, requires_grad), Tensor::row(gen.b1, requires_grad),
          Tensor::matrix(gen.w2, requires_grad), Tensor::row(gen.b2, requires_grad),
          gen.slope};
}

GeneratorParams to_params(const GeneratorTensors& gen) {
  return {gen.w1.value(), row_to_vector(gen.b1), gen.w2.value(),
          row_to_vector(gen.b2), gen.slope};
}

ExtractorTensors to_tensors(const ExtractorParams& ext, bool requires_grad) {
  ExtractorTensors out;
  out.slope = ext.slope;
  for (const auto& layer : ext.layers) {
    out.layers.emplace_back(Tensor::matrix(layer.weight, requires_grad),
                            Tensor::row(layer.bias, requires_grad));
  }
  return out;
}

ExtractorParams to_params(const ExtractorTensors& ext) {
  ExtractorParams out;
  out.slope = ext.slope;
  for (const auto& [w, b] : ext.layers) {
    out.layers.push_back({w.value(), row_to_vector(b)});
  }
  return out;
}

Tensor forward(const GeneratorTensors& gen, const Tensor& latents) {
  return ad::linear(ad::leaky_relu(ad::linear(latents, gen.w1, gen.b1), gen.slope),
                    gen.w2, gen.b2);
}

Tensor forward(const ExtractorTensors& ext, const Tensor& inputs) {
  if (ext.layers.empty()) throw ConfigError("extractor has no layers");
  Tensor h = inputs;
  for (std::size_t i = 0; i < ext.layers.size(); ++i) {
    h = ad::linear(h, ext.layers[i].first, ext.layers[i].second);
    if (i + 1 < ext.layers.size()) h = ad::leaky_relu(h, ext.slope);
  }
  return h;
}

}  // namespace fghv
