#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "fghv/constraints.hpp"
#include "fghv/errors.hpp"
#include "fghv/harness.hpp"
#include "fghv/optimizer.hpp"

namespace fghv {

namespace {

// Unit-norm random output bias, used as the constant hypothesis that stands
// in for a disabled generator.
void make_prototype(GeneratorParams& g, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  g.w2.setZero();
  Vector b(g.feature_dim());
  for (Index i = 0; i < b.size(); ++i) b(i) = normal(rng);
  g.b2 = b.normalized();
}

struct Running {
  double sum = 0.0;
  long count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

}  // namespace

std::string log_header() {
  return "epoch,lr,var,rcc,ddc,overall,var_real,var_attack,rcc_real,rcc_attack";
}

std::string log_row(const EpochStats& s) {
  return std::to_string(s.epoch) + ',' + format_double(s.learning_rate) + ',' +
         format_double(s.var) + ',' + format_double(s.rcc) + ',' + format_double(s.ddc) +
         ',' + format_double(s.overall) + ',' + format_double(s.var_real) + ',' +
         format_double(s.var_attack) + ',' + format_double(s.rcc_real) + ',' +
         format_double(s.rcc_attack);
}

RunConfig config_of(const Checkpoint& ckpt) {
  return RunConfig::from(KeyValues(ckpt.config));
}

TrainResult train(const RunConfig& config, const std::vector<Sample>& samples,
                  std::ostream* log) {
  config.validate();
  if (samples.empty()) throw DataError("training set is empty");
  const Index d_in = samples.front().x.size();
  for (const auto& s : samples) {
    if (s.x.size() != d_in) throw DataError("training samples have inconsistent dimensions");
    if (s.label != 0 && s.label != 1) throw DataError("training label must be 0 or 1");
  }

  std::mt19937_64 init_rng(derive_seed(config.seed, 0x1417));
  std::vector<Index> hidden(config.extractor_hidden.begin(), config.extractor_hidden.end());
  ExtractorParams extractor =
      init_extractor(d_in, hidden, config.feature_dim, config.leaky_slope, init_rng);
  GeneratorParams real_gen = init_generator(config.latent_dim, config.generator_hidden,
                                            config.feature_dim, config.leaky_slope, init_rng);
  GeneratorParams attack_gen = init_generator(config.latent_dim, config.generator_hidden,
                                              config.feature_dim, config.leaky_slope, init_rng);
  if (!config.real_generator) make_prototype(real_gen, init_rng);
  if (!config.attack_generator) make_prototype(attack_gen, init_rng);

  const bool baseline = config.baseline_objective();
  const graph::TermMask mask =
      baseline ? graph::TermMask{false, true, false}
               : graph::TermMask{config.use_var, config.use_rcc, config.use_ddc};
  const double lambda1 = baseline ? 1.0 : config.lambda1;
  const double lambda2 = config.lambda2;
  const bool uses_feature = mask.var || mask.rcc;
  const bool uses_attack = mask.rcc || mask.ddc;

  ExtractorTensors ext_t = to_tensors(extractor, uses_feature);
  GeneratorTensors real_t = to_tensors(real_gen, false);
  GeneratorTensors attack_t = to_tensors(attack_gen, false);

  std::vector<Tensor> params;
  if (uses_feature) params = ext_t.parameters();
  auto enroll = [&params](GeneratorTensors& t, bool enabled) {
    if (enabled) {
      t = {t.w1.detach(true), t.b1.detach(true), t.w2.detach(true), t.b2.detach(true), t.slope};
      for (const auto& p : t.parameters()) params.push_back(p);
    } else {
      t.b2 = t.b2.detach(true);
      params.push_back(t.b2);
    }
  };
  enroll(real_t, config.real_generator);
  if (uses_attack) enroll(attack_t, config.attack_generator);

  ad::SgdMomentum<double> opt(params, config.learning_rate, config.momentum,
                              config.weight_decay);

  const Index batch_size = config.batch_size;
  std::vector<std::size_t> order(samples.size());
  TrainResult result;
  if (log) *log << log_header() << '\n';

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    opt.set_learning_rate(epoch > config.lr_drop_epoch ? config.learning_rate_late
                                                       : config.learning_rate);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 0x5eed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    Running var_all, rcc_all, ddc_all, overall_all, var_real, var_attack, rcc_real, rcc_attack;
    std::uint64_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      const Index b = static_cast<Index>(end - start);
      Matrix x(b, d_in);
      std::vector<int> labels(static_cast<std::size_t>(b));
      for (Index i = 0; i < b; ++i) {
        const Sample& s = samples[order[start + static_cast<std::size_t>(i)]];
        x.row(i) = s.x.transpose();
        labels[static_cast<std::size_t>(i)] = s.label;
      }

      const Tensor z = Tensor::matrix(sample_latents(
          config.hypotheses, config.latent_dim,
          derive_seed(config.seed, static_cast<std::uint64_t>(epoch), ++batch_index)));
      const Tensor features = forward(ext_t, Tensor::matrix(x));
      const Tensor real = forward(real_t, z);
      const Tensor attack = forward(attack_t, z);

      const auto loss =
          graph::overall_loss(features, real, attack, labels, lambda1, lambda2, mask);
      ad::backward(loss.overall);
      opt.step();

      overall_all.add(loss.overall.item());
      if (mask.ddc) ddc_all.add(loss.ddc.item());
      for (Index i = 0; i < b; ++i) {
        const bool is_real = labels[static_cast<std::size_t>(i)] == 1;
        if (mask.var) {
          const double v = loss.var.value()(0, i);
          var_all.add(v);
          (is_real ? var_real : var_attack).add(v);
        }
        if (mask.rcc) {
          const double r = loss.rcc.value()(0, i);
          rcc_all.add(r);
          (is_real ? rcc_real : rcc_attack).add(r);
        }
      }
    }

    const EpochStats stats{epoch,           opt.learning_rate(), var_all.mean(),
                           rcc_all.mean(),  ddc_all.mean(),      overall_all.mean(),
                           var_real.mean(), var_attack.mean(),   rcc_real.mean(),
                           rcc_attack.mean()};
    if (!std::isfinite(stats.overall)) {
      throw OptimizationError("training loss became non-finite at epoch " +
                              std::to_string(epoch));
    }
    result.history.push_back(stats);
    if (log) *log << log_row(stats) << '\n';
  }

  result.checkpoint.extractor = uses_feature ? to_params(ext_t) : extractor;
  result.checkpoint.real_gen = to_params(real_t);
  result.checkpoint.attack_gen = to_params(attack_t);
  result.checkpoint.config = config.to_key_values().entries();
  return result;
}

}  // namespace fghv
