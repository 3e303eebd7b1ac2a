#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fghv/errors.hpp"
#include "fghv/harness.hpp"

using namespace fghv;
namespace fs = std::filesystem;

namespace {

SynthSplit tiny_split() {
  SynthSpec spec;
  spec.samples_per_class_per_domain = 30;
  return generate(spec);
}

RunConfig tiny_config() {
  RunConfig c;
  c.epochs = 2;
  c.latent_dim = 8;
  c.generator_hidden = 16;
  c.feature_dim = 8;
  c.extractor_hidden = {16};
  return c;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("fghv_harness_" + name);
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("key=value parsing") {
  std::istringstream in("# comment\n\nlambda1 = 0.5\nseed=3\nseed=4\n");
  const KeyValues kv = KeyValues::parse(in, "test");
  CHECK(kv.get_double("lambda1", 0) == 0.5);
  CHECK(kv.get_int("seed", 0) == 4);
  std::istringstream bad("lambda1\n");
  CHECK_THROWS_AS(KeyValues::parse(bad, "test"), ParseError);
  CHECK_THROWS_AS(KeyValues(ConfigEcho{{"epochs", "ten"}}).get_int("epochs", 1), ConfigError);
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("run config round trips and validates") {
  RunConfig c;
  c.use_ddc = false;
  c.extractor_hidden = {12, 6};
  const RunConfig back = RunConfig::from(c.to_key_values());
  CHECK(back.to_key_values().entries() == c.to_key_values().entries());
  CHECK(back.constraints_string() == "var,rcc");

  CHECK_THROWS_AS(RunConfig::from(KeyValues(ConfigEcho{{"lamda1", "1"}})), ConfigError);
  CHECK_THROWS_AS(RunConfig::from(KeyValues(ConfigEcho{{"constraints", "var,foo"}})), ConfigError);

  RunConfig no_attack;
  no_attack.attack_generator = false;
  CHECK_THROWS_AS(no_attack.validate(), ConfigError);
  no_attack.use_rcc = no_attack.use_ddc = false;
  CHECK_NOTHROW(no_attack.validate());

  RunConfig no_real;
  no_real.real_generator = false;
  CHECK_THROWS_AS(no_real.validate(), ConfigError);
  no_real.use_var = no_real.use_rcc = no_real.use_ddc = false;
  CHECK_NOTHROW(no_real.validate());

  RunConfig small_n;
  small_n.hypotheses = 1;
  CHECK_THROWS_AS(small_n.validate(), ConfigError);
}

TEST_CASE("training is deterministic and logs every epoch") {
  const auto split = tiny_split();
  std::ostringstream log_a, log_b;
  const auto a = train(tiny_config(), split.train, &log_a);
  const auto b = train(tiny_config(), split.train, &log_b);
  CHECK(log_a.str() == log_b.str());
  CHECK(a.history.size() == 2u);
  const std::string text = log_a.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);

  const auto pa = temp_file("a.ckpt"), pb = temp_file("b.ckpt");
  save_checkpoint(a.checkpoint, pa);
  save_checkpoint(b.checkpoint, pb);
  CHECK(read_all(pa) == read_all(pb));
  CHECK(config_of(load_checkpoint(pa)).to_key_values().entries() ==
        tiny_config().to_key_values().entries());
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("zero loss weights reproduce the variance-only run") {
  const auto split = tiny_split();
  RunConfig weights = tiny_config();
  weights.lambda1 = weights.lambda2 = 0.0;
  RunConfig var_only = tiny_config();
  var_only.use_rcc = var_only.use_ddc = false;
  const auto a = train(weights, split.train);
  const auto b = train(var_only, split.train);
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].var == doctest::Approx(b.history[e].var).epsilon(1e-12));
    CHECK(a.history[e].overall == doctest::Approx(b.history[e].overall).epsilon(1e-12));
  }
  CHECK(a.checkpoint.real_gen.w1.isApprox(b.checkpoint.real_gen.w1, 1e-12));
  CHECK(a.checkpoint.extractor.layers[0].weight.isApprox(b.checkpoint.extractor.layers[0].weight,
                                                          1e-12));
}

TEST_CASE("generator ablations train") {
  const auto split = tiny_split();
  for (auto row : generator_ablations(tiny_config())) {
    CAPTURE(row.name);
    CHECK_NOTHROW(train(row.config, split.train));
  }
  CHECK(constraint_ablations(tiny_config()).size() == 7u);
}

TEST_CASE("bad training data") {
  CHECK_THROWS_AS(train(tiny_config(), {}), DataError);
  std::vector<Sample> mixed{{Vector::Ones(3), 1, 0}, {Vector::Ones(4), 0, 0}};
  CHECK_THROWS_AS(train(tiny_config(), mixed), DataError);
}

TEST_CASE("scoring cardinality, threading and dimension checks") {
  const auto split = tiny_split();
  const auto trained = train(tiny_config(), split.train);
  ScoreOptions opts;
  opts.ghvm.iterations = 3;
  const auto one = score_samples(trained.checkpoint, split.test, opts);
  CHECK(one.size() == split.test.size());
  opts.threads = 3;
  const auto three = score_samples(trained.checkpoint, split.test, opts);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].scores.softmax_mean == three[i].scores.softmax_mean);
    CHECK(one[i].scores.delta_kl == three[i].scores.delta_kl);
    CHECK(one[i].label == split.test[i].label);
  }
  std::vector<Sample> wrong{{Vector::Ones(5), 1, 0}};
  CHECK_THROWS_AS(score_samples(trained.checkpoint, wrong, opts), ConfigError);
}

TEST_CASE("constant generators score zero delta kl") {
  const auto split = tiny_split();
  auto ckpt = train(tiny_config(), split.train).checkpoint;
  ckpt.real_gen.w2.setZero();
  ckpt.attack_gen.w2.setZero();
  for (const auto& s : score_samples(ckpt, split.test, ScoreOptions{})) {
    CHECK(s.scores.delta_kl == 0.0);
  }
}

TEST_CASE("score files round trip and evaluate") {
  const auto split = tiny_split();
  const auto trained = train(tiny_config(), split.train);
  ScoreOptions opts;
  opts.ghvm.iterations = 2;
  const auto scored = score_samples(trained.checkpoint, split.test, opts);
  const auto path = temp_file("scores.csv");
  write_scores(scored, ScoreMode::CrossType, path);
  const ScoreFile back = read_scores(path);
  CHECK(back.mode == ScoreMode::CrossType);
  REQUIRE(back.rows.size() == scored.size());
  CHECK(back.rows[7].scores.var == scored[7].scores.var);

  write_scores(scored, ScoreMode::CrossDataset, path);
  CHECK(read_all(path).rfind("# mode=cross-dataset delta_kl=unused", 0) == 0);

  const MetricsReport r = evaluate(scored, scored, ScoreMode::CrossType);
  CHECK(r.real_count == 30);
  CHECK(r.attack_count == 30);
  CHECK(r.auc >= 0.0);
  CHECK(r.auc <= 1.0);

  std::vector<ScoredSample> single(scored.begin(), scored.begin() + 5);
  for (auto& s : single) s.label = 1;
  CHECK_THROWS_AS(evaluate(single, single, ScoreMode::CrossDataset), MetricError);
  fs::remove(path);
}

TEST_CASE("sweep cardinality") {
  const auto split = tiny_split();
  RunConfig c = tiny_config();
  c.epochs = 1;
  const auto result = sweep_hypotheses(c, split.train, split.test, {2, 6, 10, 14}, 3);
  CHECK(result.cells.size() == 12u);
  CHECK(result.rows.size() == 4u);
  CHECK(sweep_table(result) == sweep_table(sweep_hypotheses(c, split.train, split.test,
                                                            {2, 6, 10, 14}, 3, 2)));
  CHECK_THROWS_AS(sweep_hypotheses(c, split.train, split.test, {2}, 1), ConfigError);
}
