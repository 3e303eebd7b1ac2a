#include <doctest.h>

#include <cmath>

#include "fghv/constraints.hpp"
#include "fghv/errors.hpp"
#include "fghv/verification.hpp"
#include "support.hpp"

using namespace fghv;

namespace {

GeneratorParams constant_generator(Index latent, Index hidden, const Vector& out) {
  GeneratorParams g;
  g.w1 = Matrix::Zero(hidden, latent);
  g.b1 = Vector::Zero(hidden);
  g.w2 = Matrix::Zero(out.size(), hidden);
  g.b2 = out;
  return g;
}

}  // namespace

TEST_CASE("fhvm softmax mean") {
  HypothesisBatch same;
  same.real = Matrix{{1.0, 0.0}, {0.0, 1.0}};
  same.attack = same.real;
  same.latents = Matrix::Zero(2, 1);
  CHECK(fhvm_score(Vector{{1.0, 2.0}}, same).softmax_mean == doctest::Approx(0.5));

  HypothesisBatch pair;
  pair.real = Matrix{{1.0, 0.0}, {1.0, 0.0}};
  pair.attack = Matrix{{-1.0, 0.0}, {-1.0, 0.0}};
  pair.latents = Matrix::Zero(2, 1);
  const double expected = std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0));
  CHECK(fhvm_score(Vector{{3.0, 0.0}}, pair).softmax_mean == doctest::Approx(expected));
  CHECK(expected == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(fhvm_score(Vector{{3.0, 0.0}}, pair).var == 0.0);
}

TEST_CASE("kl per dimension") {
  CHECK(kl_per_dim(0.0, 1.0) == 0.0);
  CHECK(std::abs(kl_per_dim(1.0, 1.0) - 0.5) < 1e-12);
  CHECK(kl_per_dim(0.0, 2.0) == doctest::Approx(-std::log(2.0) + 2.0 - 0.5));
  CHECK(kl_per_dim(0.0, 2.0) == doctest::Approx(0.806853).epsilon(1e-6));
  CHECK_THROWS_AS(kl_per_dim(0.0, 0.0), ContractError);
}

TEST_CASE("kl_mean uses an unbiased floored std estimate") {
  LatentMatrix z(3, 2);
  z << 1, 5, 2, 5, 3, 5;
  KlDiagnostics diag;
  const double expected = (kl_per_dim(2.0, 1.0) + kl_per_dim(5.0, 1e-6)) / 2.0;
  CHECK(kl_mean(z, 1e-6, &diag) == doctest::Approx(expected));
  CHECK(diag.clamped_dims == 1);
}

TEST_CASE("no iterations or dead generators give zero delta kl") {
  std::mt19937_64 rng(3);
  const auto real = init_generator(6, 8, 4, 0.1, rng);
  const auto attack = init_generator(6, 8, 4, 0.1, rng);
  const Vector f = testing::random_matrix(4, 1, rng);
  const LatentMatrix z = sample_latents(14, 6, 4);

  GhvmConfig none;
  none.iterations = 0;
  const auto t0 = optimize_latents(f, z, real, attack, none);
  CHECK(t0.final == z);
  CHECK(t0.delta_kl() == 0.0);
  CHECK(ghvm_score(f, generate_hypotheses(z, real, attack), real, attack, none) == 0.0);

  const auto dead_real = constant_generator(6, 8, Vector::LinSpaced(4, 1, 2));
  const auto dead_attack = constant_generator(6, 8, Vector::LinSpaced(4, -1, 3));
  const auto t1 = optimize_latents(f, z, dead_real, dead_attack, GhvmConfig{});
  CHECK(t1.final == z);
  CHECK(t1.delta_kl() == 0.0);
}

TEST_CASE("latent gradient matches finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto real = init_generator(3, 5, 4, 0.2, rng);
    const auto attack = init_generator(3, 5, 4, 0.2, rng);
    const Vector f = testing::random_matrix(4, 1, rng);
    const LatentMatrix z = sample_latents(6, 3, static_cast<std::uint64_t>(trial));
    const Matrix analytic =
        latent_gradient(f, z, to_tensors(real, false), to_tensors(attack, false));
    const Matrix numeric = testing::finite_difference(
        [&](const Matrix& m) { return latent_objective(f, m, real, attack); }, z);
    CHECK(testing::relative_error(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("latent search descends the objective") {
  std::mt19937_64 rng(12);
  const auto real = init_generator(5, 8, 4, 0.1, rng);
  const auto attack = init_generator(5, 8, 4, 0.1, rng);
  const Vector f = testing::random_matrix(4, 1, rng);
  const LatentMatrix z = sample_latents(14, 5, 1);
  GhvmConfig cfg;
  cfg.step = 0.05;
  const auto t = optimize_latents(f, z, real, attack, cfg);
  CHECK(latent_objective(f, t.final, real, attack) < latent_objective(f, z, real, attack));
  CHECK(t.kl_initial == doctest::Approx(kl_mean(z)));
  CHECK(t.kl_final == doctest::Approx(kl_mean(t.final)));
}

TEST_CASE("epistemic uncertainty is the population variance") {
  const Vector f{{1.0, 0.0}};
  CHECK(epistemic_uncertainty(f, Matrix{{1.0, 1.0}, {2.0, 2.0}}) == doctest::Approx(0.0));
  CHECK(epistemic_uncertainty(f, Matrix{{0.0, 1.0}, {1.0, 0.0}}) == doctest::Approx(0.25));
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 13;
    const Vector v = testing::random_matrix(6, 1, rng);
    const Matrix g = testing::random_matrix(n, 6, rng);
    const double expected = var_constraint(v, g) * static_cast<double>(n - 1) / static_cast<double>(n);
    CHECK(std::abs(epistemic_uncertainty(v, g) - expected) < 1e-12);
  }
}

TEST_CASE("classification modes") {
  const Thresholds tau{0.5, 0.1, 1.0};
  CHECK(classify({0.9, 0.0, 0.0}, tau, ScoreMode::CrossType) == 1);
  CHECK(classify({0.9, 0.5, 0.0}, tau, ScoreMode::CrossType) == 0);
  CHECK(classify({0.9, 0.5, 0.0}, tau, ScoreMode::CrossDataset) == 1);
  CHECK(classify({0.9, 0.0, 2.0}, tau, ScoreMode::CrossType) == 0);
  CHECK(classify({0.4, 0.0, 0.0}, tau, ScoreMode::CrossDataset) == 0);
}

TEST_CASE("score_feature is reproducible per seed") {
  std::mt19937_64 rng(2);
  const auto real = init_generator(6, 8, 4, 0.1, rng);
  const auto attack = init_generator(6, 8, 4, 0.1, rng);
  const Vector f = testing::random_matrix(4, 1, rng);
  const auto a = score_feature(f, real, attack, 14, GhvmConfig{}, 99);
  const auto b = score_feature(f, real, attack, 14, GhvmConfig{}, 99);
  CHECK(a.softmax_mean == b.softmax_mean);
  CHECK(a.var == b.var);
  CHECK(a.delta_kl == b.delta_kl);
  CHECK(score_feature(f, real, attack, 14, GhvmConfig{}, 99, false).delta_kl == 0.0);
}
