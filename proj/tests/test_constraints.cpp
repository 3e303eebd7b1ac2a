#include <doctest.h>

#include <cmath>

#include "fghv/constraints.hpp"
#include "support.hpp"

using namespace fghv;

TEST_CASE("cosine examples") {
  const Vector v{{0.3, -2.0, 5.0}};
  CHECK(cosine(v, v) == doctest::Approx(1.0));
  CHECK(cosine(Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}) == 0.0);
  CHECK(std::abs(cosine(Vector{{1.0, 1.0}}, Vector{{1.0, 0.0}}) - 0.7071067811865476) < 1e-9);
  CHECK_THROWS_AS(cosine(Vector{{0.0, 0.0}}, Vector{{1.0, 0.0}}), DegenerateFeatureError);
  CHECK_THROWS_AS(cosine(Vector{{1.0, 0.0}}, Vector{{1.0, 0.0, 0.0}}), DimensionError);
}

TEST_CASE("variance examples") {
  const Vector f{{1.0, 0.0}};
  Matrix same(3, 2);
  same << 1, 2, 1, 2, 1, 2;
  CHECK(var_constraint(f, same) == 0.0);
  const Matrix two{{0.0, 1.0}, {1.0, 0.0}};
  CHECK(var_constraint(f, two) == doctest::Approx(0.5));
  CHECK_THROWS_AS(var_constraint(f, Matrix{{1.0, 0.0}}), ConfigError);
}

TEST_CASE("rcc examples") {
  const Vector f{{1.0, 0.0}};
  Matrix g(2, 2), h(2, 2);
  g << 1, 1, 0, 1;
  h << 1, -1, 0, -1;
  CHECK(std::abs(rcc(f, g, h, 1) - std::log(2.0)) < 1e-9);
  CHECK(std::abs(rcc(f, g, h, 0) - std::log(2.0)) < 1e-9);
  const double expected = std::log(std::exp(1.0) + std::exp(-1.0)) - 1.0;
  CHECK(rcc(f, Matrix{{2.0, 0.0}}, Matrix{{-1.0, 0.0}}, 1) == doctest::Approx(expected));
  CHECK(expected == doctest::Approx(0.126928).epsilon(1e-6));
  CHECK_THROWS_AS(rcc(f, g, Matrix{{1.0, 0.0}}, 1), ContractError);
  CHECK_THROWS_AS(rcc(f, g, h, 2), ContractError);
}

TEST_CASE("ddc examples") {
  std::mt19937_64 rng(2);
  const Matrix g = testing::random_matrix(5, 4, rng);
  CHECK(std::abs(ddc(g, g)) < 1e-15);
  const Matrix gs = Matrix{{1.0, 0.0}}.replicate(3, 1);
  const Matrix hs = Matrix{{0.0, 2.0}}.replicate(3, 1);
  CHECK(ddc(gs, hs) == doctest::Approx(-1.0));
}

TEST_CASE("overall loss sign and weights") {
  const auto real = overall_loss(0.3, 0.7, -0.5, 1.0, 1.0, 1);
  const auto attack = overall_loss(0.3, 0.7, -0.5, 1.0, 1.0, 0);
  CHECK(real.overall == doctest::Approx(0.3 + 0.7 - 0.5));
  CHECK(attack.overall == doctest::Approx(-0.3 + 0.7 - 0.5));
  CHECK(overall_loss(0.3, 0.7, -0.5, 0.0, 0.0, 1).overall == 0.3);
}

TEST_CASE("graph terms agree with closed forms") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const Index b = 1 + trial % 4, n = 2 + trial % 5, d = 3 + trial % 3;
    const Matrix f = testing::random_matrix(b, d, rng);
    const Matrix g = testing::random_matrix(n, d, rng);
    const Matrix h = testing::random_matrix(n, d, rng);
    std::vector<int> labels;
    for (Index i = 0; i < b; ++i) labels.push_back(static_cast<int>((i + trial) % 2));
    const auto loss = graph::overall_loss(Tensor::matrix(f), Tensor::matrix(g),
                                          Tensor::matrix(h), labels, 0.7, 1.3);
    double expected = 0.0;
    for (Index i = 0; i < b; ++i) {
      const Vector fi = f.row(i).transpose();
      CHECK(loss.var.value()(0, i) == doctest::Approx(var_constraint(fi, g)).epsilon(1e-10));
      CHECK(loss.rcc.value()(0, i) == doctest::Approx(rcc(fi, g, h, labels[i])).epsilon(1e-10));
      expected += overall_loss(fi, g, h, 0.7, 1.3, labels[i]).overall / static_cast<double>(b);
    }
    CHECK(loss.ddc.item() == doctest::Approx(ddc(g, h)).epsilon(1e-10));
    CHECK(loss.overall.item() == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("properties: invariances and bounds") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> positive(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 7, d = 2 + trial % 5;
    const Vector f = testing::random_matrix(d, 1, rng);
    const Matrix g = testing::random_matrix(n, d, rng);
    const Matrix h = testing::random_matrix(n, d, rng);
    const double c = positive(rng);
    CHECK(var_constraint(f, g) >= 0.0);
    CHECK(var_constraint(Vector(c * f), g) == doctest::Approx(var_constraint(f, g)));
    CHECK(rcc(Vector(c * f), g, h, 1) == doctest::Approx(rcc(f, g, h, 1)));
    CHECK(rcc(f, g, h, 1) > 0.0);
    // Swapping the hypothesis sets and the label leaves RCC unchanged.
    CHECK(rcc(f, h, g, 0) == doctest::Approx(rcc(f, g, h, 1)));
    // Permuting pairs leaves RCC and DDC unchanged.
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + n, rng);
    CHECK(rcc(f, Matrix(perm * g), Matrix(perm * h), 0) == doctest::Approx(rcc(f, g, h, 0)));
    CHECK(ddc(Matrix(perm * g), h) == doctest::Approx(ddc(g, h)));
    CHECK(ddc(g, h) >= -2.0);
    CHECK(ddc(g, h) <= 2.0);
  }
}

TEST_CASE("overall loss gradients match finite differences") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix f0 = testing::random_matrix(3, 4, rng);
    const Matrix g0 = testing::random_matrix(5, 4, rng);
    const Matrix h0 = testing::random_matrix(5, 4, rng);
    const std::vector<int> labels{1, 0, trial % 2};
    auto loss = [&](const Matrix& f, const Matrix& g, const Matrix& h) {
      return graph::overall_loss(Tensor::matrix(f), Tensor::matrix(g), Tensor::matrix(h),
                                 labels, 1.0, 1.0)
          .overall.item();
    };
    Tensor f = Tensor::matrix(f0, true), g = Tensor::matrix(g0, true), h = Tensor::matrix(h0, true);
    ad::backward(graph::overall_loss(f, g, h, labels, 1.0, 1.0).overall);
    CHECK(testing::relative_error(
              f.grad(), testing::finite_difference([&](const Matrix& m) { return loss(m, g0, h0); }, f0)) < 1e-6);
    CHECK(testing::relative_error(
              g.grad(), testing::finite_difference([&](const Matrix& m) { return loss(f0, m, h0); }, g0)) < 1e-6);
    CHECK(testing::relative_error(
              h.grad(), testing::finite_difference([&](const Matrix& m) { return loss(f0, g0, m); }, h0)) < 1e-6);
  }
}

TEST_CASE("masked objective drops terms") {
  const Matrix f{{1.0, 0.5}};
  const Matrix g{{1.0, 0.0}, {0.0, 1.0}};
  const Matrix h{{-1.0, 0.0}, {0.5, -1.0}};
  const auto only_var = graph::overall_loss(Tensor::matrix(f), Tensor::matrix(g), Tensor::matrix(h),
                                            {1}, 1.0, 1.0, graph::TermMask{true, false, false});
  CHECK(only_var.overall.item() == doctest::Approx(var_constraint(Vector(f.row(0).transpose()), g)));
  CHECK_THROWS_AS(graph::overall_loss(Tensor::matrix(f), Tensor::matrix(g), Tensor::matrix(h), {1},
                                      1.0, 1.0, graph::TermMask{false, false, false}),
                  ConfigError);
}
