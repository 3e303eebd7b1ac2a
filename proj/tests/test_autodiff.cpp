#include <doctest.h>

#include "fghv/autodiff.hpp"
#include "fghv/errors.hpp"
#include "fghv/optimizer.hpp"
#include "support.hpp"

using namespace fghv;
using T = ad::Tensor<double>;

TEST_CASE("linear forward") {
  const T x({1, 2}, {1, 2});
  CHECK(ad::linear(x, T({2, 2}, {1, 0, 0, 1}), T({2}, {0, 0})).value() == Matrix{{1, 2}});
  CHECK(ad::linear(T({1, 2}, {1, 1}), T({1, 2}, {0, 0}), T({1}, {5})).item() == 5);
  CHECK(ad::linear(x, T({1, 2}, {3, 4}), T({1}, {1})).item() == 12);
}

TEST_CASE("linear rejects mismatched shapes and names them") {
  const T x({1, 3}, {1, 2, 3});
  try {
    ad::linear(x, T({2, 2}, {1, 0, 0, 1}), T({2}, {0, 0}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,3]") != std::string::npos);
    CHECK(msg.find("[2,2]") != std::string::npos);
  }
}

TEST_CASE("leaky_relu values") {
  CHECK(ad::leaky_relu(T({2}, {2, -2}), 0.1).value().isApprox(Matrix{{2, -0.2}}));
  CHECK(ad::leaky_relu(T({1}, {0}), 0.1).item() == 0);
  CHECK(ad::leaky_relu(T({3}, {-1, 1, -3}), 0.2).value().isApprox(Matrix{{-0.2, 1, -0.6}}));
}

TEST_CASE("backward on simple losses") {
  T x({3}, {1, 2, 3}, true);
  ad::backward(ad::sum(x));
  CHECK(x.grad() == Matrix{{1, 1, 1}});

  T y({1}, {3}, true);
  ad::backward(ad::sum(y * y));
  CHECK(y.grad()(0, 0) == doctest::Approx(6));
}

TEST_CASE("cosine gradient matches finite differences") {
  T f({2}, {1, 0}, true);
  const T g({2}, {0.6, 0.8});
  ad::backward(ad::cosine(f, g, 1e-12));
  const Matrix numeric = testing::finite_difference(
      [&](const Matrix& v) { return ad::cosine(T({2}, v, false), g, 1e-12).item(); },
      Matrix{{1, 0}});
  CHECK(testing::relative_error(f.grad(), numeric) < 1e-6);
  CHECK(f.grad()(0, 1) == doctest::Approx(0.8));
}

TEST_CASE("backward of a non-scalar is a contract error") {
  T x({2}, {1, 2}, true);
  CHECK_THROWS_AS(ad::backward(x * x), ContractError);
}

TEST_CASE("shared subexpressions accumulate and each node is visited once") {
  T x = T::scalar(1.5, true);
  T node = x;
  for (int i = 0; i < 200; ++i) node = node * T::scalar(1.0) + node * T::scalar(0.0);
  const std::size_t visited = ad::backward(node);
  CHECK(x.grad()(0, 0) == doctest::Approx(1.0));
  // Constants stay out of the graph: two products and one sum per layer, plus x.
  CHECK(visited == 200 * 3 + 1);
}

TEST_CASE("matmul, normalize_rows and row_variance match finite differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a0 = testing::random_matrix(3, 4, rng);
    const Matrix b0 = testing::random_matrix(4, 5, rng);
    const Matrix w = testing::random_matrix(3, 5, rng);
    auto loss = [&](const T& a, const T& b) {
      const T prod = ad::matmul(a, b);
      const T v = ad::row_variance(ad::normalize_rows(prod, 1e-12));
      return ad::add(ad::sum(ad::mul(prod, T::matrix(w))), ad::scale(ad::sum(v), 3.0));
    };
    T a = T::matrix(a0, true);
    T b = T::matrix(b0, true);
    ad::backward(loss(a, b));
    const Matrix na = testing::finite_difference(
        [&](const Matrix& m) { return loss(T::matrix(m), T::matrix(b0)).item(); }, a0);
    const Matrix nb = testing::finite_difference(
        [&](const Matrix& m) { return loss(T::matrix(a0), T::matrix(m)).item(); }, b0);
    CHECK(testing::relative_error(a.grad(), na) < 1e-6);
    CHECK(testing::relative_error(b.grad(), nb) < 1e-6);
  }
}

TEST_CASE("softplus is stable for large arguments") {
  const T x({3}, {-800, 0, 800});
  const Matrix v = ad::softplus(x).value();
  CHECK(v(0, 0) == doctest::Approx(0.0));
  CHECK(v(0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(v(0, 2) == doctest::Approx(800.0));
}

TEST_CASE("normalize_rows rejects zero rows") {
  CHECK_THROWS_AS(ad::normalize_rows(T({1, 2}, {0, 0}), 1e-12), DegenerateFeatureError);
}

TEST_CASE("sgd momentum steps") {
  SUBCASE("vanilla") {
    T p = T::scalar(1.0, true);
    ad::SgdMomentum<double> opt({p}, 0.1, 0.0, 0.0);
    ad::backward(p);
    opt.step();
    CHECK(p.item() == doctest::Approx(0.9));
  }
  SUBCASE("momentum only") {
    T p = T::scalar(1.0, true);
    ad::SgdMomentum<double> opt({p}, 0.1, 0.9, 0.0);
    opt.velocity(0)(0, 0) = 1.0;
    ad::backward(ad::scale(p, 0.0));
    opt.step();
    CHECK(p.item() == doctest::Approx(0.91));
  }
  SUBCASE("decay only") {
    T p = T::scalar(1.0, true);
    ad::SgdMomentum<double> opt({p}, 0.1, 0.0, 0.1);
    ad::backward(ad::scale(p, 0.0));
    opt.step();
    CHECK(p.item() == doctest::Approx(0.99));
  }
  SUBCASE("missing gradient") {
    T p = T::scalar(1.0, true);
    ad::SgdMomentum<double> opt({p}, 0.1, 0.0, 0.0);
    CHECK_THROWS_AS(opt.step(), ContractError);
  }
  SUBCASE("step clears gradients") {
    T p = T::scalar(1.0, true);
    ad::SgdMomentum<double> opt({p}, 0.1, 0.0, 0.0);
    ad::backward(p);
    opt.step();
    CHECK_FALSE(p.has_grad());
  }
}

TEST_CASE("float scalar type compiles and differentiates") {
  ad::Tensor<float> x({2}, {1.0f, 2.0f}, true);
  ad::backward(ad::sum(x * x));
  CHECK(x.grad()(0, 1) == doctest::Approx(4.0f));
}
