#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "fghv/models.hpp"

namespace fghv::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

/// Central differences of f with respect to every entry of x.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix x,
                                double step = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + step;
    const double up = f(x);
    x.data()[i] = orig - step;
    const double down = f(x);
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * step);
  }
  return g;
}

/// Max relative error between two gradients, with absolute slack for tiny
/// entries.
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace fghv::testing
