#pragma once

// Loss quantities comparing an input feature f with real-face hypotheses g_i
// and known-attack hypotheses h_i.
//
// Two routes are provided. The closed-form functions take any Eigen vector or
// matrix expression (hypotheses are rows) and return plain scalars; they are
// what scoring uses. The functions in `graph` build differentiable tensors for
// training and latent search. Both routes are tested against each other.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fghv/autodiff.hpp"
#include "fghv/errors.hpp"

namespace fghv {

/// Vectors with Euclidean norm at or below this are rejected by cosine.
inline constexpr double kNormEpsilon = 1e-12;

template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename DerivedF, typename DerivedG>
typename DerivedF::Scalar cosine(const Eigen::MatrixBase<DerivedF>& f,
                                 const Eigen::MatrixBase<DerivedG>& g) {
  using Scalar = typename DerivedF::Scalar;
  if (f.size() != g.size()) {
    throw DimensionError("cosine: vector lengths " + std::to_string(f.size()) +
                         " and " + std::to_string(g.size()) + " differ");
  }
  const Scalar nf = f.norm();
  const Scalar ng = g.norm();
  if (!(nf > Scalar(kNormEpsilon)) || !(ng > Scalar(kNormEpsilon))) {
    throw DegenerateFeatureError("cosine of a near-zero-norm vector");
  }
  Scalar dot(0);
  for (Eigen::Index i = 0; i < f.size(); ++i) dot += f(i) * g(i);
  return std::clamp(dot / (nf * ng), Scalar(-1), Scalar(1));
}

/// cos(f, row_i(hypotheses)) for every row.
template <typename DerivedF, typename DerivedH>
ColVector<typename DerivedF::Scalar> cosines(
    const Eigen::MatrixBase<DerivedF>& f,
    const Eigen::MatrixBase<DerivedH>& hypotheses) {
  ColVector<typename DerivedF::Scalar> out(hypotheses.rows());
  for (Eigen::Index i = 0; i < hypotheses.rows(); ++i) {
    out(i) = cosine(f, hypotheses.row(i));
  }
  return out;
}

/// Sample variance with divisor n - 1.
template <typename Derived>
typename Derived::Scalar sample_variance(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const auto n = v.size();
  if (n < 2) {
    throw ConfigError("variance needs at least 2 values, got " + std::to_string(n));
  }
  // Shifted by the first value so that equal values give exactly 0.
  const Scalar shift = v(0);
  Scalar mean(0);
  for (Eigen::Index i = 0; i < n; ++i) mean += v(i) - shift;
  mean /= static_cast<Scalar>(n);
  Scalar acc(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar c = v(i) - shift - mean;
    acc += c * c;
  }
  return acc / static_cast<Scalar>(n - 1);
}

/// Variance of the cosines between f and each real-face hypothesis.
template <typename DerivedF, typename DerivedG>
typename DerivedF::Scalar var_constraint(const Eigen::MatrixBase<DerivedF>& f,
                                         const Eigen::MatrixBase<DerivedG>& real) {
  if (real.rows() < 2) {
    throw ConfigError("variance constraint needs N >= 2 hypotheses, got " +
                      std::to_string(real.rows()));
  }
  return sample_variance(cosines(f, real));
}

/// Mean over i of ln(e^{cos(f,g_i)} + e^{cos(f,h_i)}) - y cos(f,g_i)
/// - (1 - y) cos(f,h_i), with the log-sum-exp evaluated around its max.
template <typename DerivedF, typename DerivedG, typename DerivedH>
typename DerivedF::Scalar rcc(const Eigen::MatrixBase<DerivedF>& f,
                              const Eigen::MatrixBase<DerivedG>& real,
                              const Eigen::MatrixBase<DerivedH>& attack,
                              int y_prime) {
  using Scalar = typename DerivedF::Scalar;
  using std::exp;
  using std::log;
  if (real.rows() != attack.rows() || real.rows() < 1) {
    throw ContractError("rcc: hypothesis lists must be nonempty and equal length (" +
                        std::to_string(real.rows()) + " vs " +
                        std::to_string(attack.rows()) + ")");
  }
  if (y_prime != 0 && y_prime != 1) throw ContractError("rcc: label must be 0 or 1");
  const Scalar y = static_cast<Scalar>(y_prime);
  Scalar total(0);
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    const Scalar cg = cosine(f, real.row(i));
    const Scalar ch = cosine(f, attack.row(i));
    const Scalar m = std::max(cg, ch);
    const Scalar lse = m + log(exp(cg - m) + exp(ch - m));
    total += lse - y * cg - (Scalar(1) - y) * ch;
  }
  return total / static_cast<Scalar>(real.rows());
}

/// (1/N^2) sum_i sum_j [cos(g_i, h_j) - cos(g_i, g_j)].
template <typename DerivedG, typename DerivedH>
typename DerivedG::Scalar ddc(const Eigen::MatrixBase<DerivedG>& real,
                              const Eigen::MatrixBase<DerivedH>& attack) {
  using Scalar = typename DerivedG::Scalar;
  if (real.rows() < 1 || attack.rows() != real.rows()) {
    throw ContractError("ddc: hypothesis lists must be nonempty and equal length (" +
                        std::to_string(real.rows()) + " vs " +
                        std::to_string(attack.rows()) + ")");
  }
  const auto n = real.rows();
  Scalar total(0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      total += cosine(real.row(i), attack.row(j)) - cosine(real.row(i), real.row(j));
  return total / static_cast<Scalar>(n * n);
}

template <typename Scalar>
struct LossBreakdown {
  Scalar var{};
  Scalar rcc{};
  Scalar ddc{};
  Scalar overall{};
  int y_prime = 1;
  Scalar lambda1{1};
  Scalar lambda2{1};
};

/// (2y' - 1) VAR + lambda1 RCC + lambda2 DDC from precomputed terms.
template <typename Scalar>
LossBreakdown<Scalar> overall_loss(Scalar var, Scalar rcc_value, Scalar ddc_value,
                                   Scalar lambda1, Scalar lambda2, int y_prime) {
  if (y_prime != 0 && y_prime != 1) throw ContractError("label must be 0 or 1");
  using std::isfinite;
  if (!isfinite(lambda1) || !isfinite(lambda2)) {
    throw ConfigError("loss weights must be finite");
  }
  const Scalar sign = static_cast<Scalar>(2 * y_prime - 1);
  return {var,       rcc_value, ddc_value, sign * var + lambda1 * rcc_value + lambda2 * ddc_value,
          y_prime,   lambda1,   lambda2};
}

template <typename DerivedF, typename DerivedG, typename DerivedH>
LossBreakdown<typename DerivedF::Scalar> overall_loss(
    const Eigen::MatrixBase<DerivedF>& f, const Eigen::MatrixBase<DerivedG>& real,
    const Eigen::MatrixBase<DerivedH>& attack, typename DerivedF::Scalar lambda1,
    typename DerivedF::Scalar lambda2, int y_prime) {
  return overall_loss(var_constraint(f, real), rcc(f, real, attack, y_prime),
                      ddc(real, attack), lambda1, lambda2, y_prime);
}

namespace graph {

using ad::Tensor;

/// B x N cosines between the rows of features and the rows of hypotheses.
template <typename Scalar>
Tensor<Scalar> cosines(const Tensor<Scalar>& features,
                       const Tensor<Scalar>& hypotheses) {
  return ad::cosine_matrix(features, hypotheses, Scalar(kNormEpsilon));
}

/// One variance per feature row, shape {B}.
template <typename Scalar>
Tensor<Scalar> var_constraint(const Tensor<Scalar>& features,
                              const Tensor<Scalar>& real) {
  if (real.rows() < 2) {
    throw ConfigError("variance constraint needs N >= 2 hypotheses");
  }
  return ad::row_variance(cosines(features, real));
}

/// Per-element RCC terms, shape B x N. Uses the identity
///   ln(e^a + e^b) - a = softplus(b - a)
/// so the y'=1 term is softplus(cos_h - cos_g) and the y'=0 term is
/// softplus(cos_g - cos_h).
template <typename Scalar>
Tensor<Scalar> rcc_terms(const Tensor<Scalar>& features, const Tensor<Scalar>& real,
                         const Tensor<Scalar>& attack,
                         const std::vector<int>& labels) {
  if (real.rows() != attack.rows()) {
    throw ContractError("rcc: hypothesis lists differ in length");
  }
  const auto batch = features.rank() == 2 ? features.rows() : Eigen::Index{1};
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw ContractError("rcc: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(batch) + " features");
  }
  ad::Matrix<Scalar> sign(batch, real.rows());
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (labels[b] != 0 && labels[b] != 1) throw ContractError("rcc: label must be 0 or 1");
    sign.row(b).setConstant(labels[b] == 1 ? Scalar(1) : Scalar(-1));
  }
  const Tensor<Scalar> diff = ad::sub(cosines(features, attack), cosines(features, real));
  return ad::softplus(
      ad::mul(diff, Tensor<Scalar>(diff.shape(), std::move(sign), false)));
}

/// Per-feature RCC, shape {B}.
template <typename Scalar>
Tensor<Scalar> rcc(const Tensor<Scalar>& features, const Tensor<Scalar>& real,
                   const Tensor<Scalar>& attack, const std::vector<int>& labels) {
  const Tensor<Scalar> terms = rcc_terms(features, real, attack, labels);
  const auto n = terms.cols();
  const Tensor<Scalar> avg = Tensor<Scalar>::matrix(
      ad::Matrix<Scalar>::Constant(n, 1, Scalar(1) / static_cast<Scalar>(n)));
  return ad::reshape(ad::matmul(terms, avg), ad::Shape{terms.rows()});
}

template <typename Scalar>
Tensor<Scalar> ddc(const Tensor<Scalar>& real, const Tensor<Scalar>& attack) {
  if (real.rows() < 1 || real.rows() != attack.rows()) {
    throw ContractError("ddc: hypothesis lists must be nonempty and equal length");
  }
  return ad::sub(ad::mean(cosines(real, attack)), ad::mean(cosines(real, real)));
}

/// Which terms enter the training objective.
struct TermMask {
  bool var = true;
  bool rcc = true;
  bool ddc = true;
};

template <typename Scalar>
struct BatchLoss {
  Tensor<Scalar> var;      // {B}, or empty scalar when masked out
  Tensor<Scalar> rcc;      // {B}, or empty scalar when masked out
  Tensor<Scalar> ddc;      // scalar
  Tensor<Scalar> overall;  // scalar: batch mean of the per-sample objective
};

/// Batch mean of (2y'_b - 1) VAR_b + lambda1 RCC_b + lambda2 DDC. All samples
/// in the batch share the same hypotheses, so DDC is a single term.
template <typename Scalar>
BatchLoss<Scalar> overall_loss(const Tensor<Scalar>& features,
                               const Tensor<Scalar>& real,
                               const Tensor<Scalar>& attack,
                               const std::vector<int>& labels, Scalar lambda1,
                               Scalar lambda2, TermMask mask = {}) {
  using std::isfinite;
  if (!isfinite(lambda1) || !isfinite(lambda2)) {
    throw ConfigError("loss weights must be finite");
  }
  if (!mask.var && !mask.rcc && !mask.ddc) {
    throw ConfigError("at least one loss term must be enabled");
  }
  const auto batch = static_cast<Eigen::Index>(labels.size());
  BatchLoss<Scalar> out;
  std::vector<Tensor<Scalar>> parts;
  if (mask.var) {
    out.var = var_constraint(features, real);
    ad::Matrix<Scalar> w(1, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      w(0, b) = static_cast<Scalar>(2 * labels[b] - 1) / static_cast<Scalar>(batch);
    }
    parts.push_back(ad::sum(
        ad::mul(out.var, Tensor<Scalar>(out.var.shape(), std::move(w), false))));
  }
  if (mask.rcc) {
    out.rcc = rcc(features, real, attack, labels);
    parts.push_back(ad::scale(ad::mean(out.rcc), lambda1));
  }
  if (mask.ddc) {
    out.ddc = ddc(real, attack);
    parts.push_back(ad::scale(out.ddc, lambda2));
  }
  out.overall = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out.overall = ad::add(out.overall, parts[i]);
  return out;
}

}  // namespace graph

}  // namespace fghv
