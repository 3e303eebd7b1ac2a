#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fghv/autodiff.hpp"
#include "fghv/errors.hpp"

namespace fghv::ad {

/// SGD with heavy-ball momentum and L2 weight decay folded into the velocity:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
template <typename Scalar>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor<Scalar>> params, Scalar learning_rate,
              Scalar momentum, Scalar weight_decay)
      : params_(std::move(params)),
        lr_(learning_rate),
        momentum_(momentum),
        weight_decay_(weight_decay) {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0 && momentum < 1))
      throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0))
      throw ConfigError("weight decay must be nonnegative");
    velocity_.reserve(params_.size());
    for (const auto& p : params_) {
      if (!p.is_leaf()) throw ContractError("optimizer parameters must be leaves");
      velocity_.push_back(Matrix<Scalar>::Zero(p.rows(), p.cols()));
    }
  }

  /// Applies one update and clears every parameter gradient.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) {
        throw ContractError("parameter " + std::to_string(i) + " of shape " +
                            to_string(params_[i].shape()) + " has no gradient");
      }
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].mutable_value();
      velocity_[i] = momentum_ * velocity_[i] + params_[i].grad() +
                     weight_decay_ * p;
      p -= lr_ * velocity_[i];
      params_[i].zero_grad();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  Scalar learning_rate() const { return lr_; }
  void set_learning_rate(Scalar lr) {
    if (!(lr > 0)) throw ConfigError("learning rate must be positive");
    lr_ = lr;
  }
  Scalar momentum() const { return momentum_; }
  Scalar weight_decay() const { return weight_decay_; }

  std::size_t size() const { return params_.size(); }
  const Matrix<Scalar>& velocity(std::size_t i) const { return velocity_.at(i); }
  Matrix<Scalar>& velocity(std::size_t i) { return velocity_.at(i); }

 private:
  std::vector<Tensor<Scalar>> params_;
  std::vector<Matrix<Scalar>> velocity_;
  Scalar lr_;
  Scalar momentum_;
  Scalar weight_decay_;
};

}  // namespace fghv::ad
