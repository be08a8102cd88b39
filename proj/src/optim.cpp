// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/optim.hpp"

#include <cmath>

#include "m2gl/errors.hpp"

namespace m2gl {

std::string to_string(OptimizerMode mode) {
  return mode == OptimizerMode::kAdam ? "adam" : "sgd";
}

OptimizerMode optimizer_mode_from_string(const std::string& text) {
  if (text == "adam") return OptimizerMode::kAdam;
  if (text == "sgd") return OptimizerMode::kSgd;
  throw InputError("unknown optimizer '" + text + "' (expected adam or sgd)");
}

Optimizer::Optimizer(ParameterList params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) {
    throw ContractError("learning rate must be > 0");
  }
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad()) {
      throw ContractError("parameter '" + p.name + "' does not track gradients");
    }
    state_.first_moment.emplace_back(p.tensor.numel(), 0.0);
    state_.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Optimizer::step() {
  std::vector<std::vector<double>> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    grads.push_back(p.tensor.grad());
    for (double g : grads.back()) {
      if (!std::isfinite(g)) {
        throw PoisonedStateError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  ++state_.step_count;
  const double lr = config_.learning_rate;
  const double t = static_cast<double>(state_.step_count);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);

  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto values = params_[k].tensor.mutable_data();
    const auto& g = grads[k];
    if (config_.mode == OptimizerMode::kSgd) {
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * g[i];
      continue;
    }
    auto& m = state_.first_moment[k];
    auto& v = state_.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace m2gl
