// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2gl/tensor.hpp"

namespace m2gl {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

enum class OptimizerMode { kAdam, kSgd };

std::string to_string(OptimizerMode mode);
OptimizerMode optimizer_mode_from_string(const std::string& text);

struct OptimizerConfig {
  OptimizerMode mode = OptimizerMode::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment buffers plus the step counter for a parameter list.
struct OptimizerState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Adam with bias correction, or plain SGD (theta -= lr * grad).
///
/// Parameters are held by handle; step() writes through to the caller's
/// tensors and reads their accumulated gradients.
class Optimizer {
 public:
  Optimizer(ParameterList params, OptimizerConfig config);

  /// Throws PoisonedStateError naming the first parameter with a NaN/Inf
  /// gradient; in that case no parameter is modified.
  void step();
  void zero_grad();

  const OptimizerState& state() const { return state_; }
  const OptimizerConfig& config() const { return config_; }
  const ParameterList& params() const { return params_; }

 private:
  ParameterList params_;
  OptimizerConfig config_;
  OptimizerState state_;
};

}  // namespace m2gl
