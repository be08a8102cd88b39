// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "m2gl/vae.hpp"

namespace m2gl {

enum class LoraTarget { kInputMatrix, kHiddenTransitionMatrix, kOutputMatrix };

std::string to_string(LoraTarget target);
LoraTarget lora_target_from_string(const std::string& text);

/// Backbone matrix names a target adapts, in factor order.
std::vector<std::string> target_matrix_names(LoraTarget target);

struct MatrixShape {
  std::string name;
  std::size_t rows = 0;  // d_out
  std::size_t cols = 0;  // d_in
};

/// Shapes of the matrices `target` adapts in `backbone`.
std::vector<MatrixShape> target_shapes(const Backbone& backbone, LoraTarget target);

/// A = [d_out, r], B = [r, d_in] for one adapted matrix.
struct LoraFactors {
  std::string matrix;
  Tensor a;
  Tensor b;
};

/// Per-group normalization carried alongside an adapter so a group the
/// backbone never saw can still be served. Covariate stats are per column.
struct GroupNormalization {
  double load_mean = 0.0;
  double load_std = 1.0;
  std::vector<double> ext_mean;
  std::vector<double> ext_std;
};

struct LoraAdapter {
  LoraTarget target = LoraTarget::kOutputMatrix;
  std::size_t rank = 1;
  double alpha = 1.0;
  std::string group_id;
  std::vector<LoraFactors> factors;
  std::string backbone_hash;  // hash of the backbone the factors were trained on
  std::optional<GroupNormalization> normalization;

  double scaling() const { return alpha / static_cast<double>(rank); }
  /// r * (d_out + d_in) summed over adapted matrices.
  std::size_t trainable_count() const;
  LoraAdapter clone() const;
};

/// A ~ U(+-1/sqrt(d_in)), B = 0, so the initial update is exactly zero.
LoraAdapter init_adapter(LoraTarget target, std::size_t rank, double alpha,
                         const std::vector<MatrixShape>& shapes, std::uint64_t seed,
                         std::string group_id = {});
LoraAdapter init_adapter(const Backbone& backbone, LoraTarget target, std::size_t rank,
                         double alpha, std::uint64_t seed, std::string group_id = {});

/// W' = W0 + (alpha / r) A B. W0 is never written; gradients reach A and B
/// (and W0 only if it tracks).
Tensor apply(const Tensor& w0, const Tensor& a, const Tensor& b, std::size_t rank,
             double alpha);

/// Adapted matrices for an on-the-fly forward pass.
WeightOverrides overrides_for(const Backbone& backbone, const LoraAdapter& adapter);

/// Standalone frozen backbone with every update folded in.
Backbone merge(const Backbone& backbone, const LoraAdapter& adapter);

/// Exactly the A/B factors, named "<matrix>.lora_a" / ".lora_b".
ParameterList trainable_params(const LoraAdapter& adapter);

/// Throws CompatibilityError unless every factor pair fits the backbone.
void check_adapter_shapes(const Backbone& backbone, const LoraAdapter& adapter);

}  // namespace m2gl
