// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "m2gl/optim.hpp"
#include "m2gl/random.hpp"
#include "m2gl/tensor.hpp"

namespace m2gl {

/// y = W x + b with W stored [out, in].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear uniform(std::size_t in, std::size_t out, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor forward(const Tensor& x) const { return add(matmul(weight, x), bias); }
  void collect(const std::string& prefix, ParameterList& out) const;
  Linear clone(bool requires_grad) const;
};

/// Two affine layers with a tanh in between.
struct TwoLayerMlp {
  Linear hidden;
  Linear output;

  static TwoLayerMlp make(std::size_t in, std::size_t hidden_width,
                          std::size_t out, Rng& rng, bool zero_output);

  Tensor forward(const Tensor& x) const {
    return output.forward(tanh(hidden.forward(x)));
  }
  void collect(const std::string& prefix, ParameterList& out) const;
  TwoLayerMlp clone(bool requires_grad) const;
};

}  // namespace m2gl
