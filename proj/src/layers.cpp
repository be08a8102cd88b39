// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/layers.hpp"

#include <cmath>

namespace m2gl {

Linear Linear::uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = Tensor::from({out, in}, uniform_values(rng, out * in, bound), true);
  l.bias = Tensor::from({out}, uniform_values(rng, out, bound), true);
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  Linear l;
  l.weight = Tensor::zeros({out, in}, true);
  l.bias = Tensor::zeros({out}, true);
  return l;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Linear Linear::clone(bool requires_grad) const {
  return {weight.clone(requires_grad), bias.clone(requires_grad)};
}

TwoLayerMlp TwoLayerMlp::make(std::size_t in, std::size_t hidden_width,
                              std::size_t out, Rng& rng, bool zero_output) {
  TwoLayerMlp m;
  m.hidden = Linear::uniform(in, hidden_width, rng);
  m.output = zero_output ? Linear::zeros(hidden_width, out)
                         : Linear::uniform(hidden_width, out, rng);
  return m;
}

void TwoLayerMlp::collect(const std::string& prefix, ParameterList& out) const {
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

TwoLayerMlp TwoLayerMlp::clone(bool requires_grad) const {
  return {hidden.clone(requires_grad), output.clone(requires_grad)};
}

}  // namespace m2gl
