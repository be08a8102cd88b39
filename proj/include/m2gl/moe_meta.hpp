// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "m2gl/layers.hpp"
#include "m2gl/window.hpp"

namespace m2gl {

struct MetaLifterConfig {
  std::size_t input_width = 24;   // d: raw loads per step
  std::size_t lifted_width = 32;  // d': encoder input width
  std::vector<std::size_t> source_widths;  // feature count of each source
  std::size_t gate_hidden = 16;
  std::size_t hyper_hidden = 16;
  // Zero hypernet output layers so the lifting starts as theta0 alone.
  bool zero_init_hypernet_output = true;

  std::size_t expert_count() const { return source_widths.size(); }
  std::size_t gate_input_width() const;
};

/// Gated mixture of hypernetworks producing the per-step lifting matrix
///
///   theta_i = sum_j l_ji * reshape(g_j(w_ji)) + theta0,   l_.i = softmax(gate(w_.i))
///
/// where the gate sees all sources concatenated and hypernet j sees source j.
class MetaLifter {
 public:
  MetaLifter() = default;
  MetaLifter(const MetaLifterConfig& config, Rng& rng);

  const MetaLifterConfig& config() const { return config_; }

  /// Softmax-normalized expert weights, shape [M].
  Tensor gate_weights(const ExternalSlice& externals) const;
  /// Flattened hypernet output reshaped to [d', d].
  Tensor expert_matrix(std::size_t expert, const ExternalSlice& externals) const;
  /// Lifting matrix built on `theta0` (pass an adapted copy to override).
  Tensor meta_theta(const ExternalSlice& externals, const Tensor& theta0) const;
  Tensor meta_theta(const ExternalSlice& externals) const {
    return meta_theta(externals, theta0_);
  }

  const Tensor& theta0() const { return theta0_; }
  Tensor& theta0() { return theta0_; }
  TwoLayerMlp& gate() { return gate_; }
  const TwoLayerMlp& gate() const { return gate_; }
  std::vector<TwoLayerMlp>& hypernets() { return hypernets_; }
  const std::vector<TwoLayerMlp>& hypernets() const { return hypernets_; }

  void collect(const std::string& prefix, ParameterList& out) const;
  MetaLifter clone(bool requires_grad) const;

 private:
  void check_sources(const ExternalSlice& externals) const;

  MetaLifterConfig config_;
  TwoLayerMlp gate_;
  std::vector<TwoLayerMlp> hypernets_;
  Tensor theta0_;
};

/// x' = theta x.
Tensor lift(const Tensor& x, const Tensor& theta);

}  // namespace m2gl
