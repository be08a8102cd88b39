// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/moe_meta.hpp"

#include <cmath>
#include <numeric>

#include "m2gl/errors.hpp"

namespace m2gl {

std::size_t MetaLifterConfig::gate_input_width() const {
  return std::accumulate(source_widths.begin(), source_widths.end(), std::size_t{0});
}

MetaLifter::MetaLifter(const MetaLifterConfig& config, Rng& rng) : config_(config) {
  if (config_.expert_count() == 0) {
    throw ContractError("meta lifter needs at least one external source");
  }
  const std::size_t flat = config_.lifted_width * config_.input_width;
  gate_ = TwoLayerMlp::make(config_.gate_input_width(), config_.gate_hidden,
                            config_.expert_count(), rng, false);
  for (std::size_t width : config_.source_widths) {
    hypernets_.push_back(TwoLayerMlp::make(width, config_.hyper_hidden, flat, rng,
                                           config_.zero_init_hypernet_output));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.input_width));
  theta0_ = Tensor::from({config_.lifted_width, config_.input_width},
                         uniform_values(rng, flat, bound), true);
}

void MetaLifter::check_sources(const ExternalSlice& externals) const {
  const auto& widths = config_.source_widths;
  for (std::size_t j = 0; j < widths.size(); ++j) {
    if (j >= externals.sources.size()) {
      throw InputError("external source " + std::to_string(j) + " is missing");
    }
    if (externals.sources[j].size() != widths[j]) {
      throw InputError("external source " + std::to_string(j) + " has " +
                       std::to_string(externals.sources[j].size()) +
                       " features, expected " + std::to_string(widths[j]));
    }
  }
}

Tensor MetaLifter::gate_weights(const ExternalSlice& externals) const {
  check_sources(externals);
  std::vector<double> joined;
  joined.reserve(config_.gate_input_width());
  for (const auto& s : externals.sources) joined.insert(joined.end(), s.begin(), s.end());
  return softmax(gate_.forward(Tensor::vector(std::move(joined))));
}

Tensor MetaLifter::expert_matrix(std::size_t expert,
                                 const ExternalSlice& externals) const {
  check_sources(externals);
  const Tensor out = hypernets_.at(expert).forward(
      Tensor::vector(externals.sources[expert]));
  return reshape(out, {config_.lifted_width, config_.input_width});
}

Tensor MetaLifter::meta_theta(const ExternalSlice& externals,
                              const Tensor& theta0) const {
  if (theta0.shape() != Shape{config_.lifted_width, config_.input_width}) {
    throw ShapeError("theta0 must be " +
                     shape_to_string({config_.lifted_width, config_.input_width}) +
                     ", got " + shape_to_string(theta0.shape()));
  }
  const Tensor weights = gate_weights(externals);
  Tensor theta = theta0;
  for (std::size_t j = 0; j < hypernets_.size(); ++j) {
    theta = add(theta, mul(expert_matrix(j, externals), select(weights, j)));
  }
  return theta;
}

void MetaLifter::collect(const std::string& prefix, ParameterList& out) const {
  gate_.collect(prefix + ".gate", out);
  for (std::size_t j = 0; j < hypernets_.size(); ++j) {
    hypernets_[j].collect(prefix + ".hyper" + std::to_string(j), out);
  }
  out.push_back({prefix + ".theta0", theta0_});
}

MetaLifter MetaLifter::clone(bool requires_grad) const {
  MetaLifter m;
  m.config_ = config_;
  m.gate_ = gate_.clone(requires_grad);
  for (const auto& h : hypernets_) m.hypernets_.push_back(h.clone(requires_grad));
  m.theta0_ = theta0_.clone(requires_grad);
  return m;
}

Tensor lift(const Tensor& x, const Tensor& theta) { return matmul(theta, x); }

}  // namespace m2gl
