// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/lora.hpp"

#include <algorithm>
#include <cmath>

#include "m2gl/errors.hpp"

namespace m2gl {

namespace {

constexpr const char* kTheta0 = "meta.theta0";
constexpr const char* kRecurCandidate = "encoder.recur_candidate";
constexpr const char* kOutputMean = "decoder.mean_weight";
constexpr const char* kOutputLogvar = "decoder.logvar_weight";

const Tensor& backbone_matrix(const Backbone& b, const std::string& name) {
  if (name == kTheta0) return b.meta.theta0();
  if (name == kRecurCandidate) return b.encoder.recur_candidate;
  if (name == kOutputMean) return b.decoder.mean_weight;
  if (name == kOutputLogvar) return b.decoder.logvar_weight;
  throw CompatibilityError("backbone has no adaptable matrix named '" + name + "'");
}

Tensor& backbone_matrix(Backbone& b, const std::string& name) {
  return const_cast<Tensor&>(backbone_matrix(static_cast<const Backbone&>(b), name));
}

}  // namespace

std::string to_string(LoraTarget target) {
  switch (target) {
    case LoraTarget::kInputMatrix: return "input_matrix";
    case LoraTarget::kHiddenTransitionMatrix: return "hidden_transition_matrix";
    case LoraTarget::kOutputMatrix: return "output_matrix";
  }
  return "unknown";
}

LoraTarget lora_target_from_string(const std::string& text) {
  if (text == "input" || text == "input_matrix") return LoraTarget::kInputMatrix;
  if (text == "hidden" || text == "hidden_transition" ||
      text == "hidden_transition_matrix")
    return LoraTarget::kHiddenTransitionMatrix;
  if (text == "output" || text == "output_matrix") return LoraTarget::kOutputMatrix;
  throw ContractError("unknown adapter target '" + text +
                      "' (expected input, hidden, or output)");
}

std::vector<std::string> target_matrix_names(LoraTarget target) {
  switch (target) {
    case LoraTarget::kInputMatrix: return {kTheta0};
    case LoraTarget::kHiddenTransitionMatrix: return {kRecurCandidate};
    case LoraTarget::kOutputMatrix: return {kOutputMean, kOutputLogvar};
  }
  return {};
}

std::vector<MatrixShape> target_shapes(const Backbone& backbone, LoraTarget target) {
  std::vector<MatrixShape> out;
  for (const auto& name : target_matrix_names(target)) {
    const Tensor& w = backbone_matrix(backbone, name);
    out.push_back({name, w.dim(0), w.dim(1)});
  }
  return out;
}

std::size_t LoraAdapter::trainable_count() const {
  std::size_t n = 0;
  for (const auto& f : factors) n += f.a.numel() + f.b.numel();
  return n;
}

LoraAdapter LoraAdapter::clone() const {
  LoraAdapter c = *this;
  for (auto& f : c.factors) {
    f.a = f.a.clone(f.a.requires_grad());
    f.b = f.b.clone(f.b.requires_grad());
  }
  return c;
}

LoraAdapter init_adapter(LoraTarget target, std::size_t rank, double alpha,
                         const std::vector<MatrixShape>& shapes, std::uint64_t seed,
                         std::string group_id) {
  if (rank == 0) throw ContractError("adapter rank must be >= 1");
  if (!(alpha > 0.0)) throw ContractError("adapter alpha must be > 0");
  const auto expected = target_matrix_names(target);
  if (shapes.size() != expected.size()) {
    throw ContractError("target " + to_string(target) + " adapts " +
                        std::to_string(expected.size()) + " matrices, got " +
                        std::to_string(shapes.size()) + " shapes");
  }
  LoraAdapter adapter;
  adapter.target = target;
  adapter.rank = rank;
  adapter.alpha = alpha;
  adapter.group_id = std::move(group_id);
  Rng rng = make_rng(seed, "lora");
  for (const auto& s : shapes) {
    if (rank > std::min(s.rows, s.cols)) {
      throw ContractError("rank " + std::to_string(rank) + " exceeds min(" +
                          std::to_string(s.rows) + ", " + std::to_string(s.cols) +
                          ") for " + s.name);
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
    LoraFactors f;
    f.matrix = s.name;
    f.a = Tensor::from({s.rows, rank}, uniform_values(rng, s.rows * rank, bound), true);
    f.b = Tensor::zeros({rank, s.cols}, true);
    adapter.factors.push_back(std::move(f));
  }
  return adapter;
}

LoraAdapter init_adapter(const Backbone& backbone, LoraTarget target, std::size_t rank,
                         double alpha, std::uint64_t seed, std::string group_id) {
  LoraAdapter a = init_adapter(target, rank, alpha, target_shapes(backbone, target), seed,
                               std::move(group_id));
  a.backbone_hash = backbone.content_hash();
  return a;
}

Tensor apply(const Tensor& w0, const Tensor& a, const Tensor& b, std::size_t rank,
             double alpha) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0) || a.dim(1) != rank ||
      w0.rank() != 2 || a.dim(0) != w0.dim(0) || b.dim(1) != w0.dim(1)) {
    throw ShapeError("adapter factors " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()) + " (rank " + std::to_string(rank) +
                     ") do not fit matrix " + shape_to_string(w0.shape()));
  }
  return add(w0, scale(matmul(a, b), alpha / static_cast<double>(rank)));
}

void check_adapter_shapes(const Backbone& backbone, const LoraAdapter& adapter) {
  const auto expected = target_matrix_names(adapter.target);
  if (adapter.factors.size() != expected.size()) {
    throw CompatibilityError("adapter for " + to_string(adapter.target) + " must hold " +
                             std::to_string(expected.size()) + " factor pairs");
  }
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const auto& f = adapter.factors[k];
    if (f.matrix != expected[k]) {
      throw CompatibilityError("adapter factor '" + f.matrix + "' does not match target " +
                               to_string(adapter.target));
    }
    const Tensor& w = backbone_matrix(backbone, f.matrix);
    if (f.a.shape() != Shape{w.dim(0), adapter.rank} ||
        f.b.shape() != Shape{adapter.rank, w.dim(1)}) {
      throw CompatibilityError("adapter factors for '" + f.matrix + "' do not fit " +
                               shape_to_string(w.shape()));
    }
  }
}

WeightOverrides overrides_for(const Backbone& backbone, const LoraAdapter& adapter) {
  check_adapter_shapes(backbone, adapter);
  WeightOverrides o;
  for (const auto& f : adapter.factors) {
    Tensor w = apply(backbone_matrix(backbone, f.matrix), f.a, f.b, adapter.rank,
                     adapter.alpha);
    if (f.matrix == kTheta0) o.theta0 = w;
    else if (f.matrix == kRecurCandidate) o.recur_candidate = w;
    else if (f.matrix == kOutputMean) o.output_mean = w;
    else if (f.matrix == kOutputLogvar) o.output_logvar = w;
  }
  return o;
}

Backbone merge(const Backbone& backbone, const LoraAdapter& adapter) {
  check_adapter_shapes(backbone, adapter);
  NoGradGuard no_grad;
  Backbone merged = backbone.clone(false);
  for (const auto& f : adapter.factors) {
    Tensor& w = backbone_matrix(merged, f.matrix);
    w = apply(w, f.a, f.b, adapter.rank, adapter.alpha).clone(false);
  }
  return merged;
}

ParameterList trainable_params(const LoraAdapter& adapter) {
  ParameterList out;
  for (const auto& f : adapter.factors) {
    out.push_back({f.matrix + ".lora_a", f.a});
    out.push_back({f.matrix + ".lora_b", f.b});
  }
  return out;
}

}  // namespace m2gl
