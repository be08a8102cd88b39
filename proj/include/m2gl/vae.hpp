// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "m2gl/moe_meta.hpp"

namespace m2gl {

/// Activation applied to both decoder head pre-activations.
enum class OutputActivation { kIdentity, kTanh };

std::string to_string(OutputActivation a);
OutputActivation output_activation_from_string(const std::string& text);

struct ModelConfig {
  std::size_t step_width = 24;     // d
  std::size_t lifted_width = 32;   // d'
  std::vector<std::size_t> source_widths;
  std::size_t gate_hidden = 16;
  std::size_t hyper_hidden = 16;
  std::size_t hidden_width = 32;   // encoder state
  std::size_t latent_width = 16;   // L
  OutputActivation output_activation = OutputActivation::kIdentity;
  double logvar_clamp = 10.0;
  bool zero_init_hypernet_output = true;

  MetaLifterConfig meta_config() const;
};

/// Gated recurrent cell over lifted inputs.
///
///   r  = sigmoid(W_r x + U_r h + b_r)
///   u  = sigmoid(W_u x + U_u h + b_u)
///   n  = tanh(W_n x + b_n + r * (U_n h + c_n))
///   h' = (1 - u) * n + u * h
struct GruEncoder {
  Linear input_reset, input_update, input_candidate;  // W_*, b_*
  Tensor recur_reset, recur_update, recur_candidate;  // U_* [H, H]
  Tensor recur_candidate_bias;                        // c_n

  static GruEncoder make(std::size_t input_width, std::size_t hidden_width, Rng& rng);
  std::size_t hidden_width() const { return recur_reset.dim(0); }

  Tensor step(const Tensor& x, const Tensor& h) const { return step(x, h, recur_candidate); }
  /// Same step with U_n replaced (hidden-transition adapters).
  Tensor step(const Tensor& x, const Tensor& h, const Tensor& candidate_matrix) const;

  void collect(const std::string& prefix, ParameterList& out) const;
  GruEncoder clone(bool requires_grad) const;
};

struct EncoderState {
  Tensor h;
  static EncoderState initial(std::size_t hidden_width) {
    return {Tensor::zeros({hidden_width})};
  }
};

/// Posterior heads for q(z | x_i, h_{i-1}).
struct LatentHeads {
  Linear mean;    // [L, H]
  Linear logvar;  // [L, H]

  void collect(const std::string& prefix, ParameterList& out) const;
  LatentHeads clone(bool requires_grad) const;
};

/// Gaussian output heads: mu_x = rho(W_mu z + b_mu), log var_x = rho(W_sigma z + b_sigma).
struct DecoderHeads {
  Tensor mean_weight;    // [d, L]
  Tensor mean_bias;      // [d]
  Tensor logvar_weight;  // [d, L]
  Tensor logvar_bias;    // [d]

  void collect(const std::string& prefix, ParameterList& out) const;
  DecoderHeads clone(bool requires_grad) const;
};

/// Replacement matrices used in place of backbone weights during a forward
/// pass. Empty members fall through to the backbone.
struct WeightOverrides {
  std::optional<Tensor> theta0;
  std::optional<Tensor> recur_candidate;
  std::optional<Tensor> output_mean;
  std::optional<Tensor> output_logvar;
};

/// Complete pre-trained parameter set: meta lifter, encoder, latent and
/// decoder heads.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }

  MetaLifter meta;
  GruEncoder encoder;
  LatentHeads latent;
  DecoderHeads decoder;

  /// Every tensor in a fixed canonical order with dotted names.
  ParameterList parameters() const;
  /// Deep copy; `requires_grad=false` yields a frozen copy.
  Backbone clone(bool requires_grad = true) const;
  std::size_t parameter_count() const;

  /// Hex SHA-256 over names, shapes, and little-endian values.
  std::string content_hash() const;

 private:
  ModelConfig config_;
};

struct DecodedGaussian {
  Tensor mean;
  Tensor logvar;  // already clamped
  Tensor variance;
};

EncoderState encode_step(const Tensor& x_lifted, const EncoderState& state,
                         const GruEncoder& encoder,
                         const Tensor* candidate_matrix = nullptr);

/// z = mu + exp(logvar / 2) * noise; noise is treated as a constant.
Tensor sample_latent(const Tensor& mu, const Tensor& logvar, const Tensor& noise);

DecodedGaussian decode(const Tensor& z, const DecoderHeads& heads,
                       OutputActivation activation, double logvar_clamp,
                       const WeightOverrides* overrides = nullptr);

/// Sum over elements of 0.5 * (ln 2pi + logvar + (y - mu)^2 / exp(logvar)).
Tensor gaussian_nll(const Tensor& y, const Tensor& mean, const Tensor& logvar);
/// KL(N(mu, diag exp(logvar)) || N(0, I)) in closed form.
Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar);

struct ElboTerms {
  Tensor total;  // nll + lambda * kl
  Tensor nll;
  Tensor kl;
};

/// Negative ELBO of one window with teacher forcing: every step i predicts
/// step i + 1, one latent sample per step drawn from `noise_seed`.
ElboTerms elbo_terms(const Backbone& model, const Window& window, double lambda,
                     std::uint64_t noise_seed,
                     const WeightOverrides* overrides = nullptr);

inline Tensor elbo_loss(const Backbone& model, const Window& window, double lambda,
                        std::uint64_t noise_seed,
                        const WeightOverrides* overrides = nullptr) {
  return elbo_terms(model, window, lambda, noise_seed, overrides).total;
}

enum class InferenceMode { kDeterministic, kSampled };

struct DistributionalForecast {
  std::vector<double> mean;      // horizon_steps * step_width values
  std::vector<double> variance;
  bool used_fallback = false;
  std::vector<std::string> warnings;
};

struct ForecastOptions {
  InferenceMode mode = InferenceMode::kDeterministic;
  std::uint64_t noise_seed = 0;
};

/// Encodes the context and rolls out `horizon_steps` steps, feeding each
/// predicted mean back as the next input. Deterministic mode uses the
/// posterior mean as z.
DistributionalForecast forecast(const Backbone& model, const ContextWindow& context,
                                std::size_t expected_context_steps,
                                std::size_t horizon_steps,
                                const WeightOverrides* overrides = nullptr,
                                ForecastOptions options = {});

}  // namespace m2gl
