// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/vae.hpp"

#include <cmath>
#include <numbers>

#include "m2gl/errors.hpp"
#include "m2gl/hash.hpp"

namespace m2gl {

std::string to_string(OutputActivation a) {
  return a == OutputActivation::kIdentity ? "identity" : "tanh";
}

OutputActivation output_activation_from_string(const std::string& text) {
  if (text == "identity") return OutputActivation::kIdentity;
  if (text == "tanh") return OutputActivation::kTanh;
  throw InputError("unknown output activation '" + text + "'");
}

MetaLifterConfig ModelConfig::meta_config() const {
  MetaLifterConfig m;
  m.input_width = step_width;
  m.lifted_width = lifted_width;
  m.source_widths = source_widths;
  m.gate_hidden = gate_hidden;
  m.hyper_hidden = hyper_hidden;
  m.zero_init_hypernet_output = zero_init_hypernet_output;
  return m;
}

// ---------------------------------------------------------------------------
// Encoder

GruEncoder GruEncoder::make(std::size_t input_width, std::size_t hidden_width,
                            Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_width));
  auto square = [&] {
    return Tensor::from({hidden_width, hidden_width},
                        uniform_values(rng, hidden_width * hidden_width, bound), true);
  };
  GruEncoder e;
  e.input_reset = Linear::uniform(input_width, hidden_width, rng);
  e.input_update = Linear::uniform(input_width, hidden_width, rng);
  e.input_candidate = Linear::uniform(input_width, hidden_width, rng);
  e.recur_reset = square();
  e.recur_update = square();
  e.recur_candidate = square();
  e.recur_candidate_bias =
      Tensor::from({hidden_width}, uniform_values(rng, hidden_width, bound), true);
  return e;
}

Tensor GruEncoder::step(const Tensor& x, const Tensor& h,
                        const Tensor& candidate_matrix) const {
  const Tensor r = sigmoid(add(input_reset.forward(x), matmul(recur_reset, h)));
  const Tensor u = sigmoid(add(input_update.forward(x), matmul(recur_update, h)));
  const Tensor n = tanh(add(input_candidate.forward(x),
                            mul(r, add(matmul(candidate_matrix, h), recur_candidate_bias))));
  return add(n, mul(u, sub(h, n)));
}

void GruEncoder::collect(const std::string& prefix, ParameterList& out) const {
  input_reset.collect(prefix + ".input_reset", out);
  input_update.collect(prefix + ".input_update", out);
  input_candidate.collect(prefix + ".input_candidate", out);
  out.push_back({prefix + ".recur_reset", recur_reset});
  out.push_back({prefix + ".recur_update", recur_update});
  out.push_back({prefix + ".recur_candidate", recur_candidate});
  out.push_back({prefix + ".recur_candidate_bias", recur_candidate_bias});
}

GruEncoder GruEncoder::clone(bool requires_grad) const {
  GruEncoder e;
  e.input_reset = input_reset.clone(requires_grad);
  e.input_update = input_update.clone(requires_grad);
  e.input_candidate = input_candidate.clone(requires_grad);
  e.recur_reset = recur_reset.clone(requires_grad);
  e.recur_update = recur_update.clone(requires_grad);
  e.recur_candidate = recur_candidate.clone(requires_grad);
  e.recur_candidate_bias = recur_candidate_bias.clone(requires_grad);
  return e;
}

void LatentHeads::collect(const std::string& prefix, ParameterList& out) const {
  mean.collect(prefix + ".mean", out);
  logvar.collect(prefix + ".logvar", out);
}

LatentHeads LatentHeads::clone(bool requires_grad) const {
  return {mean.clone(requires_grad), logvar.clone(requires_grad)};
}

void DecoderHeads::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".mean_weight", mean_weight});
  out.push_back({prefix + ".mean_bias", mean_bias});
  out.push_back({prefix + ".logvar_weight", logvar_weight});
  out.push_back({prefix + ".logvar_bias", logvar_bias});
}

DecoderHeads DecoderHeads::clone(bool requires_grad) const {
  return {mean_weight.clone(requires_grad), mean_bias.clone(requires_grad),
          logvar_weight.clone(requires_grad), logvar_bias.clone(requires_grad)};
}

// ---------------------------------------------------------------------------
// Backbone

Backbone::Backbone(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config) {
  Rng rng = make_rng(init_seed, "init");
  meta = MetaLifter(config_.meta_config(), rng);
  encoder = GruEncoder::make(config_.lifted_width, config_.hidden_width, rng);
  latent.mean = Linear::uniform(config_.hidden_width, config_.latent_width, rng);
  latent.logvar = Linear::uniform(config_.hidden_width, config_.latent_width, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.latent_width));
  const std::size_t d = config_.step_width;
  const std::size_t l = config_.latent_width;
  decoder.mean_weight = Tensor::from({d, l}, uniform_values(rng, d * l, bound), true);
  decoder.mean_bias = Tensor::zeros({d}, true);
  decoder.logvar_weight = Tensor::from({d, l}, uniform_values(rng, d * l, bound), true);
  decoder.logvar_bias = Tensor::zeros({d}, true);
}

ParameterList Backbone::parameters() const {
  ParameterList out;
  meta.collect("meta", out);
  encoder.collect("encoder", out);
  latent.collect("latent", out);
  decoder.collect("decoder", out);
  return out;
}

Backbone Backbone::clone(bool requires_grad) const {
  Backbone b;
  b.config_ = config_;
  b.meta = meta.clone(requires_grad);
  b.encoder = encoder.clone(requires_grad);
  b.latent = latent.clone(requires_grad);
  b.decoder = decoder.clone(requires_grad);
  return b;
}

std::size_t Backbone::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

std::string Backbone::content_hash() const {
  ByteWriter w;
  for (const auto& p : parameters()) {
    w.text(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.u64(d);
    for (double v : p.tensor.data()) w.f64(v);
  }
  const Digest d = sha256(w.bytes());
  return to_hex(d);
}

// ---------------------------------------------------------------------------
// Forward pieces

EncoderState encode_step(const Tensor& x_lifted, const EncoderState& state,
                         const GruEncoder& encoder, const Tensor* candidate_matrix) {
  const Tensor& cand = candidate_matrix ? *candidate_matrix : encoder.recur_candidate;
  return {encoder.step(x_lifted, state.h, cand)};
}

Tensor sample_latent(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
  const Tensor eps = noise.detach();
  return add(mu, mul(exp(scale(logvar, 0.5)), eps));
}

DecodedGaussian decode(const Tensor& z, const DecoderHeads& heads,
                       OutputActivation activation, double logvar_clamp,
                       const WeightOverrides* overrides) {
  const Tensor& wm = (overrides && overrides->output_mean) ? *overrides->output_mean
                                                           : heads.mean_weight;
  const Tensor& ws = (overrides && overrides->output_logvar) ? *overrides->output_logvar
                                                             : heads.logvar_weight;
  Tensor mean = add(matmul(wm, z), heads.mean_bias);
  Tensor logvar = add(matmul(ws, z), heads.logvar_bias);
  if (activation == OutputActivation::kTanh) {
    mean = tanh(mean);
    logvar = tanh(logvar);
  }
  logvar = clamp(logvar, -logvar_clamp, logvar_clamp);
  Tensor variance = exp(logvar);
  return {std::move(mean), std::move(logvar), std::move(variance)};
}

Tensor gaussian_nll(const Tensor& y, const Tensor& mean, const Tensor& logvar) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Tensor sq = mul(square(sub(y, mean)), exp(neg(logvar)));
  const Tensor s = sum(add(logvar, sq));
  return add_scalar(scale(s, 0.5), half_log_2pi * static_cast<double>(y.numel()));
}

Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar) {
  const Tensor inner = sub(add(square(mu), exp(logvar)), logvar);
  return scale(add_scalar(sum(inner), -static_cast<double>(mu.numel())), 0.5);
}

namespace {

struct Posterior {
  Tensor mean;
  Tensor logvar;
};

Posterior posterior(const Backbone& model, const Tensor& h) {
  const double c = model.config().logvar_clamp;
  return {model.latent.mean.forward(h), clamp(model.latent.logvar.forward(h), -c, c)};
}

void check_window_shapes(const Backbone& model, const std::vector<std::vector<double>>& loads,
                         std::size_t externals) {
  const std::size_t d = model.config().step_width;
  for (const auto& row : loads) {
    if (row.size() != d) {
      throw InputError("load step has " + std::to_string(row.size()) +
                       " values, model expects " + std::to_string(d));
    }
  }
  if (externals < loads.size()) {
    throw InputError("window has fewer external slices than load steps");
  }
}

}  // namespace

ElboTerms elbo_terms(const Backbone& model, const Window& window, double lambda,
                     std::uint64_t noise_seed, const WeightOverrides* overrides) {
  if (!(lambda >= 0.0)) throw ContractError("KL weight lambda must be >= 0");
  if (window.total_steps() < 2) {
    throw InputError("window needs at least two steps to form a prediction target");
  }
  check_window_shapes(model, window.loads, window.externals.size());

  const auto& cfg = model.config();
  const Tensor& theta0 = (overrides && overrides->theta0) ? *overrides->theta0
                                                          : model.meta.theta0();
  const Tensor& cand = (overrides && overrides->recur_candidate)
                           ? *overrides->recur_candidate
                           : model.encoder.recur_candidate;
  Rng rng(noise_seed);
  EncoderState state = EncoderState::initial(cfg.hidden_width);
  Tensor nll = Tensor::scalar(0.0);
  Tensor kl = Tensor::scalar(0.0);
  for (std::size_t i = 0; i + 1 < window.total_steps(); ++i) {
    const Tensor x = Tensor::vector(window.loads[i]);
    const Tensor theta = model.meta.meta_theta(window.externals[i], theta0);
    state = encode_step(lift(x, theta), state, model.encoder, &cand);
    const Posterior q = posterior(model, state.h);
    const Tensor noise = Tensor::vector(normal_values(rng, cfg.latent_width));
    const Tensor z = sample_latent(q.mean, q.logvar, noise);
    const DecodedGaussian out =
        decode(z, model.decoder, cfg.output_activation, cfg.logvar_clamp, overrides);
    nll = add(nll, gaussian_nll(Tensor::vector(window.loads[i + 1]), out.mean, out.logvar));
    kl = add(kl, kl_standard_normal(q.mean, q.logvar));
  }
  Tensor total = add(nll, scale(kl, lambda));
  return {std::move(total), std::move(nll), std::move(kl)};
}

DistributionalForecast forecast(const Backbone& model, const ContextWindow& context,
                                std::size_t expected_context_steps,
                                std::size_t horizon_steps,
                                const WeightOverrides* overrides,
                                ForecastOptions options) {
  const auto& cfg = model.config();
  if (horizon_steps == 0) throw ContractError("horizon must be at least one step");
  if (context.loads.size() != expected_context_steps) {
    throw InputError("context has " + std::to_string(context.loads.size()) +
                     " steps; the forecaster needs exactly " +
                     std::to_string(expected_context_steps) + " steps (" +
                     std::to_string(expected_context_steps * cfg.step_width) +
                     " hours)");
  }
  check_window_shapes(model, context.loads, context.externals.size());

  NoGradGuard no_grad;
  const Tensor& theta0 = (overrides && overrides->theta0) ? *overrides->theta0
                                                          : model.meta.theta0();
  const Tensor& cand = (overrides && overrides->recur_candidate)
                           ? *overrides->recur_candidate
                           : model.encoder.recur_candidate;

  EncoderState state = EncoderState::initial(cfg.hidden_width);
  for (std::size_t i = 0; i < context.loads.size(); ++i) {
    const Tensor theta = model.meta.meta_theta(context.externals[i], theta0);
    state = encode_step(lift(Tensor::vector(context.loads[i]), theta), state,
                        model.encoder, &cand);
  }

  Rng rng(options.noise_seed);
  DistributionalForecast result;
  for (std::size_t k = 0; k < horizon_steps; ++k) {
    const Posterior q = posterior(model, state.h);
    Tensor z = q.mean;
    if (options.mode == InferenceMode::kSampled) {
      z = sample_latent(q.mean, q.logvar,
                        Tensor::vector(normal_values(rng, cfg.latent_width)));
    }
    const DecodedGaussian out =
        decode(z, model.decoder, cfg.output_activation, cfg.logvar_clamp, overrides);
    result.mean.insert(result.mean.end(), out.mean.data().begin(), out.mean.data().end());
    result.variance.insert(result.variance.end(), out.variance.data().begin(),
                           out.variance.data().end());
    if (k + 1 == horizon_steps) break;
    const ExternalSlice& ext = k < context.future_externals.size()
                                   ? context.future_externals[k]
                                   : context.externals.back();
    const Tensor theta = model.meta.meta_theta(ext, theta0);
    state = encode_step(lift(out.mean, theta), state, model.encoder, &cand);
  }
  return result;
}

}  // namespace m2gl
