// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "m2gl/optim.hpp"
#include "m2gl/pipeline.hpp"
#include "m2gl/random.hpp"
#include "m2gl/tensor.hpp"
#include "m2gl/vae.hpp"

namespace m2gl::testing {

struct GradCheck {
  std::string name;
  double rel_error = 0.0;
  double auto_norm = 0.0;
};

/// Central finite differences against autodiff for every parameter in
/// `params`; `f` must rebuild the scalar loss from the current values.
inline std::vector<GradCheck> check_gradients(const ParameterList& params,
                                              const std::function<Tensor()>& f,
                                              double h = 1e-5) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  f().backward();
  std::vector<GradCheck> out;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic = t.grad();
    std::vector<double> numeric(analytic.size());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      double plus, minus;
      {
        NoGradGuard ng;
        values[i] = keep + h;
        plus = f().item();
        values[i] = keep - h;
        minus = f().item();
      }
      values[i] = keep;
      numeric[i] = (plus - minus) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
    out.push_back({p.name, std::sqrt(diff) / denom, std::sqrt(na)});
  }
  return out;
}

/// Small shapes so exhaustive finite differences stay cheap.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.step_width = 4;
  c.lifted_width = 5;
  c.source_widths = {2, 3};
  c.gate_hidden = 4;
  c.hyper_hidden = 3;
  c.hidden_width = 6;
  c.latent_width = 3;
  return c;
}

inline ExternalSlice random_slice(const std::vector<std::size_t>& widths, Rng& rng) {
  ExternalSlice s;
  for (std::size_t w : widths) s.sources.push_back(normal_values(rng, w));
  return s;
}

inline Window random_window(const ModelConfig& c, std::size_t context_steps,
                            std::size_t target_steps, Rng& rng) {
  Window w;
  w.group_id = "g";
  w.context_steps = context_steps;
  for (std::size_t s = 0; s < context_steps + target_steps; ++s) {
    w.loads.push_back(normal_values(rng, c.step_width));
    w.externals.push_back(random_slice(c.source_widths, rng));
  }
  return w;
}

/// Re-draws every parameter (including zero-initialized ones) uniformly.
inline void randomize(const ParameterList& params, Rng& rng, double bound = 0.5) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    auto v = uniform_values(rng, t.numel(), bound);
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
  }
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("m2gl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Bitwise equality of two parameter lists.
inline bool same_values(const ParameterList& a, const ParameterList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.shape() != b[i].tensor.shape()) return false;
    const auto x = a[i].tensor.data();
    const auto y = b[i].tensor.data();
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

}  // namespace m2gl::testing
