// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace m2gl {

/// Features of every external source at one model step; sources[j] is the
/// feature vector w_j fed to hypernetwork j.
struct ExternalSlice {
  std::vector<std::vector<double>> sources;
};

/// One aligned training/evaluation sample. Steps are blocks of `step_width`
/// hourly loads; the first `context_steps` are history, the rest targets.
struct Window {
  std::string group_id;
  std::int64_t start_time = 0;   // first context hour, unix seconds
  std::int64_t origin_time = 0;  // first target hour, unix seconds
  std::size_t context_steps = 0;
  std::vector<std::vector<double>> loads;  // [context_steps + target_steps][step_width]
  std::vector<ExternalSlice> externals;    // one slice per step, same length as loads

  std::size_t total_steps() const { return loads.size(); }
  std::size_t target_steps() const { return loads.size() - context_steps; }
};

/// History handed to the forecaster at inference time.
struct ContextWindow {
  std::vector<std::vector<double>> loads;  // [context_steps][step_width]
  std::vector<ExternalSlice> externals;    // one per context step
  // Externals for steps after the context, used by multi-step rollout.
  // Missing entries repeat the last context slice.
  std::vector<ExternalSlice> future_externals;

  static ContextWindow from_window(const Window& w);
};

inline ContextWindow ContextWindow::from_window(const Window& w) {
  ContextWindow c;
  c.loads.assign(w.loads.begin(), w.loads.begin() + static_cast<std::ptrdiff_t>(w.context_steps));
  c.externals.assign(w.externals.begin(),
                     w.externals.begin() + static_cast<std::ptrdiff_t>(w.context_steps));
  c.future_externals.assign(
      w.externals.begin() + static_cast<std::ptrdiff_t>(w.context_steps), w.externals.end());
  return c;
}

}  // namespace m2gl
