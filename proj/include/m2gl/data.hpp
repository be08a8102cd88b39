// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "m2gl/window.hpp"

namespace m2gl {

// ---------------------------------------------------------------------------
// Raw series

/// Knobs of one synthetic customer group. Loads are in kW.
struct GroupSpec {
  std::string group_id;
  double base_level = 1.0;
  double daily_amplitude = 0.0;
  double weekly_amplitude = 0.0;
  double noise_std = 0.0;
  double level_shift = 0.0;
  double scale_shift = 1.0;
  double shape_phase = 0.0;  // hour of the daily peak
  double temperature_coupling = 0.0;  // kW per degree away from 18 C
  double price_coupling = 0.0;        // kW per $/MWh away from 40
};

/// Hourly series of one group. externals[c][t] follows the dataset's
/// external column order.
struct GroupSeries {
  std::string group_id;
  std::vector<std::int64_t> timestamps;  // unix seconds, UTC
  std::vector<double> load;
  std::vector<std::vector<double>> externals;

  std::size_t size() const { return load.size(); }
};

struct RawDataset {
  std::vector<std::string> external_columns;  // "ext_<source>_<feature>"
  std::vector<GroupSeries> groups;
  std::vector<std::string> gaps;  // human-readable gap reports from load_csv

  const GroupSeries* find(const std::string& group_id) const;
  const GroupSeries& at(const std::string& group_id) const;  // DataError if absent
};

/// Minimum simulated days: one context week plus targets.
inline constexpr std::size_t kMinSyntheticDays = 14;

/// Generates hourly loads plus shared covariates (temperature, hour-of-day,
/// day-of-week, price) starting 2024-01-01T00:00:00Z. Deterministic in seed.
RawDataset generate_synthetic(const std::vector<GroupSpec>& specs, std::size_t days,
                              std::uint64_t seed);

/// Named presets: "fig1-like" (residential / small / large commercial) and
/// "flat" (one constant group, for smoke tests).
std::vector<GroupSpec> preset_specs(const std::string& name);
bool is_preset(const std::string& name);
/// Reads a JSON spec file: {"groups": [{...GroupSpec fields...}]} or
/// {"preset": "fig1-like"}.
std::vector<GroupSpec> load_group_specs(const std::string& path);

/// CSV: timestamp,group_id,load_kw,ext_<source>_<feature>...
void write_csv(const RawDataset& data, std::ostream& out);
void write_csv(const RawDataset& data, const std::string& path);
RawDataset read_csv(std::istream& in);
RawDataset load_csv(const std::string& path);

std::string format_timestamp(std::int64_t unix_seconds);
std::int64_t parse_timestamp(const std::string& text);  // throws DataError

// ---------------------------------------------------------------------------
// Windows

/// Column indices grouped by source ("ext_temp_c" belongs to source "temp").
struct ExternalSource {
  std::string name;
  std::vector<std::size_t> columns;
};
std::vector<ExternalSource> external_layout(const std::vector<std::string>& columns);

struct NormalizationStats {
  double load_mean = 0.0;
  double load_std = 1.0;
  std::vector<double> ext_mean;
  std::vector<double> ext_std;

  double normalize_load(double v) const { return (v - load_mean) / load_std; }
  double denormalize_load(double v) const { return v * load_std + load_mean; }
};

struct WindowParams {
  std::size_t context_hours = 168;
  std::size_t horizon_hours = 24;
  std::size_t stride_hours = 24;
  std::size_t step_width = 24;      // hours per model step (d)
  std::size_t blocks_per_step = 4;  // external features per column per step
  double train_fraction = 0.8;

  std::size_t context_steps() const { return context_hours / step_width; }
  std::size_t horizon_steps() const { return horizon_hours / step_width; }
  void validate() const;
};

struct WindowedDataset {
  std::string group_id;
  std::vector<Window> windows;
  NormalizationStats stats;
  WindowParams params;
  std::vector<std::size_t> source_widths;

  bool empty() const { return windows.empty(); }
  std::size_t size() const { return windows.size(); }
};

/// floor((T - context - horizon) / stride) + 1, or 0 when T is too short.
std::size_t window_count(std::size_t hours, const WindowParams& params);
/// Hours [0, end) touched by the training windows of a `window_count`-sized set.
std::size_t training_hour_end(std::size_t hours, const WindowParams& params);

/// Mean/std over hours [0, hour_end) of the series.
NormalizationStats compute_stats(const GroupSeries& series, std::size_t hour_end);
/// Pools the training hours of every series.
NormalizationStats pooled_stats(const std::vector<const GroupSeries*>& series,
                                const WindowParams& params);

/// Sliding windows with z-scored loads and externals. Without explicit stats
/// they are computed from the training portion only.
WindowedDataset make_windows(const GroupSeries& series, const std::vector<std::string>& columns,
                             const WindowParams& params,
                             const NormalizationStats* stats = nullptr);

/// Builds a forecasting context from the last `context_hours` of a series.
ContextWindow make_context(const GroupSeries& series, const std::vector<std::string>& columns,
                           const WindowParams& params, const NormalizationStats& stats);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitDataset {
  WindowedDataset train;
  WindowedDataset validation;
  WindowedDataset test;
  std::vector<std::string> warnings;
};

/// Contiguous, time-ordered split by window count (10 windows -> 8/1/1).
/// Every training target precedes every validation/test target.
SplitDataset split_chronological(const WindowedDataset& data, SplitFractions fractions = {});

}  // namespace m2gl
