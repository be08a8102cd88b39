// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "m2gl/errors.hpp"
#include "m2gl/random.hpp"

namespace m2gl {

namespace {

constexpr std::int64_t kHour = 3600;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 2024-01-01T00:00:00Z, a Monday.
constexpr std::int64_t kSyntheticEpoch = 1704067200;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

SplitCounts split_counts(std::size_t n, double train_f, double val_f) {
  SplitCounts c;
  if (n == 0) return c;
  c.train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(train_f * static_cast<double>(n) + 1e-9)));
  c.train = std::min(c.train, n);
  c.validation = std::min(
      n - c.train,
      static_cast<std::size_t>(std::floor(val_f * static_cast<double>(n) + 1e-9)));
  c.test = n - c.train - c.validation;
  return c;
}

void mean_std(const std::vector<double>& v, std::size_t end, double& mean, double& stdev) {
  end = std::min(end, v.size());
  if (end == 0) {
    mean = 0.0;
    stdev = 1.0;
    return;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < end; ++i) s += v[i];
  mean = s / static_cast<double>(end);
  double ss = 0.0;
  for (std::size_t i = 0; i < end; ++i) ss += (v[i] - mean) * (v[i] - mean);
  stdev = std::sqrt(ss / static_cast<double>(end));
  if (!(stdev > 1e-12)) stdev = 1.0;
}

void check_gap_free(const GroupSeries& s) {
  for (std::size_t t = 1; t < s.timestamps.size(); ++t) {
    if (s.timestamps[t] - s.timestamps[t - 1] != kHour) {
      throw DataError("group '" + s.group_id + "' has a gap between " +
                      format_timestamp(s.timestamps[t - 1]) + " and " +
                      format_timestamp(s.timestamps[t]) +
                      "; missing hours are not imputed");
    }
  }
}

ExternalSlice step_externals(const GroupSeries& s, const std::vector<ExternalSource>& layout,
                             const NormalizationStats& stats, std::size_t first_hour,
                             const WindowParams& p) {
  const std::size_t block = p.step_width / p.blocks_per_step;
  ExternalSlice slice;
  for (const auto& src : layout) {
    std::vector<double> features;
    features.reserve(src.columns.size() * p.blocks_per_step);
    for (std::size_t c : src.columns) {
      const auto& col = s.externals[c];
      for (std::size_t b = 0; b < p.blocks_per_step; ++b) {
        double acc = 0.0;
        for (std::size_t h = 0; h < block; ++h) acc += col[first_hour + b * block + h];
        const double avg = acc / static_cast<double>(block);
        features.push_back((avg - stats.ext_mean[c]) / stats.ext_std[c]);
      }
    }
    slice.sources.push_back(std::move(features));
  }
  return slice;
}

std::vector<std::size_t> widths_of(const std::vector<ExternalSource>& layout,
                                   const WindowParams& p) {
  std::vector<std::size_t> w;
  for (const auto& s : layout) w.push_back(s.columns.size() * p.blocks_per_step);
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------

const GroupSeries* RawDataset::find(const std::string& group_id) const {
  for (const auto& g : groups) {
    if (g.group_id == group_id) return &g;
  }
  return nullptr;
}

const GroupSeries& RawDataset::at(const std::string& group_id) const {
  if (const auto* g = find(group_id)) return *g;
  throw InputError("group '" + group_id + "' is not present in the data");
}

std::string format_timestamp(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{unix_seconds}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<long>(hms.hours().count()),
                static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

std::int64_t parse_timestamp(const std::string& text) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char tail = 0;
  const int n = std::sscanf(text.c_str(), "%d-%u-%u%*[T ]%u:%u:%u%c", &y, &mo, &d, &h, &mi,
                            &s, &tail);
  const bool utc_suffix = n == 7 && tail == 'Z' && text.back() == 'Z';
  if (!(n == 6 || utc_suffix)) {
    throw DataError("invalid ISO-8601 timestamp '" + text + "'");
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
    throw DataError("invalid ISO-8601 timestamp '" + text + "'");
  }
  const sys_days sd{ymd};
  return sd.time_since_epoch().count() * 86400LL + h * 3600LL + mi * 60LL + s;
}

// ---------------------------------------------------------------------------
// Synthetic generator

RawDataset generate_synthetic(const std::vector<GroupSpec>& specs, std::size_t days,
                              std::uint64_t seed) {
  if (days < kMinSyntheticDays) {
    throw InputError("synthetic data needs at least " + std::to_string(kMinSyntheticDays) +
                     " days (one context week plus targets), got " + std::to_string(days));
  }
  if (specs.empty()) throw InputError("no group specs given");
  for (const auto& g : specs) {
    if (g.noise_std < 0 || g.daily_amplitude < 0 || g.weekly_amplitude < 0) {
      throw InputError("group '" + g.group_id + "': amplitudes and noise_std must be >= 0");
    }
  }
  const std::size_t hours = days * 24;

  RawDataset out;
  out.external_columns = {"ext_temp_c",  "ext_hour_sin", "ext_hour_cos",
                          "ext_dow_sin", "ext_dow_cos",  "ext_price_usd"};

  // Shared covariates.
  std::vector<std::int64_t> ts(hours);
  std::vector<std::vector<double>> ext(out.external_columns.size(),
                                       std::vector<double>(hours));
  Rng weather = make_rng(seed, "data/weather");
  std::normal_distribution<double> unit(0.0, 1.0);
  double anomaly = 0.0;
  for (std::size_t t = 0; t < hours; ++t) {
    const double h = static_cast<double>(t % 24);
    const double day = static_cast<double>(t / 24);
    const double dow = static_cast<double>((t / 24) % 7);
    anomaly = 0.95 * anomaly + 0.8 * unit(weather);
    const double temp = 18.0 + 10.0 * std::sin(kTwoPi * (day - 100.0) / 365.0) +
                        6.0 * std::sin(kTwoPi * (h - 9.0) / 24.0) + anomaly;
    const double peak = std::exp(-(h - 18.0) * (h - 18.0) / 8.0);
    const double price = 40.0 + 15.0 * peak + 0.08 * (temp - 18.0) * (temp - 18.0) +
                         3.0 * unit(weather);
    ts[t] = kSyntheticEpoch + static_cast<std::int64_t>(t) * kHour;
    ext[0][t] = temp;
    ext[1][t] = std::sin(kTwoPi * h / 24.0);
    ext[2][t] = std::cos(kTwoPi * h / 24.0);
    ext[3][t] = std::sin(kTwoPi * dow / 7.0);
    ext[4][t] = std::cos(kTwoPi * dow / 7.0);
    ext[5][t] = price;
  }

  for (const auto& spec : specs) {
    GroupSeries g;
    g.group_id = spec.group_id;
    g.timestamps = ts;
    g.externals = ext;
    g.load.resize(hours);
    Rng noise = make_rng(seed, "data/noise/" + spec.group_id);
    for (std::size_t t = 0; t < hours; ++t) {
      const double h = static_cast<double>(t % 24);
      const double week_hour = static_cast<double>(t % 168);
      double v = spec.base_level * spec.scale_shift + spec.level_shift;
      v += spec.daily_amplitude * std::cos(kTwoPi * (h - spec.shape_phase) / 24.0);
      v += spec.weekly_amplitude * std::cos(kTwoPi * week_hour / 168.0);
      v += spec.temperature_coupling * (ext[0][t] - 18.0);
      v += spec.price_coupling * (ext[5][t] - 40.0);
      v += spec.noise_std * unit(noise);
      g.load[t] = v;
    }
    out.groups.push_back(std::move(g));
  }
  return out;
}

bool is_preset(const std::string& name) { return name == "fig1-like" || name == "flat"; }

std::vector<GroupSpec> preset_specs(const std::string& name) {
  if (name == "fig1-like") {
    GroupSpec res{"residential", 2.0, 0.8, 0.2, 0.15, 0.0, 1.0, 19.0, 0.05, 0.0};
    GroupSpec small{"small_commercial", 8.0, 3.0, 1.5, 0.5, 0.0, 1.0, 13.0, 0.15, 0.01};
    GroupSpec large{"large_commercial", 40.0, 12.0, 8.0, 2.0, 0.0, 1.0, 11.0, 0.8, 0.05};
    return {res, small, large};
  }
  if (name == "flat") {
    GroupSpec flat;
    flat.group_id = "flat";
    flat.base_level = 5.0;
    return {flat};
  }
  throw InputError("unknown preset '" + name + "' (known: fig1-like, flat)");
}

std::vector<GroupSpec> load_group_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open spec file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("spec file '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.contains("preset")) return preset_specs(j.at("preset").get<std::string>());
  if (!j.contains("groups") || !j.at("groups").is_array()) {
    throw InputError("spec file '" + path + "' needs a \"groups\" array or a \"preset\"");
  }
  std::vector<GroupSpec> out;
  try {
    for (const auto& g : j.at("groups")) {
      GroupSpec s;
      s.group_id = g.at("group_id").get<std::string>();
      s.base_level = g.value("base_level", s.base_level);
      s.daily_amplitude = g.value("daily_amplitude", s.daily_amplitude);
      s.weekly_amplitude = g.value("weekly_amplitude", s.weekly_amplitude);
      s.noise_std = g.value("noise_std", s.noise_std);
      s.level_shift = g.value("level_shift", s.level_shift);
      s.scale_shift = g.value("scale_shift", s.scale_shift);
      s.shape_phase = g.value("shape_phase", s.shape_phase);
      s.temperature_coupling = g.value("temperature_coupling", s.temperature_coupling);
      s.price_coupling = g.value("price_coupling", s.price_coupling);
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("spec file '" + path + "': " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_csv(const RawDataset& data, std::ostream& out) {
  out << "timestamp,group_id,load_kw";
  for (const auto& c : data.external_columns) out << ',' << c;
  out << '\n';
  for (const auto& g : data.groups) {
    for (std::size_t t = 0; t < g.size(); ++t) {
      out << format_timestamp(g.timestamps[t]) << ',' << g.group_id << ','
          << format_double(g.load[t]);
      for (const auto& col : g.externals) out << ',' << format_double(col[t]);
      out << '\n';
    }
  }
}

void write_csv(const RawDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_csv(data, out);
  if (!out) throw InputError("failed writing '" + path + "'");
}

RawDataset read_csv(std::istream& in) {
  RawDataset data;
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: missing CSV header");
  auto header = split_fields(trim(line));
  for (auto& h : header) h = trim(h);
  if (header.size() < 3 || header[0] != "timestamp" || header[1] != "group_id" ||
      header[2] != "load_kw") {
    throw DataError("line 1: header must start with timestamp,group_id,load_kw");
  }
  for (std::size_t c = 3; c < header.size(); ++c) {
    if (header[c].rfind("ext_", 0) != 0) {
      throw DataError("line 1: covariate column '" + header[c] +
                      "' must be named ext_<source>_<feature>");
    }
    data.external_columns.push_back(header[c]);
  }
  const std::size_t ncols = data.external_columns.size();

  struct Row {
    std::int64_t ts;
    double load;
    std::vector<double> ext;
  };
  std::map<std::string, std::vector<Row>> by_group;
  std::vector<std::string> order;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(f.size()));
    }
    Row r;
    try {
      r.ts = parse_timestamp(trim(f[0]));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string gid = trim(f[1]);
    if (gid.empty()) throw DataError("line " + std::to_string(line_no) + ": empty group_id");
    if (trim(f[2]).empty()) {
      throw DataError("line " + std::to_string(line_no) + ": missing load_kw value");
    }
    if (!parse_number(trim(f[2]), r.load)) {
      throw DataError("line " + std::to_string(line_no) + ": invalid load_kw '" + f[2] + "'");
    }
    r.ext.resize(ncols);
    for (std::size_t c = 0; c < ncols; ++c) {
      if (!parse_number(trim(f[3 + c]), r.ext[c])) {
        throw DataError("line " + std::to_string(line_no) + ": invalid value '" + f[3 + c] +
                        "' in column " + data.external_columns[c]);
      }
    }
    auto [it, inserted] = by_group.try_emplace(gid);
    if (inserted) order.push_back(gid);
    it->second.push_back(std::move(r));
  }

  for (const auto& gid : order) {
    auto& rows = by_group[gid];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.ts < b.ts; });
    GroupSeries g;
    g.group_id = gid;
    g.externals.assign(ncols, {});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0 && rows[i].ts == rows[i - 1].ts) {
        throw DataError("group '" + gid + "' has duplicate timestamp " +
                        format_timestamp(rows[i].ts));
      }
      if (i > 0 && rows[i].ts - rows[i - 1].ts != kHour) {
        data.gaps.push_back("group '" + gid + "': gap from " +
                            format_timestamp(rows[i - 1].ts) + " to " +
                            format_timestamp(rows[i].ts));
      }
      g.timestamps.push_back(rows[i].ts);
      g.load.push_back(rows[i].load);
      for (std::size_t c = 0; c < ncols; ++c) g.externals[c].push_back(rows[i].ext[c]);
    }
    data.groups.push_back(std::move(g));
  }
  return data;
}

RawDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open data file '" + path + "'");
  return read_csv(in);
}

// ---------------------------------------------------------------------------
// Windows

std::vector<ExternalSource> external_layout(const std::vector<std::string>& columns) {
  std::vector<ExternalSource> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const std::string& name = columns[c];
    const std::size_t sep = name.find('_', 4);
    const std::string source = name.substr(4, sep == std::string::npos ? std::string::npos
                                                                       : sep - 4);
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ExternalSource& s) { return s.name == source; });
    if (it == out.end()) {
      out.push_back({source, {c}});
    } else {
      it->columns.push_back(c);
    }
  }
  return out;
}

void WindowParams::validate() const {
  if (step_width == 0 || context_hours == 0 || horizon_hours == 0 || stride_hours == 0) {
    throw InputError("window lengths must be positive");
  }
  if (context_hours % step_width != 0 || horizon_hours % step_width != 0) {
    throw InputError("context and horizon hours must be multiples of the step width (" +
                     std::to_string(step_width) + ")");
  }
  if (blocks_per_step == 0 || step_width % blocks_per_step != 0) {
    throw InputError("blocks_per_step must divide the step width");
  }
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw InputError("train_fraction must be in (0, 1]");
  }
}

std::size_t window_count(std::size_t hours, const WindowParams& p) {
  const std::size_t span = p.context_hours + p.horizon_hours;
  if (hours < span) return 0;
  return (hours - span) / p.stride_hours + 1;
}

std::size_t training_hour_end(std::size_t hours, const WindowParams& p) {
  const std::size_t n = window_count(hours, p);
  const SplitCounts c = split_counts(n, p.train_fraction, (1.0 - p.train_fraction) / 2.0);
  if (c.train == 0) return hours;
  return (c.train - 1) * p.stride_hours + p.context_hours + p.horizon_hours;
}

NormalizationStats compute_stats(const GroupSeries& s, std::size_t hour_end) {
  NormalizationStats st;
  mean_std(s.load, hour_end, st.load_mean, st.load_std);
  st.ext_mean.resize(s.externals.size());
  st.ext_std.resize(s.externals.size());
  for (std::size_t c = 0; c < s.externals.size(); ++c) {
    mean_std(s.externals[c], hour_end, st.ext_mean[c], st.ext_std[c]);
  }
  return st;
}

NormalizationStats pooled_stats(const std::vector<const GroupSeries*>& series,
                                const WindowParams& params) {
  GroupSeries pooled;
  if (series.empty()) return {};
  pooled.externals.assign(series.front()->externals.size(), {});
  for (const GroupSeries* s : series) {
    const std::size_t end = training_hour_end(s->size(), params);
    pooled.load.insert(pooled.load.end(), s->load.begin(),
                       s->load.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t c = 0; c < pooled.externals.size(); ++c) {
      pooled.externals[c].insert(pooled.externals[c].end(), s->externals[c].begin(),
                                 s->externals[c].begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return compute_stats(pooled, pooled.load.size());
}

WindowedDataset make_windows(const GroupSeries& series, const std::vector<std::string>& columns,
                             const WindowParams& params, const NormalizationStats* stats) {
  params.validate();
  if (series.externals.size() != columns.size()) {
    throw DataError("group '" + series.group_id + "' has " +
                    std::to_string(series.externals.size()) + " covariate columns, expected " +
                    std::to_string(columns.size()));
  }
  const std::size_t span = params.context_hours + params.horizon_hours;
  if (series.size() < span) {
    throw InputError("group '" + series.group_id + "' has " + std::to_string(series.size()) +
                     " hours; windows need at least " + std::to_string(span) +
                     " (context " + std::to_string(params.context_hours) + " + horizon " +
                     std::to_string(params.horizon_hours) + ")");
  }
  check_gap_free(series);

  WindowedDataset ds;
  ds.group_id = series.group_id;
  ds.params = params;
  ds.stats = stats ? *stats : compute_stats(series, training_hour_end(series.size(), params));
  if (ds.stats.ext_mean.size() != columns.size()) {
    throw DataError("normalization stats cover " + std::to_string(ds.stats.ext_mean.size()) +
                    " covariate columns, data has " + std::to_string(columns.size()));
  }
  const auto layout = external_layout(columns);
  ds.source_widths = widths_of(layout, params);

  const std::size_t n = window_count(series.size(), params);
  const std::size_t steps = span / params.step_width;
  const std::size_t d = params.step_width;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = k * params.stride_hours;
    Window w;
    w.group_id = series.group_id;
    w.start_time = series.timestamps[start];
    w.origin_time = series.timestamps[start + params.context_hours];
    w.context_steps = params.context_steps();
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<double> row(d);
      for (std::size_t h = 0; h < d; ++h) {
        row[h] = ds.stats.normalize_load(series.load[start + s * d + h]);
      }
      w.loads.push_back(std::move(row));
      w.externals.push_back(step_externals(series, layout, ds.stats, start + s * d, params));
    }
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

ContextWindow make_context(const GroupSeries& series, const std::vector<std::string>& columns,
                           const WindowParams& params, const NormalizationStats& stats) {
  params.validate();
  if (series.size() < params.context_hours) {
    throw InputError("context for group '" + series.group_id + "' has " +
                     std::to_string(series.size()) + " hours; at least " +
                     std::to_string(params.context_hours) + " are required");
  }
  if (series.externals.size() != columns.size() || stats.ext_mean.size() != columns.size()) {
    throw DataError("context covariate columns do not match the model");
  }
  check_gap_free(series);
  const auto layout = external_layout(columns);
  const std::size_t start = series.size() - params.context_hours;
  const std::size_t d = params.step_width;
  ContextWindow c;
  for (std::size_t s = 0; s < params.context_steps(); ++s) {
    std::vector<double> row(d);
    for (std::size_t h = 0; h < d; ++h) {
      row[h] = stats.normalize_load(series.load[start + s * d + h]);
    }
    c.loads.push_back(std::move(row));
    c.externals.push_back(step_externals(series, layout, stats, start + s * d, params));
  }
  return c;
}

SplitDataset split_chronological(const WindowedDataset& data, SplitFractions f) {
  if (f.train <= 0 || f.validation < 0 || f.test < 0 ||
      std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw ContractError("split fractions must be non-negative, train > 0, and sum to 1");
  }
  const SplitCounts c = split_counts(data.size(), f.train, f.validation);
  SplitDataset out;
  for (WindowedDataset* part : {&out.train, &out.validation, &out.test}) {
    part->group_id = data.group_id;
    part->stats = data.stats;
    part->params = data.params;
    part->source_widths = data.source_widths;
  }
  const auto begin = data.windows.begin();
  out.train.windows.assign(begin, begin + static_cast<std::ptrdiff_t>(c.train));
  out.validation.windows.assign(begin + static_cast<std::ptrdiff_t>(c.train),
                                begin + static_cast<std::ptrdiff_t>(c.train + c.validation));
  out.test.windows.assign(begin + static_cast<std::ptrdiff_t>(c.train + c.validation),
                          data.windows.end());
  if (out.validation.empty()) {
    out.warnings.push_back("group '" + data.group_id + "': validation split is empty");
  }
  if (out.test.empty()) {
    out.warnings.push_back("group '" + data.group_id + "': test split is empty");
  }
  return out;
}

}  // namespace m2gl
