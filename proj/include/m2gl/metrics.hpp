// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace m2gl::metrics {

/// Mean squared error.
double mse(std::span<const double> y, std::span<const double> mu);

/// Closed-form CRPS of N(mu, sigma^2) at y:
///   sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)),  z = (y - mu) / sigma
double crps_gaussian(double y, double mu, double sigma);

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

/// Pinball loss of a single quantile forecast.
double pinball_point(double y, double forecast, double q);

/// Mean over steps and quantiles. q_forecasts[k][t] is the forecast for
/// quantile quantiles[k] at step t.
double pinball(std::span<const double> y, const std::vector<std::vector<double>>& q_forecasts,
               std::span<const double> quantiles);

/// Interval score for a central (1 - alpha_w) interval.
double winkler(double y, double lower, double upper, double alpha_w);

/// Default evaluation levels: quantiles 0.1..0.9 and a 90% central interval.
std::vector<double> default_quantiles();
inline constexpr double kDefaultWinklerAlpha = 0.1;

/// Per-metric means over an evaluation set.
struct ScoreReport {
  std::string model;
  std::string variant;
  double mse = 0.0;
  double crps = 0.0;
  double quantile_loss = 0.0;
  double winkler = 0.0;
  std::size_t count = 0;
  double scale = 1.0;  // presentation factor, e.g. 100 for "x1e-2" tables
};

/// Streams Gaussian forecasts and truth values into the four scores.
class ScoreAccumulator {
 public:
  explicit ScoreAccumulator(std::vector<double> quantiles = default_quantiles(),
                            double winkler_alpha = kDefaultWinklerAlpha);

  void add(double y, double mu, double sigma);
  void add(std::span<const double> y, std::span<const double> mu,
           std::span<const double> variance);
  ScoreReport report(std::string model, std::string variant) const;

 private:
  std::vector<double> quantiles_;
  std::vector<double> z_quantiles_;
  double winkler_alpha_;
  double winkler_z_;
  double sum_se_ = 0.0, sum_crps_ = 0.0, sum_pinball_ = 0.0, sum_winkler_ = 0.0;
  std::size_t count_ = 0;
};

/// Relative reduction (base - gl) / base per metric.
ScoreReport relative_reduction(const ScoreReport& gl, const ScoreReport& base);

/// Fixed column order: model,variant,mse,crps,quantile_loss,winkler followed
/// by any extra columns.
struct ReportTable {
  std::vector<ScoreReport> rows;
  std::vector<std::string> extra_columns;
  std::vector<std::vector<std::string>> extra_values;  // one per row

  void write_csv(std::ostream& out) const;
  std::string to_json() const;
};

}  // namespace m2gl::metrics
