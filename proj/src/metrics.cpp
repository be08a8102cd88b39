// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "m2gl/errors.hpp"

namespace m2gl::metrics {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> mu) {
  if (y.size() != mu.size() || y.empty()) {
    throw ContractError("mse needs equal, non-empty series (got " + std::to_string(y.size()) +
                        " and " + std::to_string(mu.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - mu[i]) * (y[i] - mu[i]);
  return s / static_cast<double>(y.size());
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("quantile level must be in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double crps_gaussian(double y, double mu, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("crps_gaussian needs sigma > 0");
  const double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) -
                  1.0 / std::sqrt(std::numbers::pi));
}

double pinball_point(double y, double forecast, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ContractError("quantile " + fmt(q) + " is outside (0, 1)");
  const double e = y - forecast;
  return std::max(q * e, (q - 1.0) * e);
}

double pinball(std::span<const double> y, const std::vector<std::vector<double>>& q_forecasts,
               std::span<const double> quantiles) {
  if (q_forecasts.size() != quantiles.size() || y.empty() || quantiles.empty()) {
    throw ContractError("pinball needs one forecast series per quantile");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < quantiles.size(); ++k) {
    if (q_forecasts[k].size() != y.size()) {
      throw ContractError("quantile forecast series length does not match targets");
    }
    for (std::size_t t = 0; t < y.size(); ++t) {
      s += pinball_point(y[t], q_forecasts[k][t], quantiles[k]);
    }
  }
  return s / static_cast<double>(y.size() * quantiles.size());
}

double winkler(double y, double lower, double upper, double alpha_w) {
  if (lower > upper) throw ContractError("winkler: lower bound exceeds upper bound");
  if (!(alpha_w > 0.0 && alpha_w < 1.0)) throw ContractError("winkler: alpha must be in (0, 1)");
  double score = upper - lower;
  if (y < lower) score += (2.0 / alpha_w) * (lower - y);
  if (y > upper) score += (2.0 / alpha_w) * (y - upper);
  return score;
}

std::vector<double> default_quantiles() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

ScoreAccumulator::ScoreAccumulator(std::vector<double> quantiles, double winkler_alpha)
    : quantiles_(std::move(quantiles)), winkler_alpha_(winkler_alpha) {
  for (double q : quantiles_) z_quantiles_.push_back(normal_quantile(q));
  winkler_z_ = normal_quantile(1.0 - winkler_alpha_ / 2.0);
}

void ScoreAccumulator::add(double y, double mu, double sigma) {
  sum_se_ += (y - mu) * (y - mu);
  sum_crps_ += crps_gaussian(y, mu, sigma);
  double pin = 0.0;
  for (std::size_t k = 0; k < quantiles_.size(); ++k) {
    pin += pinball_point(y, mu + sigma * z_quantiles_[k], quantiles_[k]);
  }
  sum_pinball_ += pin / static_cast<double>(quantiles_.size());
  sum_winkler_ += winkler(y, mu - winkler_z_ * sigma, mu + winkler_z_ * sigma, winkler_alpha_);
  ++count_;
}

void ScoreAccumulator::add(std::span<const double> y, std::span<const double> mu,
                           std::span<const double> variance) {
  if (y.size() != mu.size() || y.size() != variance.size()) {
    throw ContractError("score inputs have mismatched lengths");
  }
  for (std::size_t i = 0; i < y.size(); ++i) add(y[i], mu[i], std::sqrt(variance[i]));
}

ScoreReport ScoreAccumulator::report(std::string model, std::string variant) const {
  ScoreReport r;
  r.model = std::move(model);
  r.variant = std::move(variant);
  r.count = count_;
  if (count_ == 0) return r;
  const double n = static_cast<double>(count_);
  r.mse = sum_se_ / n;
  r.crps = sum_crps_ / n;
  r.quantile_loss = sum_pinball_ / n;
  r.winkler = sum_winkler_ / n;
  return r;
}

ScoreReport relative_reduction(const ScoreReport& gl, const ScoreReport& base) {
  auto rel = [](double g, double b) { return b != 0.0 ? (b - g) / b : 0.0; };
  ScoreReport r;
  r.model = gl.model;
  r.variant = "reduction";
  r.mse = rel(gl.mse, base.mse);
  r.crps = rel(gl.crps, base.crps);
  r.quantile_loss = rel(gl.quantile_loss, base.quantile_loss);
  r.winkler = rel(gl.winkler, base.winkler);
  r.count = gl.count;
  return r;
}

void ReportTable::write_csv(std::ostream& out) const {
  out << "model,variant,mse,crps,quantile_loss,winkler";
  for (const auto& c : extra_columns) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << r.model << ',' << r.variant << ',' << fmt(r.mse * r.scale) << ','
        << fmt(r.crps * r.scale) << ',' << fmt(r.quantile_loss * r.scale) << ','
        << fmt(r.winkler * r.scale);
    if (i < extra_values.size()) {
      for (const auto& v : extra_values[i]) out << ',' << v;
    }
    out << '\n';
  }
}

std::string ReportTable::to_json() const {
  nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["variant"] = r.variant;
    j["mse"] = r.mse * r.scale;
    j["crps"] = r.crps * r.scale;
    j["quantile_loss"] = r.quantile_loss * r.scale;
    j["winkler"] = r.winkler * r.scale;
    if (i < extra_values.size()) {
      for (std::size_t c = 0; c < extra_columns.size() && c < extra_values[i].size(); ++c) {
        j[extra_columns[c]] = extra_values[i][c];
      }
    }
    rows_json.push_back(std::move(j));
  }
  return rows_json.dump(2);
}

}  // namespace m2gl::metrics
