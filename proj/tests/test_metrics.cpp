// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "m2gl/errors.hpp"
#include "m2gl/metrics.hpp"

namespace m2gl::metrics {
namespace {

TEST(Mse, HandCases) {
  const std::vector<double> a{1.5, -2.0, 7.0};
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_EQ(mse(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(mse(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2}), 2.0 / 3.0);
  EXPECT_THROW(mse(std::vector<double>{1, 2}, std::vector<double>{1}), ContractError);
  EXPECT_THROW(mse(std::vector<double>{}, std::vector<double>{}), ContractError);
}

TEST(Crps, AtMeanWithUnitSigma) {
  const double want = 2.0 / std::sqrt(2.0 * std::numbers::pi) - 1.0 / std::sqrt(std::numbers::pi);
  EXPECT_NEAR(crps_gaussian(0.0, 0.0, 1.0), want, 1e-15);
  EXPECT_NEAR(crps_gaussian(0.0, 0.0, 1.0), 0.23370, 1e-5);  // five-decimal value
}

TEST(Crps, ScaleEquivariant) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> pos(0.1, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double y = nd(rng), mu = nd(rng), s = pos(rng), k = pos(rng);
    EXPECT_NEAR(crps_gaussian(k * y, k * mu, k * s), k * crps_gaussian(y, mu, s),
                1e-12 * k * (1.0 + std::abs(y - mu)));
  }
}

TEST(Crps, ShrinksToZeroAtPointMass) {
  EXPECT_LT(crps_gaussian(3.0, 3.0, 1e-9), 1e-9);
}

TEST(Crps, NonPositiveSigmaIsContractError) {
  EXPECT_THROW(crps_gaussian(0, 0, 0.0), ContractError);
  EXPECT_THROW(crps_gaussian(0, 0, -1.0), ContractError);
}

// E|X - y| - 0.5 E|X - X'| with 10^6 draws per triple.
TEST(Crps, MatchesMonteCarloOnRandomTriples) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> sig(0.2, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double y = 2.0 * nd(rng), mu = nd(rng), s = sig(rng);
    const int n = 1000000;
    double a = 0.0, b = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = mu + s * nd(rng);
      const double x2 = mu + s * nd(rng);
      a += std::abs(x - y);
      b += std::abs(x - x2);
    }
    const double mc = a / n - 0.5 * b / n;
    EXPECT_NEAR(crps_gaussian(y, mu, s), mc, 1e-2) << y << " " << mu << " " << s;
  }
}

TEST(Pinball, HandCases) {
  EXPECT_EQ(pinball_point(1.0, 0.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(pinball_point(0.0, 1.0, 0.9), 0.1);
  EXPECT_EQ(pinball_point(2.0, 2.0, 0.3), 0.0);
  EXPECT_THROW(pinball_point(0, 0, 0.0), ContractError);
  EXPECT_THROW(pinball_point(0, 0, 1.0), ContractError);
}

TEST(Pinball, PerfectForecastIsZero) {
  const std::vector<double> y{1, 2, 3};
  const auto q = default_quantiles();
  const std::vector<std::vector<double>> f(q.size(), y);
  EXPECT_EQ(pinball(y, f, q), 0.0);
}

TEST(Pinball, MedianIsHalfMae) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> y(17), f(17);
    double mae = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = nd(rng);
      f[i] = nd(rng);
      mae += std::abs(y[i] - f[i]);
    }
    mae /= static_cast<double>(y.size());
    const std::vector<double> q{0.5};
    EXPECT_EQ(pinball(y, {f}, q), 0.5 * mae);
  }
}

TEST(Winkler, HandCases) {
  EXPECT_EQ(winkler(0.5, 0.0, 1.0, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(winkler(2.0, 0.0, 1.0, 0.1), 21.0);
  EXPECT_DOUBLE_EQ(winkler(-1.0, 0.0, 1.0, 0.1), 21.0);
  EXPECT_EQ(winkler(3.0, 3.0, 3.0, 0.1), 0.0);
  EXPECT_THROW(winkler(0, 1.0, 0.0, 0.1), ContractError);
  EXPECT_THROW(winkler(0, 0.0, 1.0, 1.5), ContractError);
}

TEST(Winkler, AtLeastWidthWithEqualityIffCovered) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 1000; ++i) {
    double lo = nd(rng), hi = nd(rng);
    if (lo > hi) std::swap(lo, hi);
    const double y = 2.0 * nd(rng);
    const double w = winkler(y, lo, hi, 0.1);
    const bool covered = y >= lo && y <= hi;
    EXPECT_GE(w, hi - lo);
    EXPECT_EQ(w == hi - lo, covered);
  }
}

TEST(Quantile, InverseOfCdf) {
  for (double p : {0.05, 0.1, 0.5, 0.9, 0.975}) {
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-14);
  }
  EXPECT_NEAR(normal_quantile(0.95), 1.6448536269514722, 1e-13);
  EXPECT_THROW(normal_quantile(1.0), ContractError);
}

TEST(Accumulator, PerfectNearPointForecasts) {
  ScoreAccumulator acc;
  for (int i = 0; i < 10; ++i) acc.add(2.0, 2.0, 1e-12);
  const auto r = acc.report("m", "GL");
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_LT(r.quantile_loss, 1e-11);
  EXPECT_LT(r.crps, 1e-11);
  EXPECT_EQ(r.count, 10u);
}

TEST(Accumulator, PermutationInvariant) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  std::vector<std::array<double, 3>> rows(50);
  for (auto& r : rows) r = {nd(rng), nd(rng), 0.1 + std::abs(nd(rng))};
  auto run = [&](const std::vector<std::array<double, 3>>& v) {
    ScoreAccumulator acc;
    for (const auto& r : v) acc.add(r[0], r[1], r[2]);
    return acc.report("m", "v");
  };
  const auto a = run(rows);
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto b = run(rows);
  EXPECT_NEAR(a.mse, b.mse, 1e-13);
  EXPECT_NEAR(a.crps, b.crps, 1e-13);
  EXPECT_NEAR(a.quantile_loss, b.quantile_loss, 1e-13);
  EXPECT_NEAR(a.winkler, b.winkler, 1e-12);
}

TEST(Accumulator, QuantilesFromGaussianHeads) {
  // One observation: quantile forecasts are mu + sigma * z_q.
  ScoreAccumulator acc({0.9}, 0.1);
  acc.add(0.0, 0.0, 2.0);
  const double f = 2.0 * normal_quantile(0.9);
  EXPECT_DOUBLE_EQ(acc.report("m", "v").quantile_loss, pinball_point(0.0, f, 0.9));
  const double z = normal_quantile(0.95);
  EXPECT_DOUBLE_EQ(acc.report("m", "v").winkler, 4.0 * z);
}

TEST(Report, ReductionArithmetic) {
  ScoreReport gl{"m", "GL", 0.6, 0.3, 0.2, 4.0, 5, 1.0};
  ScoreReport base{"m", "Base", 1.0, 0.5, 0.25, 8.0, 5, 1.0};
  const auto r = relative_reduction(gl, base);
  EXPECT_DOUBLE_EQ(r.mse, 0.4);
  EXPECT_DOUBLE_EQ(r.crps, 0.4);
  EXPECT_DOUBLE_EQ(r.quantile_loss, 0.2);
  EXPECT_DOUBLE_EQ(r.winkler, 0.5);
  EXPECT_EQ(r.variant, "reduction");
}

TEST(Report, CsvAndJsonColumnOrder) {
  ReportTable t;
  t.rows = {{"m", "GL", 1, 2, 3, 4, 1, 1.0}, {"m", "Base", 5, 6, 7, 8, 1, 100.0}};
  std::ostringstream csv;
  t.write_csv(csv);
  std::istringstream in(csv.str());
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "model,variant,mse,crps,quantile_loss,winkler");
  EXPECT_EQ(first, "m,GL,1,2,3,4");
  EXPECT_EQ(second, "m,Base,500,600,700,800");
  const auto j = nlohmann::ordered_json::parse(t.to_json());
  ASSERT_EQ(j.size(), 2u);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j[0].items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"model", "variant", "mse", "crps", "quantile_loss",
                                            "winkler"}));
}

}  // namespace
}  // namespace m2gl::metrics
