// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "m2gl/errors.hpp"
#include "m2gl/optim.hpp"

namespace m2gl {
namespace {

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  for (auto mode : {OptimizerMode::kAdam, OptimizerMode::kSgd}) {
    Tensor p = Tensor::vector({1.5, -2.0}, true);
    Optimizer opt({{"p", p}}, {mode, 0.1});
    sum(scale(p, 0.0)).backward();
    opt.step();
    EXPECT_EQ(p[0], 1.5);
    EXPECT_EQ(p[1], -2.0);
  }
}

TEST(Optimizer, SgdOneStep) {
  Tensor p = Tensor::scalar(1.0, true);
  Optimizer opt({{"p", p}}, {OptimizerMode::kSgd, 0.1});
  p.backward();  // d p / d p = 1
  opt.step();
  EXPECT_DOUBLE_EQ(p.item(), 0.9);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  // With bias correction the first step is lr * g / (|g| + eps').
  Tensor p = Tensor::scalar(2.0, true);
  Optimizer opt({{"p", p}}, {OptimizerMode::kAdam, 0.01});
  scale(p, 3.0).backward();
  opt.step();
  EXPECT_NEAR(p.item(), 2.0 - 0.01, 1e-9);
  EXPECT_EQ(opt.state().step_count, 1u);
}

TEST(Optimizer, QuadraticBowlConverges) {
  Tensor p = Tensor::scalar(5.0, true);
  Optimizer opt({{"theta", p}}, {OptimizerMode::kAdam, 0.1});
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    square(p).backward();
    opt.step();
  }
  EXPECT_LT(std::abs(p.item()), 1e-2);
}

TEST(Optimizer, StepCountIncrementsAndMomentsAlign) {
  Tensor a = Tensor::zeros({2, 3}, true);
  Tensor b = Tensor::zeros({4}, true);
  Optimizer opt({{"a", a}, {"b", b}}, {});
  for (std::uint64_t k = 1; k <= 3; ++k) {
    opt.zero_grad();
    add(sum(square(a)), sum(b)).backward();
    opt.step();
    EXPECT_EQ(opt.state().step_count, k);
  }
  EXPECT_EQ(opt.state().first_moment[0].size(), 6u);
  EXPECT_EQ(opt.state().second_moment[1].size(), 4u);
}

TEST(Optimizer, NanGradientPoisonsAndNamesParameter) {
  Tensor good = Tensor::vector({1.0}, true);
  Tensor bad = Tensor::vector({1.0}, true);
  Optimizer opt({{"good", good}, {"decoder.mean_weight", bad}}, {OptimizerMode::kSgd, 0.1});
  sum(good).backward();
  bad.node()->ensure_grad();
  bad.node()->grad[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step();
    FAIL() << "expected PoisonedStateError";
  } catch (const PoisonedStateError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.mean_weight"), std::string::npos);
  }
  EXPECT_EQ(good[0], 1.0);  // nothing applied
}

TEST(Optimizer, RejectsNonPositiveRate) {
  Tensor p = Tensor::scalar(1.0, true);
  EXPECT_THROW(Optimizer({{"p", p}}, {OptimizerMode::kAdam, 0.0}), Error);
}

TEST(Optimizer, ModeNames) {
  EXPECT_EQ(optimizer_mode_from_string("sgd"), OptimizerMode::kSgd);
  EXPECT_EQ(optimizer_mode_from_string(to_string(OptimizerMode::kAdam)), OptimizerMode::kAdam);
  EXPECT_THROW(optimizer_mode_from_string("lbfgs"), InputError);
}

}  // namespace
}  // namespace m2gl
