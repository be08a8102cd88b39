// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "m2gl/errors.hpp"
#include "m2gl/persistence.hpp"
#include "m2gl/pipeline.hpp"
#include "test_util.hpp"

namespace m2gl {
namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.finetune_epochs = 2;
  c.batch_size = 8;
  c.seed = 11;
  return c;
}

const PreparedData& toy_data() {
  static const PreparedData data = [] {
    const auto raw = generate_synthetic(preset_specs("fig1-like"), 60, 3);
    return prepare_data(raw, quick_config(), NormalizationMode::kPerGroup);
  }();
  return data;
}

const PretrainResult& toy_backbone() {
  static const PretrainResult r =
      pretrain(toy_data().groups, default_model_config(toy_data()), quick_config());
  return r;
}

ContextWindow first_test_context(const GroupData& g) {
  return ContextWindow::from_window(g.test.windows.front());
}

TEST(TrainConfig, DefaultsValidateAndRoundTrip) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.seed = 42;
  c.composition = BatchComposition::kGroupBalanced;
  c.optimizer = OptimizerMode::kSgd;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  TrainConfig d = c;
  d.seed = 43;
  EXPECT_NE(d.hash(), c.hash());
}

TEST(TrainConfig, InvalidValuesAreInputErrors) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](TrainConfig& c) { c.batch_size = 0; }).validate(), InputError);
  EXPECT_THROW(bad([](TrainConfig& c) { c.learning_rate = 0.0; }).validate(), InputError);
  EXPECT_THROW(bad([](TrainConfig& c) { c.lambda = -1.0; }).validate(), InputError);
  EXPECT_THROW(bad([](TrainConfig& c) { c.context_hours = 100; }).validate(), InputError);
  EXPECT_THROW(TrainConfig::from_json({{"epochs", "many"}}), InputError);
}

TEST(EnumNames, RoundTrip) {
  for (auto c : {BatchComposition::kUniform, BatchComposition::kGroupBalanced}) {
    EXPECT_EQ(batch_composition_from_string(to_string(c)), c);
  }
  for (auto m : {NormalizationMode::kPerGroup, NormalizationMode::kGlobal}) {
    EXPECT_EQ(normalization_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(batch_composition_from_string("random"), InputError);
}

TEST(TrainingLog, JsonLinesWithOrderedKeys) {
  std::ostringstream sink;
  TrainingLog log(&sink);
  log.record("pretrain", 1, "", 2.5);
  log.record("finetune", 2, "office", 1.25);
  std::istringstream in(sink.str());
  std::string a, b;
  std::getline(in, a);
  std::getline(in, b);
  const auto ja = nlohmann::ordered_json::parse(a);
  const auto jb = nlohmann::ordered_json::parse(b);
  std::vector<std::string> keys;
  for (const auto& [k, v] : jb.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"phase", "step", "group_id", "loss", "timestamp"}));
  EXPECT_FALSE(ja.contains("group_id"));
  EXPECT_EQ(jb["loss"], 1.25);
  EXPECT_EQ(log.records().size(), 2u);
  EXPECT_EQ(ja["timestamp"].get<std::string>().back(), 'Z');
}

TEST(PrepareData, GroupsAndSplits) {
  const auto& d = toy_data();
  ASSERT_EQ(d.groups.size(), 3u);
  for (const auto& g : d.groups) {
    // 60 days at stride 24 with 8-day windows -> 53 windows -> 42/5/6.
    EXPECT_EQ(g.train.size() + g.validation.size() + g.test.size(), 53u);
    EXPECT_FALSE(g.test.empty());
  }
  EXPECT_THROW(d.group("nope"), InputError);
  EXPECT_EQ(default_model_config(d).source_widths, (std::vector<std::size_t>{4, 8, 8, 4}));
}

TEST(PrepareData, GlobalModeUsesGivenStats) {
  const auto raw = generate_synthetic(preset_specs("fig1-like"), 30, 3);
  NormalizationStats s = toy_data().groups[0].train.stats;
  s.load_mean = 1.0;
  s.load_std = 2.0;
  const auto d = prepare_data(raw, quick_config(), NormalizationMode::kGlobal, &s);
  for (const auto& g : d.groups) {
    EXPECT_EQ(g.train.stats.load_mean, 1.0);
    EXPECT_EQ(g.train.stats.load_std, 2.0);
  }
}

TEST(Pretrain, LossDecreasesOverEpochs) {
  const auto& h = toy_backbone().history;
  ASSERT_EQ(h.train_loss.size(), 2u);
  EXPECT_LT(h.train_loss[1], h.train_loss[0]);
  EXPECT_EQ(h.validation_loss.size(), 2u);
  EXPECT_GT(h.steps, 0u);
}

TEST(Pretrain, SameSeedIsBitwiseReproducible) {
  TrainConfig c = quick_config();
  c.epochs = 1;
  std::vector<GroupData> one{toy_data().groups[0]};
  const auto a = pretrain(one, default_model_config(toy_data()), c);
  const auto b = pretrain(one, default_model_config(toy_data()), c);
  EXPECT_EQ(a.backbone.content_hash(), b.backbone.content_hash());
  c.seed = 12;
  const auto d = pretrain(one, default_model_config(toy_data()), c);
  EXPECT_NE(a.backbone.content_hash(), d.backbone.content_hash());
}

TEST(Pretrain, LogsEveryStep) {
  TrainConfig c = quick_config();
  c.epochs = 1;
  TrainingLog log;
  std::vector<GroupData> one{toy_data().groups[0]};
  const auto r = pretrain(one, default_model_config(toy_data()), c, &log);
  std::size_t train_records = 0;
  for (const auto& rec : log.records()) {
    if (rec.phase == "pretrain") ++train_records;
  }
  // 42 windows in batches of 8.
  EXPECT_EQ(train_records, 6u);
  EXPECT_EQ(r.history.steps, 6u);
}

TEST(Pretrain, EmptyDatasetIsInputError) {
  std::vector<GroupData> none;
  EXPECT_THROW(pretrain(none, default_model_config(toy_data()), quick_config()), InputError);
}

TEST(Finetune, BackboneIsNeverWritten) {
  const Backbone& b = toy_backbone().backbone;
  const std::string before = b.content_hash();
  const auto r = finetune_group(b, toy_data().groups[0], LoraTarget::kOutputMatrix, 4, 4,
                                quick_config());
  EXPECT_EQ(b.content_hash(), before);
  EXPECT_EQ(r.adapter.backbone_hash, before);
  EXPECT_EQ(r.adapter.group_id, toy_data().groups[0].group_id);
  ASSERT_TRUE(r.adapter.normalization.has_value());
  EXPECT_EQ(r.adapter.normalization->load_mean, toy_data().groups[0].train.stats.load_mean);
}

TEST(Finetune, FactorsMoveAndBStartsAtZero) {
  const Backbone& b = toy_backbone().backbone;
  const auto r = finetune_group(b, toy_data().groups[1], LoraTarget::kOutputMatrix, 4, 4,
                                quick_config());
  double norm = 0.0;
  for (const auto& f : r.adapter.factors) {
    for (double v : f.b.data()) norm += v * v;
  }
  EXPECT_GT(norm, 0.0);
}

TEST(Finetune, ZeroEpochsIsTheBackbone) {
  const Backbone& b = toy_backbone().backbone;
  TrainConfig c = quick_config();
  c.finetune_epochs = 0;
  const auto& g = toy_data().groups[2];
  const auto r = finetune_group(b, g, LoraTarget::kHiddenTransitionMatrix, 2, 2, c);
  for (const auto& f : r.adapter.factors) {
    for (double v : f.b.data()) EXPECT_EQ(v, 0.0);
  }
  ForecasterFamily fam(b, toy_data().params);
  fam.add_adapter(r.adapter);
  const auto ctx = first_test_context(g);
  const auto routed = predict(fam, g.group_id, ctx, 1);
  const auto base = forecast(b, ctx, 7, 1);
  EXPECT_EQ(routed.mean, base.mean);
  EXPECT_EQ(routed.variance, base.variance);
}

TEST(Finetune, ParallelMatchesSequential) {
  const Backbone& b = toy_backbone().backbone;
  std::vector<const GroupData*> gs;
  for (const auto& g : toy_data().groups) gs.push_back(&g);
  TrainConfig c = quick_config();
  c.finetune_epochs = 1;
  const auto seq = finetune_groups(b, gs, LoraTarget::kOutputMatrix, 2, 2, c, 1);
  const auto par = finetune_groups(b, gs, LoraTarget::kOutputMatrix, 2, 2, c, 3);
  ASSERT_EQ(seq.size(), 3u);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq[i].adapter.group_id, gs[i]->group_id);
    EXPECT_EQ(serialize_adapter(seq[i].adapter), serialize_adapter(par[i].adapter));
  }
}

class FamilyTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto& d = toy_data();
    family_ = new ForecasterFamily(toy_backbone().backbone, d.params);
    std::vector<const GroupData*> gs{&d.groups[0], &d.groups[1]};
    for (auto& r : finetune_groups(toy_backbone().backbone, gs, LoraTarget::kOutputMatrix, 4, 4,
                                   quick_config(), 2)) {
      family_->add_adapter(std::move(r.adapter));
    }
  }
  static void TearDownTestSuite() {
    delete family_;
    family_ = nullptr;
  }
  static ForecasterFamily* family_;
};
ForecasterFamily* FamilyTest::family_ = nullptr;

TEST_F(FamilyTest, RoutesToTheGroupAdapter) {
  const auto& g = toy_data().groups[0];
  const auto ctx = first_test_context(g);
  const auto via_family = predict(*family_, g.group_id, ctx, 2);
  const auto& ov = family_->overrides(g.group_id);
  const auto direct = forecast(family_->backbone(), ctx, 7, 2, &ov);
  EXPECT_EQ(via_family.mean, direct.mean);
  EXPECT_FALSE(via_family.used_fallback);
  EXPECT_TRUE(via_family.warnings.empty());
}

TEST_F(FamilyTest, DifferentAdaptersGiveDifferentForecasts) {
  const auto ctx = first_test_context(toy_data().groups[0]);
  const auto a = predict(*family_, toy_data().groups[0].group_id, ctx, 1);
  const auto b = predict(*family_, toy_data().groups[1].group_id, ctx, 1);
  EXPECT_NE(a.mean, b.mean);
}

TEST_F(FamilyTest, MergedAgreesWithRouted) {
  const auto& g = toy_data().groups[1];
  const auto ctx = first_test_context(g);
  const auto routed = predict(*family_, g.group_id, ctx, 3);
  const auto merged =
      forecast(merge(family_->backbone(), family_->adapters().at(g.group_id)), ctx, 7, 3);
  for (std::size_t i = 0; i < routed.mean.size(); ++i) {
    EXPECT_NEAR(routed.mean[i], merged.mean[i], 1e-12);
    EXPECT_NEAR(routed.variance[i], merged.variance[i], 1e-12);
  }
}

TEST_F(FamilyTest, UnknownGroupRaisesOrFallsBack) {
  const auto& g = toy_data().groups[2];
  const auto ctx = first_test_context(g);
  EXPECT_THROW(predict(*family_, g.group_id, ctx, 1), RoutingError);
  PredictOptions opt;
  opt.allow_fallback = true;
  const auto f = predict(*family_, g.group_id, ctx, 1, opt);
  EXPECT_TRUE(f.used_fallback);
  ASSERT_EQ(f.warnings.size(), 1u);
  EXPECT_NE(f.warnings[0].find(g.group_id), std::string::npos);
  EXPECT_EQ(f.mean, forecast(family_->backbone(), ctx, 7, 1).mean);
}

TEST_F(FamilyTest, DuplicateOrIncompatibleAdapterRejected) {
  ForecasterFamily fam(toy_backbone().backbone, toy_data().params);
  auto a = family_->adapters().begin()->second.clone();
  fam.add_adapter(a.clone());
  EXPECT_THROW(fam.add_adapter(a.clone()), InputError);
  ModelConfig small = default_model_config(toy_data());
  small.latent_width = 8;
  auto wrong = init_adapter(Backbone(small, 1), LoraTarget::kOutputMatrix, 2, 2, 1, "x");
  EXPECT_THROW(fam.add_adapter(std::move(wrong)), CompatibilityError);
}

TEST_F(FamilyTest, SampledModeIsSeedDeterministic) {
  const auto& g = toy_data().groups[0];
  const auto ctx = first_test_context(g);
  PredictOptions opt;
  opt.forecast.mode = InferenceMode::kSampled;
  opt.forecast.noise_seed = 5;
  const auto a = predict(*family_, g.group_id, ctx, 2, opt);
  const auto b = predict(*family_, g.group_id, ctx, 2, opt);
  EXPECT_EQ(a.mean, b.mean);
  opt.forecast.noise_seed = 6;
  EXPECT_NE(predict(*family_, g.group_id, ctx, 2, opt).mean, a.mean);
}

TEST(Evaluate, GlVsBaseRows) {
  const auto& g = toy_data().groups[0];
  const auto r = finetune_group(toy_backbone().backbone, g, LoraTarget::kOutputMatrix, 2, 2,
                                quick_config());
  const auto t = evaluate_gl_vs_base(toy_backbone().backbone, r.adapter, g.test);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].variant, "GL");
  EXPECT_EQ(t.rows[1].variant, "Base");
  EXPECT_EQ(t.rows[2].variant, "reduction");
  EXPECT_DOUBLE_EQ(t.rows[2].mse, (t.rows[1].mse - t.rows[0].mse) / t.rows[1].mse);
  // Every horizon value of every test window is scored.
  EXPECT_EQ(t.rows[0].count, g.test.size() * 24);
  const auto base = evaluate(toy_backbone().backbone, nullptr, g.test, "m2oe2", "Base");
  EXPECT_EQ(base.mse, t.rows[1].mse);
}

TEST(Ablation, ThreeArmsWithIdenticalBudgets) {
  TrainConfig c = quick_config();
  c.finetune_epochs = 1;
  const auto rows = ablate_targets(toy_backbone().backbone, toy_data().groups[0], 4, c);
  ASSERT_EQ(rows.size(), 3u);
  std::set<LoraTarget> targets;
  for (const auto& r : rows) {
    targets.insert(r.target);
    EXPECT_EQ(r.config_hash, rows[0].config_hash);
    EXPECT_TRUE(std::isfinite(r.scores.mse));
  }
  EXPECT_EQ(targets.size(), 3u);
  EXPECT_EQ(ablation_table(rows).rows.size(), 3u);
}

TEST(RankSweep, ElevenArmsWithIncreasingCost) {
  TrainConfig c = quick_config();
  c.finetune_epochs = 1;
  std::vector<std::size_t> ranks{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto rows = rank_sweep(toy_backbone().backbone, toy_data().groups[0], ranks, true, c);
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows.back().label, "full");
  EXPECT_EQ(rows.back().rank, 16u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].trainable_params, rows[i].rank * 2 * (24 + 16));
    EXPECT_EQ(rows[i].payload_bytes, rows[i].trainable_params * 8);
    EXPECT_GT(rows[i].adapter_bytes, rows[i].payload_bytes);
    if (i > 0) {
      EXPECT_GT(rows[i].trainable_params, rows[i - 1].trainable_params);
      EXPECT_GT(rows[i].adapter_bytes, rows[i - 1].adapter_bytes);
    }
  }
  EXPECT_EQ(rank_sweep_table(rows).rows.size(), 11u);
}

TEST(ShiftBenchmark, HeldOutGroupIsShiftedResidential) {
  const auto s = make_shift_benchmark(1, 30);
  EXPECT_EQ(s.pretrain_data.groups.size(), 3u);
  ASSERT_EQ(s.heldout_data.groups.size(), 1u);
  EXPECT_EQ(s.heldout_group, s.heldout_data.groups[0].group_id);
  EXPECT_EQ(s.pretrain_data.find(s.heldout_group), nullptr);
  const auto* res = s.pretrain_data.find("residential");
  ASSERT_NE(res, nullptr);
  double mean_res = 0.0, mean_held = 0.0;
  for (std::size_t i = 0; i < res->load.size(); ++i) {
    mean_res += res->load[i];
    mean_held += s.heldout_data.groups[0].load[i];
  }
  // +2 noise sd on a 0.15 noise sd, sharing weather and seed.
  EXPECT_NEAR((mean_held - mean_res) / static_cast<double>(res->load.size()), 0.3, 0.05);
}

}  // namespace
}  // namespace m2gl
