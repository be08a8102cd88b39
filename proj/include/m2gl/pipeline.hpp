// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "m2gl/data.hpp"
#include "m2gl/lora.hpp"
#include "m2gl/metrics.hpp"
#include "m2gl/optim.hpp"
#include "m2gl/vae.hpp"

namespace m2gl {

enum class BatchComposition { kUniform, kGroupBalanced };
enum class NormalizationMode { kPerGroup, kGlobal };

std::string to_string(BatchComposition c);
BatchComposition batch_composition_from_string(const std::string& text);
std::string to_string(NormalizationMode m);
NormalizationMode normalization_mode_from_string(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 50;           // phase 1 cap
  std::size_t finetune_epochs = 30;  // phase 2 cap
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double finetune_rate = 1e-3;
  double lambda = 0.1;
  std::uint64_t seed = 0;
  OptimizerMode optimizer = OptimizerMode::kAdam;
  std::size_t patience = 5;  // epochs without validation improvement; 0 disables
  BatchComposition composition = BatchComposition::kUniform;
  std::size_t context_hours = 168;
  std::size_t horizon_hours = 24;
  std::size_t stride_hours = 24;

  void validate() const;
  WindowParams window_params() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  /// Hex SHA-256 of the canonical JSON; identical configs hash identically.
  std::string hash() const;
};

// ---------------------------------------------------------------------------
// Logging

struct LogRecord {
  std::string phase;
  std::size_t step = 0;
  std::string group_id;  // empty for pooled phases
  double loss = 0.0;
  std::string timestamp;
};

/// Collects line-delimited JSON records {phase, step, group_id?, loss, timestamp}
/// and optionally mirrors them to a stream. Thread-safe.
class TrainingLog {
 public:
  explicit TrainingLog(std::ostream* sink = nullptr) : sink_(sink) {}

  void record(const std::string& phase, std::size_t step, const std::string& group_id,
              double loss);
  std::vector<LogRecord> records() const;
  static std::string to_json_line(const LogRecord& r);

 private:
  mutable std::mutex mutex_;
  std::ostream* sink_;
  std::vector<LogRecord> records_;
};

// ---------------------------------------------------------------------------
// Data preparation

/// Chronological train/validation/test windows of one group.
struct GroupData {
  std::string group_id;
  WindowedDataset train;
  WindowedDataset validation;
  WindowedDataset test;
};

struct PreparedData {
  std::vector<std::string> external_columns;
  WindowParams params;
  NormalizationMode mode = NormalizationMode::kPerGroup;
  NormalizationStats global_stats;
  std::vector<GroupData> groups;
  std::vector<std::string> warnings;

  const GroupData& group(const std::string& group_id) const;
};

/// Windows and splits every group of `raw`. In per-group mode each group is
/// normalized by its own training hours; in global mode by `global_stats`
/// when given, else by the pooled training hours of `raw`.
PreparedData prepare_data(const RawDataset& raw, const TrainConfig& config,
                          NormalizationMode mode,
                          const NormalizationStats* global_stats = nullptr);

/// Model shape matching prepared data, with the default widths.
ModelConfig default_model_config(const PreparedData& data);

// ---------------------------------------------------------------------------
// Phases

struct TrainingHistory {
  std::vector<double> train_loss;       // mean per-window loss per epoch
  std::vector<double> validation_loss;  // empty when there is no validation data
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

struct PretrainResult {
  Backbone backbone;
  TrainingHistory history;
};

/// Phase 1: mini-batch negative-ELBO training over the union of all groups.
PretrainResult pretrain(const std::vector<GroupData>& groups, const ModelConfig& model,
                        const TrainConfig& config, TrainingLog* log = nullptr);

struct FinetuneResult {
  LoraAdapter adapter;
  TrainingHistory history;
};

/// Phase 2: trains only the adapter factors on one group; the backbone is
/// read through a frozen copy and never written.
FinetuneResult finetune_group(const Backbone& backbone, const GroupData& group,
                              LoraTarget target, std::size_t rank, double alpha,
                              const TrainConfig& config, TrainingLog* log = nullptr);

/// Phase 2 for many groups, `parallel_groups` at a time. Results follow input order
/// and do not depend on the degree of parallelism.
std::vector<FinetuneResult> finetune_groups(const Backbone& backbone,
                                            const std::vector<const GroupData*>& groups,
                                            LoraTarget target, std::size_t rank, double alpha,
                                            const TrainConfig& config,
                                            std::size_t parallel_groups,
                                            TrainingLog* log = nullptr);

/// Shared backbone plus one adapter per group (phase 3 serving state).
class ForecasterFamily {
 public:
  ForecasterFamily(Backbone backbone, WindowParams params);

  /// Rejects duplicate group ids and adapters that do not fit the backbone.
  void add_adapter(LoraAdapter adapter);

  const Backbone& backbone() const { return backbone_; }
  const WindowParams& params() const { return params_; }
  const std::map<std::string, LoraAdapter>& adapters() const { return adapters_; }
  bool has_group(const std::string& group_id) const { return adapters_.count(group_id) > 0; }
  const WeightOverrides& overrides(const std::string& group_id) const;

 private:
  Backbone backbone_;
  WindowParams params_;
  std::map<std::string, LoraAdapter> adapters_;
  std::map<std::string, WeightOverrides> overrides_;
};

struct PredictOptions {
  bool allow_fallback = false;
  ForecastOptions forecast;
};

/// Routes the context to the group's adapted model. Unknown groups raise
/// RoutingError unless fallback is allowed, in which case the plain backbone
/// answers and the result carries a warning.
DistributionalForecast predict(const ForecasterFamily& family, const std::string& group_id,
                               const ContextWindow& context, std::size_t horizon_steps,
                               const PredictOptions& options = {});

// ---------------------------------------------------------------------------
// Evaluation and experiments

/// Deterministic forecasts over every window, scored in normalized units.
metrics::ScoreReport evaluate(const Backbone& backbone, const LoraAdapter* adapter,
                              const WindowedDataset& data, const std::string& model,
                              const std::string& variant);

/// Rows GL, Base, and reduction ((base - gl) / base).
metrics::ReportTable evaluate_gl_vs_base(const Backbone& backbone, const LoraAdapter& adapter,
                                         const WindowedDataset& data,
                                         const std::string& model = "m2oe2");

struct AblationRow {
  LoraTarget target;
  metrics::ScoreReport scores;
  std::size_t trainable_params = 0;
  std::string config_hash;
};

/// Fine-tunes one adapter per target with identical budgets and seeds, scored
/// on the group's test split.
std::vector<AblationRow> ablate_targets(const Backbone& backbone, const GroupData& group,
                                        std::size_t rank, const TrainConfig& config,
                                        TrainingLog* log = nullptr);
metrics::ReportTable ablation_table(const std::vector<AblationRow>& rows);

struct RankSweepRow {
  std::string label;  // "1".."10" or "full"
  std::size_t rank = 0;
  metrics::ScoreReport scores;
  std::size_t trainable_params = 0;
  std::size_t adapter_bytes = 0;  // serialized file size
  std::size_t payload_bytes = 0;  // float64 blob only
};

/// Output-head adapters at each rank (alpha = rank), plus a full-rank arm
/// labelled "full" when `include_full` is set.
std::vector<RankSweepRow> rank_sweep(const Backbone& backbone, const GroupData& group,
                                     const std::vector<std::size_t>& ranks, bool include_full,
                                     const TrainConfig& config, TrainingLog* log = nullptr);
metrics::ReportTable rank_sweep_table(const std::vector<RankSweepRow>& rows);

// ---------------------------------------------------------------------------
// Synthetic benchmark

/// Three-group preset for pre-training plus a held-out variant of the
/// residential group whose level is shifted by `shift_in_noise_std` noise
/// standard deviations.
struct ShiftBenchmark {
  RawDataset pretrain_data;
  RawDataset heldout_data;
  std::string heldout_group;
};

ShiftBenchmark make_shift_benchmark(std::uint64_t seed, std::size_t days,
                                    double shift_in_noise_std = 2.0);

}  // namespace m2gl
