// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2gl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>

#include "m2gl/errors.hpp"
#include "m2gl/hash.hpp"
#include "m2gl/persistence.hpp"
#include "m2gl/random.hpp"

namespace m2gl {

std::string to_string(BatchComposition c) {
  return c == BatchComposition::kUniform ? "uniform" : "group_balanced";
}

BatchComposition batch_composition_from_string(const std::string& text) {
  if (text == "uniform") return BatchComposition::kUniform;
  if (text == "group_balanced" || text == "balanced") return BatchComposition::kGroupBalanced;
  throw InputError("unknown batch composition '" + text + "' (expected uniform|group_balanced)");
}

std::string to_string(NormalizationMode m) {
  return m == NormalizationMode::kPerGroup ? "per_group" : "global";
}

NormalizationMode normalization_mode_from_string(const std::string& text) {
  if (text == "per_group" || text == "group") return NormalizationMode::kPerGroup;
  if (text == "global" || text == "pooled") return NormalizationMode::kGlobal;
  throw InputError("unknown normalization mode '" + text + "' (expected per_group|global)");
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be > 0");
  if (!(finetune_rate > 0.0)) throw InputError("fine-tuning rate must be > 0");
  if (batch_size < 1) throw InputError("batch size must be >= 1");
  if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
  window_params().validate();
}

WindowParams TrainConfig::window_params() const {
  WindowParams p;
  p.context_hours = context_hours;
  p.horizon_hours = horizon_hours;
  p.stride_hours = stride_hours;
  return p;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"finetune_epochs", finetune_epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"finetune_rate", finetune_rate},
          {"lambda", lambda},
          {"seed", seed},
          {"optimizer", to_string(optimizer)},
          {"patience", patience},
          {"composition", to_string(composition)},
          {"context_hours", context_hours},
          {"horizon_hours", horizon_hours},
          {"stride_hours", stride_hours}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.finetune_rate = j.value("finetune_rate", c.finetune_rate);
    c.lambda = j.value("lambda", c.lambda);
    c.seed = j.value("seed", c.seed);
    c.optimizer = optimizer_mode_from_string(j.value("optimizer", to_string(c.optimizer)));
    c.patience = j.value("patience", c.patience);
    c.composition =
        batch_composition_from_string(j.value("composition", to_string(c.composition)));
    c.context_hours = j.value("context_hours", c.context_hours);
    c.horizon_hours = j.value("horizon_hours", c.horizon_hours);
    c.stride_hours = j.value("stride_hours", c.stride_hours);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad training config: ") + e.what());
  }
  return c;
}

std::string TrainConfig::hash() const {
  const std::string text = to_json().dump();
  return to_hex(sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                 text.size())));
}

// ---------------------------------------------------------------------------
// TrainingLog

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  std::string base = format_timestamp(ms / 1000);
  if (!base.empty() && base.back() == 'Z') base.pop_back();
  char frac[8];
  std::snprintf(frac, sizeof(frac), ".%03lldZ", static_cast<long long>(ms % 1000));
  return base + frac;
}

}  // namespace

void TrainingLog::record(const std::string& phase, std::size_t step,
                         const std::string& group_id, double loss) {
  LogRecord r{phase, step, group_id, loss, utc_now()};
  std::lock_guard lock(mutex_);
  if (sink_ != nullptr) *sink_ << to_json_line(r) << '\n' << std::flush;
  records_.push_back(std::move(r));
}

std::vector<LogRecord> TrainingLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::string TrainingLog::to_json_line(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["phase"] = r.phase;
  j["step"] = r.step;
  if (!r.group_id.empty()) j["group_id"] = r.group_id;
  j["loss"] = r.loss;
  j["timestamp"] = r.timestamp;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Data preparation

const GroupData& PreparedData::group(const std::string& group_id) const {
  for (const auto& g : groups) {
    if (g.group_id == group_id) return g;
  }
  throw InputError("unknown group '" + group_id + "'");
}

PreparedData prepare_data(const RawDataset& raw, const TrainConfig& config,
                          NormalizationMode mode, const NormalizationStats* global_stats) {
  config.validate();
  if (raw.groups.empty()) throw InputError("dataset has no groups");
  PreparedData out;
  out.external_columns = raw.external_columns;
  out.params = config.window_params();
  out.mode = mode;

  std::vector<const GroupSeries*> all;
  for (const auto& g : raw.groups) all.push_back(&g);
  out.global_stats = global_stats != nullptr ? *global_stats : pooled_stats(all, out.params);

  for (const auto& series : raw.groups) {
    const NormalizationStats* stats =
        mode == NormalizationMode::kGlobal ? &out.global_stats : nullptr;
    WindowedDataset windows = make_windows(series, raw.external_columns, out.params, stats);
    SplitDataset split = split_chronological(windows);
    for (auto& w : split.warnings) out.warnings.push_back(series.group_id + ": " + w);
    out.groups.push_back({series.group_id, std::move(split.train), std::move(split.validation),
                          std::move(split.test)});
  }
  return out;
}

ModelConfig default_model_config(const PreparedData& data) {
  if (data.groups.empty()) throw InputError("no groups to size the model from");
  ModelConfig m;
  m.step_width = data.params.step_width;
  m.source_widths = data.groups.front().train.source_widths;
  return m;
}

// ---------------------------------------------------------------------------
// Training loop shared by both phases

namespace {

using LossFn = std::function<Tensor(const Window&, std::uint64_t)>;

struct LoopSpec {
  std::string phase;
  std::string group_id;
  std::size_t epochs = 0;
  double learning_rate = 1e-3;
};

std::vector<std::vector<double>> snapshot(const ParameterList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const ParameterList& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

double validation_loss(const LossFn& loss, const std::vector<const Window*>& val,
                       std::uint64_t seed, const std::string& phase) {
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    total += loss(*val[i], substream_seed(seed, phase + "/validation/" + std::to_string(i)))
                 .item();
  }
  return total / static_cast<double>(val.size());
}

/// Epoch order: one shuffled pass over the pooled windows, or in balanced
/// mode a round-robin over per-group shuffles of the same total length.
std::vector<const Window*> epoch_order(const std::vector<std::vector<const Window*>>& by_group,
                                       BatchComposition composition, Rng& rng) {
  std::vector<const Window*> order;
  if (composition == BatchComposition::kUniform || by_group.size() == 1) {
    for (const auto& g : by_group) order.insert(order.end(), g.begin(), g.end());
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }
  std::size_t total = 0;
  std::vector<std::vector<const Window*>> shuffled;
  for (const auto& g : by_group) {
    if (g.empty()) continue;
    total += g.size();
    shuffled.push_back(g);
    std::shuffle(shuffled.back().begin(), shuffled.back().end(), rng);
  }
  std::vector<std::size_t> cursor(shuffled.size(), 0);
  for (std::size_t k = 0; order.size() < total; ++k) {
    const std::size_t g = k % shuffled.size();
    if (cursor[g] == shuffled[g].size()) {
      cursor[g] = 0;
      std::shuffle(shuffled[g].begin(), shuffled[g].end(), rng);
    }
    order.push_back(shuffled[g][cursor[g]++]);
  }
  return order;
}

TrainingHistory run_training(const ParameterList& params, const LossFn& loss,
                             const std::vector<std::vector<const Window*>>& train_by_group,
                             const std::vector<const Window*>& val, const TrainConfig& config,
                             const LoopSpec& spec, TrainingLog* log) {
  TrainingHistory history;
  if (spec.epochs == 0) return history;

  OptimizerConfig oc;
  oc.mode = config.optimizer;
  oc.learning_rate = spec.learning_rate;
  Optimizer opt(params, oc);

  const std::string stream = spec.phase + (spec.group_id.empty() ? "" : "/" + spec.group_id);
  Rng shuffle_rng = make_rng(config.seed, stream + "/shuffle");
  Rng noise_rng = make_rng(config.seed, stream + "/noise");

  const bool early_stopping = config.patience > 0 && !val.empty();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_values;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto order = epoch_order(train_by_group, config.composition, shuffle_rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      opt.zero_grad();
      double batch_total = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        Tensor l = loss(*order[i], noise_rng());
        batch_total += l.item();
        scale(l, inv).backward();
      }
      opt.step();
      ++history.steps;
      epoch_total += batch_total;
      if (log != nullptr) log->record(spec.phase, history.steps, spec.group_id, batch_total * inv);
    }
    history.train_loss.push_back(epoch_total / static_cast<double>(order.size()));

    if (!val.empty()) {
      const double v = validation_loss(loss, val, config.seed, stream);
      history.validation_loss.push_back(v);
      if (log != nullptr) log->record(spec.phase + "_validation", epoch + 1, spec.group_id, v);
      if (early_stopping) {
        if (v < best) {
          best = v;
          best_values = snapshot(params);
          history.best_epoch = epoch + 1;
          since_best = 0;
        } else if (++since_best >= config.patience) {
          break;
        }
      }
    }
  }
  if (early_stopping && !best_values.empty()) {
    restore(params, best_values);
  } else {
    history.best_epoch = history.train_loss.size();
  }
  return history;
}

std::vector<const Window*> pointers(const WindowedDataset& d) {
  std::vector<const Window*> out;
  for (const auto& w : d.windows) out.push_back(&w);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Phases

PretrainResult pretrain(const std::vector<GroupData>& groups, const ModelConfig& model,
                        const TrainConfig& config, TrainingLog* log) {
  config.validate();
  std::vector<std::vector<const Window*>> train;
  std::vector<const Window*> val;
  std::size_t count = 0;
  for (const auto& g : groups) {
    train.push_back(pointers(g.train));
    count += g.train.size();
    for (const auto& w : g.validation.windows) val.push_back(&w);
  }
  if (count == 0) throw InputError("pre-training needs at least one training window");

  PretrainResult result{Backbone(model, config.seed), {}};
  const Backbone& bb = result.backbone;
  const LossFn loss = [&](const Window& w, std::uint64_t noise) {
    return elbo_loss(bb, w, config.lambda, noise);
  };
  result.history = run_training(bb.parameters(), loss, train, val, config,
                                {"pretrain", "", config.epochs, config.learning_rate}, log);
  return result;
}

FinetuneResult finetune_group(const Backbone& backbone, const GroupData& group,
                              LoraTarget target, std::size_t rank, double alpha,
                              const TrainConfig& config, TrainingLog* log) {
  config.validate();
  if (group.train.empty()) {
    throw InputError("group '" + group.group_id + "' has no training windows");
  }
  const Backbone frozen = backbone.clone(false);
  FinetuneResult result;
  result.adapter = init_adapter(frozen, target, rank, alpha,
                                substream_seed(config.seed, "adapter/" + group.group_id),
                                group.group_id);
  const NormalizationStats& st = group.train.stats;
  result.adapter.normalization =
      GroupNormalization{st.load_mean, st.load_std, st.ext_mean, st.ext_std};

  const LoraAdapter& adapter = result.adapter;
  const LossFn loss = [&](const Window& w, std::uint64_t noise) {
    const WeightOverrides ov = overrides_for(frozen, adapter);
    return elbo_loss(frozen, w, config.lambda, noise, &ov);
  };
  result.history = run_training(trainable_params(adapter), loss, {pointers(group.train)},
                                pointers(group.validation), config,
                                {"finetune", group.group_id, config.finetune_epochs,
                                 config.finetune_rate},
                                log);
  return result;
}

std::vector<FinetuneResult> finetune_groups(const Backbone& backbone,
                                            const std::vector<const GroupData*>& groups,
                                            LoraTarget target, std::size_t rank, double alpha,
                                            const TrainConfig& config,
                                            std::size_t parallel_groups, TrainingLog* log) {
  std::vector<FinetuneResult> results(groups.size());
  std::vector<std::exception_ptr> errors(groups.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(parallel_groups, groups.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < groups.size(); i = next++) {
      try {
        results[i] = finetune_group(backbone, *groups[i], target, rank, alpha, config, log);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

// ---------------------------------------------------------------------------
// Serving

ForecasterFamily::ForecasterFamily(Backbone backbone, WindowParams params)
    : backbone_(backbone.clone(false)), params_(params) {}

void ForecasterFamily::add_adapter(LoraAdapter adapter) {
  if (adapter.group_id.empty()) throw InputError("adapter has no group id");
  if (adapters_.count(adapter.group_id) > 0) {
    throw InputError("duplicate adapter for group '" + adapter.group_id + "'");
  }
  check_adapter_shapes(backbone_, adapter);
  WeightOverrides ov;
  {
    NoGradGuard no_grad;
    ov = overrides_for(backbone_, adapter);
  }
  const std::string id = adapter.group_id;
  overrides_.emplace(id, std::move(ov));
  adapters_.emplace(id, std::move(adapter));
}

const WeightOverrides& ForecasterFamily::overrides(const std::string& group_id) const {
  auto it = overrides_.find(group_id);
  if (it == overrides_.end()) throw RoutingError("no adapter for group '" + group_id + "'");
  return it->second;
}

DistributionalForecast predict(const ForecasterFamily& family, const std::string& group_id,
                               const ContextWindow& context, std::size_t horizon_steps,
                               const PredictOptions& options) {
  const std::size_t context_steps = family.params().context_steps();
  if (family.has_group(group_id)) {
    return forecast(family.backbone(), context, context_steps, horizon_steps,
                    &family.overrides(group_id), options.forecast);
  }
  if (!options.allow_fallback) {
    throw RoutingError("no adapter for group '" + group_id +
                       "' (enable fallback to serve the shared backbone)");
  }
  DistributionalForecast f =
      forecast(family.backbone(), context, context_steps, horizon_steps, nullptr,
               options.forecast);
  f.used_fallback = true;
  f.warnings.push_back("no adapter for group '" + group_id +
                       "'; served by the shared backbone");
  return f;
}

// ---------------------------------------------------------------------------
// Evaluation and experiments

metrics::ScoreReport evaluate(const Backbone& backbone, const LoraAdapter* adapter,
                              const WindowedDataset& data, const std::string& model,
                              const std::string& variant) {
  if (data.empty()) throw InputError("no windows to evaluate for '" + data.group_id + "'");
  std::optional<WeightOverrides> ov;
  if (adapter != nullptr) {
    check_adapter_shapes(backbone, *adapter);
    NoGradGuard no_grad;
    ov = overrides_for(backbone, *adapter);
  }
  metrics::ScoreAccumulator acc;
  for (const auto& w : data.windows) {
    const ContextWindow ctx = ContextWindow::from_window(w);
    const auto f = forecast(backbone, ctx, w.context_steps, w.target_steps(),
                            ov ? &*ov : nullptr);
    std::vector<double> y;
    for (std::size_t s = w.context_steps; s < w.total_steps(); ++s) {
      y.insert(y.end(), w.loads[s].begin(), w.loads[s].end());
    }
    acc.add(y, f.mean, f.variance);
  }
  return acc.report(model, variant);
}

metrics::ReportTable evaluate_gl_vs_base(const Backbone& backbone, const LoraAdapter& adapter,
                                         const WindowedDataset& data, const std::string& model) {
  metrics::ReportTable t;
  const auto gl = evaluate(backbone, &adapter, data, model, "GL");
  const auto base = evaluate(backbone, nullptr, data, model, "Base");
  t.rows = {gl, base, metrics::relative_reduction(gl, base)};
  return t;
}

namespace {

const WindowedDataset& scoring_split(const GroupData& group) {
  if (!group.test.empty()) return group.test;
  if (!group.validation.empty()) return group.validation;
  return group.train;
}

}  // namespace

std::vector<AblationRow> ablate_targets(const Backbone& backbone, const GroupData& group,
                                        std::size_t rank, const TrainConfig& config,
                                        TrainingLog* log) {
  const double alpha = static_cast<double>(rank);
  nlohmann::json budget = config.to_json();
  budget["rank"] = rank;
  budget["alpha"] = alpha;
  budget["group_id"] = group.group_id;
  const std::string text = budget.dump();
  const std::string hash = to_hex(
      sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));

  std::vector<AblationRow> rows;
  for (LoraTarget target : {LoraTarget::kInputMatrix, LoraTarget::kHiddenTransitionMatrix,
                            LoraTarget::kOutputMatrix}) {
    auto ft = finetune_group(backbone, group, target, rank, alpha, config, log);
    AblationRow row;
    row.target = target;
    row.scores = evaluate(backbone, &ft.adapter, scoring_split(group), "m2oe2", to_string(target));
    row.trainable_params = ft.adapter.trainable_count();
    row.config_hash = hash;
    rows.push_back(std::move(row));
  }
  return rows;
}

metrics::ReportTable ablation_table(const std::vector<AblationRow>& rows) {
  metrics::ReportTable t;
  t.extra_columns = {"trainable_params", "config_hash"};
  for (const auto& r : rows) {
    t.rows.push_back(r.scores);
    t.extra_values.push_back({std::to_string(r.trainable_params), r.config_hash});
  }
  return t;
}

std::vector<RankSweepRow> rank_sweep(const Backbone& backbone, const GroupData& group,
                                     const std::vector<std::size_t>& ranks, bool include_full,
                                     const TrainConfig& config, TrainingLog* log) {
  std::vector<std::pair<std::string, std::size_t>> arms;
  for (std::size_t r : ranks) arms.emplace_back(std::to_string(r), r);
  if (include_full) {
    std::size_t full = std::numeric_limits<std::size_t>::max();
    for (const auto& s : target_shapes(backbone, LoraTarget::kOutputMatrix)) {
      full = std::min({full, s.rows, s.cols});
    }
    arms.emplace_back("full", full);
  }
  std::vector<RankSweepRow> rows;
  for (const auto& [label, r] : arms) {
    auto ft = finetune_group(backbone, group, LoraTarget::kOutputMatrix, r,
                             static_cast<double>(r), config, log);
    RankSweepRow row;
    row.label = label;
    row.rank = r;
    row.scores = evaluate(backbone, &ft.adapter, scoring_split(group), "m2oe2", label);
    row.trainable_params = ft.adapter.trainable_count();
    row.adapter_bytes = serialize_adapter(ft.adapter).size();
    row.payload_bytes = row.trainable_params * sizeof(double);
    rows.push_back(std::move(row));
  }
  return rows;
}

metrics::ReportTable rank_sweep_table(const std::vector<RankSweepRow>& rows) {
  metrics::ReportTable t;
  t.extra_columns = {"rank", "trainable_params", "adapter_bytes", "payload_bytes"};
  for (const auto& r : rows) {
    t.rows.push_back(r.scores);
    t.extra_values.push_back({std::to_string(r.rank), std::to_string(r.trainable_params),
                              std::to_string(r.adapter_bytes),
                              std::to_string(r.payload_bytes)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

ShiftBenchmark make_shift_benchmark(std::uint64_t seed, std::size_t days,
                                    double shift_in_noise_std) {
  ShiftBenchmark b;
  const auto specs = preset_specs("fig1-like");
  b.pretrain_data = generate_synthetic(specs, days, seed);
  GroupSpec held = specs.front();
  held.group_id = held.group_id + "_shifted";
  held.level_shift += shift_in_noise_std * held.noise_std;
  b.heldout_group = held.group_id;
  b.heldout_data = generate_synthetic({held}, days, seed);
  return b;
}

}  // namespace m2gl
