// Copyright 2026 The m2gl Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synth, pretrain, finetune, predict, evaluate,
// ablate, ranksweep. Every flag can also be set through an M2GL_* variable.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "m2gl/errors.hpp"
#include "m2gl/persistence.hpp"
#include "m2gl/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace m2gl::cli {
namespace {

// ---------------------------------------------------------------------------
// Structured stderr output

void emit(const std::string& level, const std::string& message, json extra = json::object()) {
  nlohmann::ordered_json j;
  j["level"] = level;
  j["message"] = message;
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::cerr << j.dump() << '\n';
}

void warn(const std::string& message) { emit("warning", message); }
void info(const std::string& message, json extra = json::object()) {
  emit("info", message, std::move(extra));
}

// ---------------------------------------------------------------------------
// Flags

struct TrainFlags {
  TrainConfig config;
  std::string normalization = "per_group";
  std::string optimizer = "adam";
  std::string composition = "uniform";
};

void add_seed(CLI::App* app, std::uint64_t& seed) {
  app->add_option("--seed", seed, "Root seed for every random stream")
      ->envname("M2GL_SEED")
      ->capture_default_str();
}

// `windows` adds the window geometry and normalization flags, which only
// pre-training decides; later phases read them from the checkpoint.
void add_train_flags(CLI::App* app, TrainFlags& f, bool windows) {
  auto& c = f.config;
  add_seed(app, c.seed);
  app->add_option("--epochs", c.epochs, "Pre-training epoch cap")
      ->envname("M2GL_EPOCHS")->capture_default_str();
  app->add_option("--finetune-epochs", c.finetune_epochs, "Fine-tuning epoch cap")
      ->envname("M2GL_FINETUNE_EPOCHS")->capture_default_str();
  app->add_option("--batch-size", c.batch_size)
      ->envname("M2GL_BATCH_SIZE")->capture_default_str();
  app->add_option("--lr", c.learning_rate, "Pre-training learning rate")
      ->envname("M2GL_LR")->capture_default_str();
  app->add_option("--finetune-lr", c.finetune_rate, "Fine-tuning learning rate")
      ->envname("M2GL_FINETUNE_LR")->capture_default_str();
  app->add_option("--lambda", c.lambda, "KL weight")
      ->envname("M2GL_LAMBDA")->capture_default_str();
  app->add_option("--patience", c.patience, "Early-stopping patience in epochs, 0 disables")
      ->envname("M2GL_PATIENCE")->capture_default_str();
  app->add_option("--optimizer", f.optimizer, "adam|sgd")
      ->envname("M2GL_OPTIMIZER")->capture_default_str();
  app->add_option("--composition", f.composition, "uniform|group_balanced")
      ->envname("M2GL_COMPOSITION")->capture_default_str();
  if (windows) {
    app->add_option("--context-hours", c.context_hours)
        ->envname("M2GL_CONTEXT_HOURS")->capture_default_str();
    app->add_option("--horizon-hours", c.horizon_hours)
        ->envname("M2GL_HORIZON_HOURS")->capture_default_str();
    app->add_option("--stride-hours", c.stride_hours)
        ->envname("M2GL_STRIDE_HOURS")->capture_default_str();
    app->add_option("--normalization", f.normalization, "per_group|global")
        ->envname("M2GL_NORMALIZATION")->capture_default_str();
  }
}

TrainConfig resolve(TrainFlags& f) {
  f.config.optimizer = optimizer_mode_from_string(f.optimizer);
  f.config.composition = batch_composition_from_string(f.composition);
  f.config.validate();
  return f.config;
}

// ---------------------------------------------------------------------------
// Helpers

json stats_to_json(const NormalizationStats& s) {
  return {{"load_mean", s.load_mean}, {"load_std", s.load_std},
          {"ext_mean", s.ext_mean},   {"ext_std", s.ext_std}};
}

NormalizationStats stats_from_json(const json& j) {
  NormalizationStats s;
  s.load_mean = j.at("load_mean").get<double>();
  s.load_std = j.at("load_std").get<double>();
  s.ext_mean = j.at("ext_mean").get<std::vector<double>>();
  s.ext_std = j.at("ext_std").get<std::vector<double>>();
  return s;
}

NormalizationStats stats_from_adapter(const GroupNormalization& n) {
  return {n.load_mean, n.load_std, n.ext_mean, n.ext_std};
}

// Resolved config next to an output artifact: "<out>.config.json".
void write_resolved(const std::string& out, const std::string& command, json body) {
  body["command"] = command;
  const std::string text = body.dump(2) + "\n";
  write_file_atomic(out + ".config.json", {text.begin(), text.end()});
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, {text.begin(), text.end()});
}

// What pre-training recorded about the data a backbone was fitted on.
struct BackboneContext {
  LoadedBackbone loaded;
  TrainConfig train;
  NormalizationMode mode = NormalizationMode::kPerGroup;
  std::vector<std::string> columns;
  NormalizationStats global_stats;
  json group_stats = json::object();
};

BackboneContext open_backbone(const std::string& path) {
  BackboneContext b{load_backbone(path)};
  const json& c = b.loaded.config;
  try {
    b.train = TrainConfig::from_json(c.at("train"));
    b.mode = normalization_mode_from_string(c.at("normalization").get<std::string>());
    b.columns = c.at("external_columns").get<std::vector<std::string>>();
    b.global_stats = stats_from_json(c.at("global_stats"));
    b.group_stats = c.value("group_stats", json::object());
  } catch (const json::exception& e) {
    throw CompatibilityError("backbone '" + path +
                             "' lacks the data snapshot written by pretrain: " + e.what());
  }
  return b;
}

void check_columns(const BackboneContext& b, const std::vector<std::string>& columns) {
  if (columns != b.columns) {
    throw DataError("covariate columns do not match the backbone (" +
                    std::to_string(columns.size()) + " vs " + std::to_string(b.columns.size()) +
                    ")");
  }
}

RawDataset load_data(const std::string& path) {
  RawDataset raw = load_csv(path);
  for (const auto& g : raw.gaps) warn(g);
  return raw;
}

// Keep only the requested groups, in request order.
RawDataset select_groups(const RawDataset& raw, const std::vector<std::string>& groups) {
  if (groups.empty()) return raw;
  RawDataset out;
  out.external_columns = raw.external_columns;
  for (const auto& g : groups) out.groups.push_back(raw.at(g));
  return out;
}

// Windows for fine-tuning or evaluation, normalized the way pre-training did.
PreparedData prepare_like_backbone(const RawDataset& raw, const BackboneContext& b,
                                   const TrainConfig& config) {
  TrainConfig c = config;
  c.context_hours = b.train.context_hours;
  c.horizon_hours = b.train.horizon_hours;
  c.stride_hours = b.train.stride_hours;
  check_columns(b, raw.external_columns);
  PreparedData d = prepare_data(raw, c, b.mode,
                                b.mode == NormalizationMode::kGlobal ? &b.global_stats : nullptr);
  for (const auto& w : d.warnings) warn(w);
  return d;
}

std::vector<fs::path> adapter_files(const std::string& dir) {
  std::vector<fs::path> out;
  if (dir.empty()) return out;
  if (!fs::is_directory(dir)) throw InputError("adapter directory '" + dir + "' does not exist");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".adapter") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_report(const metrics::ReportTable& table, const std::string& path,
                  const std::string& format) {
  if (format == "json") {
    write_text_atomic(path, table.to_json() + "\n");
  } else if (format == "csv") {
    std::ostringstream s;
    table.write_csv(s);
    write_text_atomic(path, s.str());
  } else {
    throw InputError("unknown report format '" + format + "' (expected csv|json)");
  }
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthArgs {
  std::string spec = "fig1-like";
  std::size_t days = 365;
  std::uint64_t seed = 0;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  const auto specs = is_preset(a.spec) ? preset_specs(a.spec) : load_group_specs(a.spec);
  const RawDataset data = generate_synthetic(specs, a.days, a.seed);
  std::ostringstream s;
  write_csv(data, s);
  write_text_atomic(a.out, s.str());
  json groups = json::array();
  for (const auto& g : data.groups) groups.push_back(g.group_id);
  write_resolved(a.out, "synth",
                 {{"spec", a.spec}, {"days", a.days}, {"seed", a.seed}, {"out", a.out},
                  {"groups", groups}});
  info("wrote synthetic data", {{"path", a.out}, {"groups", groups}});
}

struct PretrainArgs {
  std::string data;
  std::string out;
  TrainFlags flags;
};

void run_pretrain(PretrainArgs& a) {
  const TrainConfig config = resolve(a.flags);
  const NormalizationMode mode = normalization_mode_from_string(a.flags.normalization);
  if (config.epochs == 0) warn("epochs=0: the checkpoint holds initialized weights");
  const RawDataset raw = load_data(a.data);
  const PreparedData d = prepare_data(raw, config, mode);
  for (const auto& w : d.warnings) warn(w);
  const ModelConfig model = default_model_config(d);
  TrainingLog log(&std::cerr);
  const PretrainResult r = pretrain(d.groups, model, config, &log);

  json group_stats = json::object();
  for (const auto& g : d.groups) group_stats[g.group_id] = stats_to_json(g.train.stats);
  const json snapshot = {{"train", config.to_json()},
                         {"normalization", to_string(mode)},
                         {"external_columns", d.external_columns},
                         {"global_stats", stats_to_json(d.global_stats)},
                         {"group_stats", group_stats}};
  save_backbone(r.backbone, a.out, snapshot);
  write_resolved(a.out, "pretrain",
                 {{"data", a.data},
                  {"out", a.out},
                  {"train", config.to_json()},
                  {"normalization", to_string(mode)},
                  {"model", model_config_to_json(model)},
                  {"backbone_hash", r.backbone.content_hash()},
                  {"best_epoch", r.history.best_epoch},
                  {"train_loss", r.history.train_loss},
                  {"validation_loss", r.history.validation_loss}});
  info("wrote backbone", {{"path", a.out}, {"backbone_hash", r.backbone.content_hash()}});
}

struct FinetuneArgs {
  std::string backbone;
  std::string data;
  std::vector<std::string> groups;
  std::string target = "output";
  std::size_t rank = 8;
  double alpha = 0.0;  // 0 means alpha = rank
  std::size_t parallel_groups = 1;
  std::string out;
  TrainFlags flags;
};

void run_finetune(FinetuneArgs& a) {
  const TrainConfig config = resolve(a.flags);
  const LoraTarget target = lora_target_from_string(a.target);
  const double alpha = a.alpha > 0.0 ? a.alpha : static_cast<double>(a.rank);
  if (a.parallel_groups == 0) throw InputError("--parallel-groups must be at least 1");
  if (config.finetune_epochs == 0) warn("finetune-epochs=0: adapters hold their initial values");
  const BackboneContext b = open_backbone(a.backbone);
  const RawDataset raw = select_groups(load_data(a.data), a.groups);
  const PreparedData d = prepare_like_backbone(raw, b, config);

  std::vector<const GroupData*> groups;
  for (const auto& g : d.groups) groups.push_back(&g);
  // One group may be written to a file path; several go into a directory.
  const bool to_dir = groups.size() > 1 || fs::is_directory(a.out) ||
                      (!a.out.empty() && a.out.back() == '/');
  if (to_dir) fs::create_directories(a.out);

  TrainingLog log(&std::cerr);
  const auto results = finetune_groups(b.loaded.backbone, groups, target, a.rank, alpha, config,
                                       a.parallel_groups, &log);
  json written = json::array();
  for (const auto& r : results) {
    const std::string path =
        to_dir ? (fs::path(a.out) / (r.adapter.group_id + ".adapter")).string() : a.out;
    save_adapter(r.adapter, path);
    written.push_back({{"group_id", r.adapter.group_id},
                       {"path", path},
                       {"best_epoch", r.history.best_epoch},
                       {"trainable_params", r.adapter.trainable_count()}});
    info("wrote adapter", {{"path", path}, {"group_id", r.adapter.group_id}});
  }
  const std::string config_at = to_dir ? (fs::path(a.out) / "finetune").string() : a.out;
  write_resolved(config_at, "finetune",
                 {{"backbone", a.backbone},
                  {"backbone_hash", b.loaded.backbone.content_hash()},
                  {"data", a.data},
                  {"target", to_string(target)},
                  {"rank", a.rank},
                  {"alpha", alpha},
                  {"parallel_groups", a.parallel_groups},
                  {"train", config.to_json()},
                  {"adapters", written}});
}

struct PredictArgs {
  std::string backbone;
  std::string adapters;
  std::string group;
  std::string context;
  std::size_t horizon = 24;
  bool fallback = false;
  bool sampled = false;
  std::uint64_t seed = 0;
  std::string out;
};

void run_predict(const PredictArgs& a) {
  const BackboneContext b = open_backbone(a.backbone);
  ForecasterFamily family(b.loaded.backbone.clone(false), b.train.window_params());
  for (const auto& p : adapter_files(a.adapters)) {
    family.add_adapter(load_adapter(p.string(), &family.backbone()));
  }
  const std::size_t step = family.params().step_width;
  if (a.horizon == 0 || a.horizon % step != 0) {
    throw InputError("--horizon must be a positive multiple of " + std::to_string(step) +
                     " hours");
  }

  const RawDataset raw = load_data(a.context);
  check_columns(b, raw.external_columns);
  const GroupSeries& series = raw.at(a.group);
  NormalizationStats stats = b.global_stats;
  if (family.has_group(a.group) && family.adapters().at(a.group).normalization) {
    stats = stats_from_adapter(*family.adapters().at(a.group).normalization);
  } else if (b.mode == NormalizationMode::kPerGroup && b.group_stats.contains(a.group)) {
    stats = stats_from_json(b.group_stats.at(a.group));
  }
  const ContextWindow ctx = make_context(series, b.columns, family.params(), stats);

  PredictOptions opt;
  opt.allow_fallback = a.fallback;
  opt.forecast.mode = a.sampled ? InferenceMode::kSampled : InferenceMode::kDeterministic;
  opt.forecast.noise_seed = a.seed;
  const DistributionalForecast f = predict(family, a.group, ctx, a.horizon / step, opt);
  for (const auto& w : f.warnings) warn(w);

  std::ostringstream s;
  s.precision(17);
  s << "timestamp,mu,sigma\n";
  const std::int64_t last = series.timestamps.back();
  for (std::size_t i = 0; i < f.mean.size(); ++i) {
    s << format_timestamp(last + 3600 * static_cast<std::int64_t>(i + 1)) << ','
      << stats.denormalize_load(f.mean[i]) << ',' << std::sqrt(f.variance[i]) * stats.load_std
      << '\n';
  }
  write_text_atomic(a.out, s.str());
  write_resolved(a.out, "predict",
                 {{"backbone", a.backbone},
                  {"adapters", a.adapters},
                  {"group", a.group},
                  {"context", a.context},
                  {"horizon", a.horizon},
                  {"fallback", a.fallback},
                  {"used_fallback", f.used_fallback},
                  {"mode", a.sampled ? "sampled" : "deterministic"},
                  {"seed", a.seed},
                  {"out", a.out}});
  info("wrote forecast", {{"path", a.out}, {"rows", f.mean.size()}});
}

struct EvaluateArgs {
  std::string backbone;
  std::string adapters;
  std::string data;
  std::vector<std::string> groups;
  std::string report;
  std::string format = "csv";
};

void run_evaluate(const EvaluateArgs& a) {
  const BackboneContext b = open_backbone(a.backbone);
  std::map<std::string, LoraAdapter> adapters;
  for (const auto& p : adapter_files(a.adapters)) {
    auto ad = load_adapter(p.string(), &b.loaded.backbone);
    adapters.emplace(ad.group_id, std::move(ad));
  }
  if (adapters.empty()) throw InputError("no adapters found in '" + a.adapters + "'");
  std::vector<std::string> ids = a.groups;
  if (ids.empty()) {
    for (const auto& [id, ad] : adapters) ids.push_back(id);
  }
  const RawDataset raw = select_groups(load_data(a.data), ids);
  const PreparedData d = prepare_like_backbone(raw, b, b.train);
  metrics::ReportTable table;
  for (const auto& id : ids) {
    const auto it = adapters.find(id);
    if (it == adapters.end()) throw RoutingError("no adapter for group '" + id + "'");
    const GroupData& g = d.group(id);
    if (g.test.empty()) throw DataError("group '" + id + "' has no test windows");
    const auto t = evaluate_gl_vs_base(b.loaded.backbone, it->second, g.test, id);
    table.rows.insert(table.rows.end(), t.rows.begin(), t.rows.end());
  }
  write_report(table, a.report, a.format);
  write_resolved(a.report, "evaluate",
                 {{"backbone", a.backbone}, {"adapters", a.adapters}, {"data", a.data},
                  {"groups", ids}, {"report", a.report}, {"format", a.format}});
  info("wrote report", {{"path", a.report}, {"rows", table.rows.size()}});
}

struct ExperimentArgs {
  std::string backbone;
  std::string data;
  std::string group;
  std::size_t rank = 8;
  std::string ranks = "1,2,3,4,5,6,7,8,9,10";
  bool full = true;
  std::string report;
  std::string format = "csv";
  TrainFlags flags;
};

std::vector<std::size_t> parse_ranks(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw InputError("bad rank '" + item + "' in --ranks");
    }
  }
  if (out.empty()) throw InputError("--ranks is empty");
  return out;
}

void run_experiment(ExperimentArgs& a, bool sweep) {
  const TrainConfig config = resolve(a.flags);
  const BackboneContext b = open_backbone(a.backbone);
  const RawDataset raw = select_groups(load_data(a.data), {a.group});
  const PreparedData d = prepare_like_backbone(raw, b, config);
  TrainingLog log(&std::cerr);
  metrics::ReportTable table;
  json body = {{"backbone", a.backbone}, {"data", a.data},     {"group", a.group},
               {"report", a.report},     {"format", a.format}, {"train", config.to_json()}};
  if (sweep) {
    const auto ranks = parse_ranks(a.ranks);
    const auto rows = rank_sweep(b.loaded.backbone, d.groups.front(), ranks, a.full, config, &log);
    table = rank_sweep_table(rows);
    body["ranks"] = ranks;
    body["full"] = a.full;
  } else {
    const auto rows = ablate_targets(b.loaded.backbone, d.groups.front(), a.rank, config, &log);
    table = ablation_table(rows);
    body["rank"] = a.rank;
  }
  write_report(table, a.report, a.format);
  write_resolved(a.report, sweep ? "ranksweep" : "ablate", body);
  info("wrote report", {{"path", a.report}, {"rows", table.rows.size()}});
}

int exit_code(const Error& e) { return static_cast<int>(e.kind()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"m2gl: global-to-local probabilistic load forecasting"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-group load CSV");
  s->add_option("--spec", synth.spec, "Preset name (fig1-like, flat) or JSON spec file")
      ->envname("M2GL_SPEC")->capture_default_str();
  s->add_option("--days", synth.days)->envname("M2GL_DAYS")->capture_default_str();
  add_seed(s, synth.seed);
  s->add_option("--out", synth.out, "Output CSV")->required();

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Phase 1: train the shared backbone");
  p->add_option("--data", pre.data, "Load CSV")->required()->envname("M2GL_DATA");
  p->add_option("--out", pre.out, "Backbone checkpoint path")->required();
  add_train_flags(p, pre.flags, true);

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "Phase 2: train per-group adapters");
  f->add_option("--backbone", ft.backbone)->required()->envname("M2GL_BACKBONE");
  f->add_option("--data", ft.data)->required()->envname("M2GL_DATA");
  f->add_option("--group", ft.groups, "Group id; repeat for several, omit for all");
  f->add_option("--target", ft.target, "input|hidden|output")
      ->envname("M2GL_TARGET")->capture_default_str();
  f->add_option("--rank", ft.rank)->envname("M2GL_RANK")->capture_default_str();
  f->add_option("--alpha", ft.alpha, "Scaling numerator; defaults to the rank")
      ->envname("M2GL_ALPHA");
  f->add_option("--parallel-groups", ft.parallel_groups)
      ->envname("M2GL_PARALLEL_GROUPS")->capture_default_str();
  f->add_option("--out", ft.out, "Adapter file (one group) or directory")->required();
  add_train_flags(f, ft.flags, false);

  PredictArgs pr;
  auto* q = app.add_subcommand("predict", "Phase 3: routed distributional forecast");
  q->add_option("--backbone", pr.backbone)->required()->envname("M2GL_BACKBONE");
  q->add_option("--adapters", pr.adapters, "Directory of *.adapter files")
      ->envname("M2GL_ADAPTERS");
  q->add_option("--group", pr.group)->required();
  q->add_option("--context", pr.context, "CSV whose last context hours feed the model")
      ->required();
  q->add_option("--horizon", pr.horizon, "Hours")->envname("M2GL_HORIZON")->capture_default_str();
  q->add_flag("--fallback", pr.fallback, "Serve unknown groups with the plain backbone")
      ->envname("M2GL_FALLBACK");
  q->add_flag("--sampled", pr.sampled, "Sample z instead of using the posterior mean");
  add_seed(q, pr.seed);
  q->add_option("--out", pr.out, "Forecast CSV")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score GL against Base on test windows");
  e->add_option("--backbone", ev.backbone)->required()->envname("M2GL_BACKBONE");
  e->add_option("--adapters", ev.adapters)->required()->envname("M2GL_ADAPTERS");
  e->add_option("--data", ev.data)->required()->envname("M2GL_DATA");
  e->add_option("--group", ev.groups, "Group id; repeat for several, omit for all adapters");
  e->add_option("--report", ev.report)->required();
  e->add_option("--format", ev.format, "csv|json")->envname("M2GL_FORMAT")->capture_default_str();

  ExperimentArgs ab;
  auto* a = app.add_subcommand("ablate", "Fine-tune input, hidden, and output targets");
  a->add_option("--backbone", ab.backbone)->required()->envname("M2GL_BACKBONE");
  a->add_option("--data", ab.data)->required()->envname("M2GL_DATA");
  a->add_option("--group", ab.group)->required();
  a->add_option("--rank", ab.rank)->envname("M2GL_RANK")->capture_default_str();
  a->add_option("--report", ab.report)->required();
  a->add_option("--format", ab.format, "csv|json")->envname("M2GL_FORMAT")->capture_default_str();
  add_train_flags(a, ab.flags, false);

  ExperimentArgs rs;
  auto* r = app.add_subcommand("ranksweep", "Output-head adapters over a range of ranks");
  r->add_option("--backbone", rs.backbone)->required()->envname("M2GL_BACKBONE");
  r->add_option("--data", rs.data)->required()->envname("M2GL_DATA");
  r->add_option("--group", rs.group)->required();
  r->add_option("--ranks", rs.ranks, "Comma-separated ranks")
      ->envname("M2GL_RANKS")->capture_default_str();
  r->add_flag("--full,!--no-full", rs.full, "Add the full-rank arm")->capture_default_str();
  r->add_option("--report", rs.report)->required();
  r->add_option("--format", rs.format, "csv|json")->envname("M2GL_FORMAT")->capture_default_str();
  add_train_flags(r, rs.flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    emit("error", err.what());
    return static_cast<int>(ErrorKind::kInput);
  }

  try {
    if (*s) run_synth(synth);
    if (*p) run_pretrain(pre);
    if (*f) run_finetune(ft);
    if (*q) run_predict(pr);
    if (*e) run_evaluate(ev);
    if (*a) run_experiment(ab, false);
    if (*r) run_experiment(rs, true);
  } catch (const Error& err) {
    emit("error", err.what());
    return exit_code(err);
  } catch (const std::exception& err) {
    emit("error", std::string("internal error: ") + err.what());
    return static_cast<int>(ErrorKind::kInternal);
  }
  return 0;
}

}  // namespace m2gl::cli

int main(int argc, char** argv) { return m2gl::cli::main(argc, argv); }
