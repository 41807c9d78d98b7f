#include "mcdc/run.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "embedded_config.hpp"
#include "mcdc/error.hpp"
#include "mcdc/parallel.hpp"
#include "mcdc/random.hpp"

namespace mcdc::run {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::unique_ptr<Classifier> ModelSpec::make(std::uint64_t seed) const {
  return make_model(kind, mcdc, ann, seed);
}

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown_keys(const json& user, const json& reference, const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (value.is_object() && reference.at(key).is_object())
      reject_unknown_keys(value, reference.at(key), path);
  }
}

// Like merge_patch, but a null value is kept instead of deleting the key.
void merge_into(json& target, const json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && target.contains(key) && target.at(key).is_object())
      merge_into(target[key], value);
    else
      target[key] = value;
  }
}

std::size_t threads_from(std::size_t n) { return n == 0 ? default_threads() : n; }

RunConfig from_json(const json& j) {
  RunConfig c;
  if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
  c.output = j.at("output").get<std::string>();

  const json& d = j.at("data");
  c.data.csv = d.at("csv").is_null() ? "" : d.at("csv").get<std::string>();
  c.data.recipe = d.at("recipe").get<std::string>();
  c.data.seed = d.at("seed").get<std::uint64_t>();

  const json& m = j.at("model");
  c.model.kind = m.at("kind").get<std::string>();
  c.model.mcdc.temporal = m.at("temporal").get<std::size_t>();
  c.model.mcdc.temporal_kernel = m.at("temporal_kernel").get<std::size_t>();
  c.model.mcdc.channel_kernel = m.at("channel_kernel").get<std::size_t>();
  c.model.mcdc.heads = m.at("heads").get<std::size_t>();
  c.model.mcdc.ffn_hidden = m.at("ffn_hidden").get<std::size_t>();
  c.model.mcdc.attention =
      c.model.kind == "mcdc-matrix" ? attention::Kind::Matrix : attention::Kind::Conv;
  c.model.ann.temporal = c.model.mcdc.temporal;
  c.model.ann.hidden1 = m.at("ann_hidden1").get<std::size_t>();
  c.model.ann.hidden2 = m.at("ann_hidden2").get<std::size_t>();
  const auto ann_input = m.at("ann_input").get<std::string>();
  if (ann_input == "last-day") {
    c.model.ann.input = AnnInput::LastDay;
  } else if (ann_input == "window") {
    c.model.ann.input = AnnInput::Window;
  } else {
    throw ConfigError("model.ann_input must be 'last-day' or 'window'");
  }

  const json& t = j.at("train");
  c.train.epochs = t.at("epochs").get<std::size_t>();
  c.train.batch_size = t.at("batch_size").get<std::size_t>();
  c.train.lr0 = t.at("lr0").get<double>();
  c.train.decay.clear();
  for (const auto& step : t.at("decay")) {
    if (!step.is_array() || step.size() != 2)
      throw ConfigError("train.decay entries must be [epoch, rate] pairs");
    c.train.decay.emplace_back(step[0].get<std::size_t>(), step[1].get<double>());
  }
  c.train.beta1 = t.at("beta1").get<double>();
  c.train.beta2 = t.at("beta2").get<double>();
  c.train.eps = t.at("eps").get<double>();
  c.train.patience =
      t.at("patience").is_null() ? training::kNoEarlyStop : t.at("patience").get<std::size_t>();
  c.train.folds = t.at("folds").get<std::size_t>();
  c.train.threads = threads_from(t.at("threads").get<std::size_t>());

  const json& s = j.at("split");
  c.mode = data::parse_split_mode(s.at("mode").get<std::string>());
  c.test_ratio = s.at("test_ratio").get<double>();

  const json& cmp = j.at("compare");
  c.compare.models = cmp.at("models").get<std::vector<std::string>>();
  c.compare.modes.clear();
  for (const auto& mode : cmp.at("modes"))
    c.compare.modes.push_back(data::parse_split_mode(mode.get<std::string>()));
  c.compare.repetitions = cmp.at("repetitions").get<std::size_t>();
  c.compare.single_fold = cmp.at("single_fold").get<bool>();

  const json& sw = j.at("sweep");
  c.sweep.temporal_kernel = sw.at("temporal_kernel").get<std::vector<std::size_t>>();
  c.sweep.channel_kernel = sw.at("channel_kernel").get<std::vector<std::size_t>>();
  c.sweep.heads = sw.at("heads").get<std::vector<std::size_t>>();
  c.sweep.temporal = sw.at("temporal").get<std::vector<std::size_t>>();
  c.sweep.single_fold = sw.at("single_fold").get<bool>();
  return c;
}

json default_json() { return json::parse(data::embedded::kDefaultRun); }

}  // namespace

RunConfig default_run_config() { return from_json(default_json()); }

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  try {
    const json user = json::parse(text);
    if (!user.is_object()) throw ConfigError("top level must be an object");
    json merged = default_json();
    reject_unknown_keys(user, merged, "");
    merge_into(merged, user);
    if (!user.contains("seed")) merged.erase("seed");
    return from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_text(path), path.string());
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["output"] = c.output;
  j["data"] = {{"csv", c.data.csv}, {"recipe", c.data.recipe}, {"seed", c.data.seed}};
  j["model"] = {{"kind", c.model.kind},
                {"temporal", c.model.mcdc.temporal},
                {"temporal_kernel", c.model.mcdc.temporal_kernel},
                {"channel_kernel", c.model.mcdc.channel_kernel},
                {"heads", c.model.mcdc.heads},
                {"ffn_hidden", c.model.mcdc.ffn_hidden},
                {"ann_hidden1", c.model.ann.hidden1},
                {"ann_hidden2", c.model.ann.hidden2},
                {"ann_input", c.model.ann.input == AnnInput::LastDay ? "last-day" : "window"}};
  json decay = json::array();
  for (const auto& [epoch, rate] : c.train.decay) decay.push_back({epoch, rate});
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr0", c.train.lr0},
                {"decay", decay},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"eps", c.train.eps},
                {"patience", c.train.patience == training::kNoEarlyStop
                                 ? json(nullptr)
                                 : json(c.train.patience)},
                {"folds", c.train.folds},
                {"threads", c.train.threads}};
  j["split"] = {{"mode", data::split_mode_name(c.mode)}, {"test_ratio", c.test_ratio}};
  json modes = json::array();
  for (auto m : c.compare.modes) modes.push_back(data::split_mode_name(m));
  j["compare"] = {{"models", c.compare.models},
                  {"modes", modes},
                  {"repetitions", c.compare.repetitions},
                  {"single_fold", c.compare.single_fold}};
  j["sweep"] = {{"temporal_kernel", c.sweep.temporal_kernel},
                {"channel_kernel", c.sweep.channel_kernel},
                {"heads", c.sweep.heads},
                {"temporal", c.sweep.temporal},
                {"single_fold", c.sweep.single_fold}};
  return j.dump(2);
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("config: 'seed' is required");
  if (model.kind != "mcdc" && model.kind != "mcdc-matrix" && model.kind != "ann")
    throw ConfigError("config: unknown model kind '" + model.kind + "'");
  if (!data.csv.empty() && !fs::exists(data.csv))
    throw ConfigError("config: dataset '" + data.csv + "' does not exist");
  if (data.csv.empty() && data.recipe != "default" && data.recipe != "facility" &&
      !fs::exists(data.recipe))
    throw ConfigError("config: recipe '" + data.recipe + "' does not exist");
  if (!(test_ratio > 0.0 && test_ratio < 1.0))
    throw ConfigError("config: split.test_ratio must be in (0, 1)");
  if (model.temporal() < 1) throw ConfigError("config: model.temporal must be >= 1");
  for (const auto& k : compare.models)
    if (k != "mcdc" && k != "mcdc-matrix" && k != "ann")
      throw ConfigError("config: unknown compare model '" + k + "'");
  train.validate();
}

std::uint64_t RunConfig::seed_value() const {
  if (!seed) throw ConfigError("config: 'seed' is required");
  return *seed;
}

// ---------------------------------------------------------------------------
// Pipeline stages

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<data::CdgdWindow> pick(std::span<const data::CdgdWindow> windows,
                                   std::span<const std::size_t> idx) {
  std::vector<data::CdgdWindow> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(windows[i]);
  return out;
}

std::vector<data::CdgdWindow> normalized_windows(std::span<const data::CdgdWindow> windows,
                                                 const data::SplitPlan& plan,
                                                 data::NormStats& stats) {
  stats = data::fit_normalizer(pick(windows, plan.train));
  return data::normalize(windows, stats);
}

}  // namespace

std::vector<data::GasSeries> load_dataset(const DataSpec& spec) {
  return stage("load", [&] {
    if (!spec.csv.empty()) return data::load_series(spec.csv);
    data::SynthRecipe recipe;
    if (spec.recipe == "default") {
      recipe = data::default_recipe();
    } else if (spec.recipe == "facility") {
      recipe = data::facility_recipe();
    } else {
      recipe = data::load_recipe(spec.recipe);
    }
    return data::synth_generate(recipe, spec.seed);
  });
}

std::vector<data::CdgdWindow> prepare_windows(std::span<const data::GasSeries> series,
                                              std::size_t temporal) {
  const auto filled = stage("interpolate", [&] {
    std::vector<data::GasSeries> out;
    out.reserve(series.size());
    for (const auto& s : series) out.push_back(data::interpolate_gaps(s));
    return out;
  });
  return stage("window", [&] {
    std::vector<data::CdgdWindow> out;
    for (const auto& s : filled) {
      auto w = data::overlapping_sample(s, temporal);
      out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    if (out.empty())
      throw DataError("no series is at least " + std::to_string(temporal) + " days long");
    return out;
  });
}

TrainOutcome train_pipeline(const RunConfig& config) {
  stage("config", [&] {
    config.validate();
    return 0;
  });
  const std::uint64_t seed = config.seed_value();
  const auto series = load_dataset(config.data);
  const auto windows = prepare_windows(series, config.model.temporal());
  TrainOutcome out;
  out.plan = stage("split", [&] {
    return data::split(windows, config.mode, config.test_ratio, seed, config.train.folds);
  });
  const auto normed =
      stage("normalize", [&] { return normalized_windows(windows, out.plan, out.stats); });
  out.cv = stage("cross_validate", [&] {
    training::TrainConfig tc = config.train;
    tc.seed = seed;
    const auto init = config.model.make(seed);
    return training::cross_validate(*init, normed, out.plan, tc);
  });
  return out;
}

TrainOutcome cmd_train(const RunConfig& config) {
  TrainOutcome out = train_pipeline(config);
  stage("save", [&] {
    const fs::path dir = config.output;
    fs::create_directories(dir);
    save_checkpoint(dir / kCheckpointFile, out.cv.best_model(), out.stats);
    write_text(dir / kHistoryFile, training::history_csv(out.cv));
    write_text(dir / kSplitFile, data::split_plan_to_json(out.plan));
    return 0;
  });
  return out;
}

eval::EvalReport evaluate_checkpoint(const Checkpoint& ckpt,
                                     std::span<const data::GasSeries> series,
                                     const data::SplitPlan& plan, const EvalOptions& options) {
  if (options.train_side && !options.allow_train_side)
    throw ContractError("refusing to evaluate the training side without an explicit override");
  const Classifier& model = *ckpt.model;
  if (model.temporal() != plan.temporal) {
    throw CompatibilityError("checkpoint expects T=" + std::to_string(model.temporal()) +
                             " but the split plan was built with T=" +
                             std::to_string(plan.temporal));
  }
  const auto windows = prepare_windows(series, plan.temporal);
  if (windows.size() != plan.window_count) {
    throw CompatibilityError("split plan covers " + std::to_string(plan.window_count) +
                             " windows but the dataset yields " + std::to_string(windows.size()));
  }
  for (const auto& w : windows) {
    if (condition_code(w.label) >= model.classes()) {
      throw CompatibilityError("dataset label " + std::string(condition_name(w.label)) +
                               " is outside the checkpoint's V=" +
                               std::to_string(model.classes()) + " classes");
    }
  }
  const auto& side = options.train_side ? plan.train : plan.test;
  for (std::size_t i : side)
    if (i >= windows.size()) throw IndexError("split plan index out of range");
  const auto normed = data::normalize(pick(windows, side), ckpt.stats);
  return eval::evaluate_report(model, normed, options.threads);
}

eval::EvalReport cmd_eval(const fs::path& checkpoint, const DataSpec& data,
                          const fs::path& split_plan, const fs::path& out_dir,
                          const EvalOptions& options) {
  const Checkpoint ckpt = stage("load", [&] { return load_checkpoint(checkpoint); });
  const auto plan =
      stage("load", [&] { return data::split_plan_from_json(read_text(split_plan)); });
  const auto series = load_dataset(data);
  eval::EvalReport rep = evaluate_checkpoint(ckpt, series, plan, options);
  stage("save", [&] {
    write_text(out_dir / kReportFile, eval::report_to_json(rep) + "\n");
    write_text(out_dir / kRocFile, eval::roc_csv(rep.roc));
    return 0;
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Compare and sweep

CompareOutput cmd_compare(const RunConfig& config) {
  config.validate();
  if (config.compare.models.empty()) throw ConfigError("compare: no models");
  if (config.compare.modes.empty()) throw ConfigError("compare: no split modes");
  const auto series = load_dataset(config.data);
  const auto windows = prepare_windows(series, config.model.temporal());

  std::vector<eval::ModelFactory> factories;
  for (const auto& kind : config.compare.models) {
    ModelSpec spec = config.model;
    spec.kind = kind;
    factories.push_back({kind, [spec](std::uint64_t s) { return spec.make(s); }});
  }
  CompareOutput out;
  json blocks = json::array();
  for (auto mode : config.compare.modes) {
    eval::CompareConfig cc;
    cc.repetitions = config.compare.repetitions;
    cc.seed = config.seed_value();
    cc.mode = mode;
    cc.test_ratio = config.test_ratio;
    cc.train = config.train;
    cc.single_fold = config.compare.single_fold;
    out.blocks.push_back(stage("compare", [&] { return eval::compare(factories, windows, cc); }));
    blocks.push_back(json::parse(eval::compare_to_json(out.blocks.back())));
    out.table += eval::compare_table(out.blocks.back()) + "\n";
  }
  out.json = json{{"format", "mcdc-compare"}, {"blocks", blocks}}.dump(2);
  return out;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& config) {
  config.validate();
  if (config.model.kind == "ann") throw ConfigError("sweep: grid axes apply to MCDC models only");
  const SweepSpec& g = config.sweep;
  if (g.cell_count() == 0) throw ConfigError("sweep: empty grid");
  const std::uint64_t seed = config.seed_value();
  const auto series = load_dataset(config.data);

  std::map<std::size_t, std::vector<data::CdgdWindow>> windows_by_t;
  for (std::size_t t : g.temporal)
    if (!windows_by_t.count(t)) windows_by_t[t] = prepare_windows(series, t);

  std::vector<SweepRow> rows;
  for (std::size_t tk : g.temporal_kernel)
    for (std::size_t ck : g.channel_kernel)
      for (std::size_t h : g.heads)
        for (std::size_t t : g.temporal) rows.push_back({tk, ck, h, t, 0.0, 0.0, 0});

  const std::size_t outer = std::min(config.train.threads, rows.size());
  parallel_for(rows.size(), outer, [&](std::size_t i) {
    SweepRow& row = rows[i];
    ModelSpec spec = config.model;
    spec.mcdc.temporal_kernel = row.temporal_kernel;
    spec.mcdc.channel_kernel = row.channel_kernel;
    spec.mcdc.heads = row.heads;
    spec.mcdc.temporal = row.temporal;
    training::TrainConfig tc = config.train;
    tc.seed = seed;
    tc.threads = std::max<std::size_t>(1, config.train.threads / std::max<std::size_t>(outer, 1));

    const auto& windows = windows_by_t.at(row.temporal);
    const auto plan = data::split(windows, config.mode, config.test_ratio, seed, tc.folds);
    data::NormStats stats;
    const auto normed = normalized_windows(windows, plan, stats);
    const auto init = spec.make(seed);
    row.parameters = init->params().scalar_count();
    std::unique_ptr<Classifier> trained;
    if (g.single_fold) {
      std::vector<data::CdgdWindow> tr, va;
      for (std::size_t f = 0; f < plan.folds.size(); ++f)
        for (std::size_t idx : plan.folds[f]) (f == 0 ? va : tr).push_back(normed[idx]);
      trained = std::move(training::train_fold(*init, tr, va, tc).model);
    } else {
      auto cv = training::cross_validate(*init, normed, plan, tc);
      trained = std::move(cv.folds[cv.best_fold].model);
    }
    const auto rep = eval::evaluate_report(*trained, pick(normed, plan.test), tc.threads);
    row.accuracy = rep.core.accuracy;
    row.macro_f1 = rep.core.macro_f1;
  });
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "temporal_kernel,channel_kernel,heads,temporal,accuracy,macro_f1,parameters\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.17g,%.17g,%zu\n", r.temporal_kernel,
                  r.channel_kernel, r.heads, r.temporal, r.accuracy, r.macro_f1, r.parameters);
    out << buf;
  }
  return out.str();
}

}  // namespace mcdc::run
