// mcdc: synthetic data, training, evaluation, comparisons, sweeps and the
// self-verification suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mcdc/checkpoint.hpp"
#include "mcdc/data.hpp"
#include "mcdc/error.hpp"
#include "mcdc/evaluation.hpp"
#include "mcdc/run.hpp"
#include "mcdc/verify.hpp"

namespace fs = std::filesystem;
using namespace mcdc;

namespace {

// Flags that may override fields of the run config.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, csv, recipe, kind, split;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> epochs, batch_size, folds, patience, threads;
  std::optional<std::size_t> temporal, heads, temporal_kernel, channel_kernel, ffn_hidden;
  std::optional<double> test_ratio;
  bool no_early_stop = false;
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Run config JSON (defaults: config/default_run.json)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for splits, initialisation and shuffling");
  cmd->add_option("-o,--out", o.out, "Output directory");
  cmd->add_option("--csv", o.csv, "Dataset CSV (instead of synthetic data)");
  cmd->add_option("--recipe", o.recipe, "Synthetic recipe: default, facility or a JSON path");
  cmd->add_option("--data-seed", o.data_seed, "Synthetic generator seed");
  cmd->add_option("--kind", o.kind, "Model: mcdc, mcdc-matrix or ann");
  cmd->add_option("--split", o.split, "sample-wise or facility-wise");
  cmd->add_option("--test-ratio", o.test_ratio, "Held-out fraction");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--folds", o.folds);
  cmd->add_option("--patience", o.patience);
  cmd->add_flag("--no-early-stop", o.no_early_stop);
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  cmd->add_option("-T,--temporal", o.temporal, "Window length in days");
  cmd->add_option("--heads", o.heads);
  cmd->add_option("--temporal-kernel", o.temporal_kernel);
  cmd->add_option("--channel-kernel", o.channel_kernel);
  cmd->add_option("--ffn-hidden", o.ffn_hidden);
}

run::RunConfig resolve(const Overrides& o) {
  run::RunConfig c = o.config.empty() ? run::parse_run_config("{}", "defaults")
                                      : run::load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output = *o.out;
  if (o.csv) c.data.csv = *o.csv;
  if (o.recipe) c.data.recipe = *o.recipe;
  if (o.data_seed) c.data.seed = *o.data_seed;
  if (o.kind) c.model.kind = *o.kind;
  c.model.mcdc.attention =
      c.model.kind == "mcdc-matrix" ? attention::Kind::Matrix : attention::Kind::Conv;
  if (o.split) c.mode = data::parse_split_mode(*o.split);
  if (o.test_ratio) c.test_ratio = *o.test_ratio;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.folds) c.train.folds = *o.folds;
  if (o.patience) c.train.patience = *o.patience;
  if (o.no_early_stop) c.train.patience = training::kNoEarlyStop;
  if (o.threads) c.train.threads = *o.threads == 0 ? default_threads() : *o.threads;
  if (o.temporal) c.model.mcdc.temporal = c.model.ann.temporal = *o.temporal;
  if (o.heads) c.model.mcdc.heads = *o.heads;
  if (o.temporal_kernel) c.model.mcdc.temporal_kernel = *o.temporal_kernel;
  if (o.channel_kernel) c.model.mcdc.channel_kernel = *o.channel_kernel;
  if (o.ffn_hidden) c.model.mcdc.ffn_hidden = *o.ffn_hidden;
  c.validate();
  return c;
}

void print_report(const eval::EvalReport& rep) {
  std::printf("%s on %zu windows\n", rep.model_kind.c_str(), rep.samples);
  std::printf("Ac %.4f  Macro-Pr %.4f  Macro-Re %.4f  Macro-F1 %.4f\n", rep.core.accuracy,
              rep.core.macro_precision, rep.core.macro_recall, rep.core.macro_f1);
  if (rep.roc.macro_auc) std::printf("macro AUC %.4f", *rep.roc.macro_auc);
  if (rep.roc.micro.auc) std::printf("  micro AUC %.4f", *rep.roc.micro.auc);
  std::printf("\nconfusion (rows true, cols predicted)\n    ");
  for (std::size_t c = 0; c < rep.cm.classes(); ++c)
    std::printf("%5s", std::string(condition_name(static_cast<Condition>(c))).c_str());
  std::printf("\n");
  for (std::size_t t = 0; t < rep.cm.classes(); ++t) {
    std::printf("%4s", std::string(condition_name(static_cast<Condition>(t))).c_str());
    for (std::size_t p = 0; p < rep.cm.classes(); ++p) std::printf("%5zu", rep.cm.at(t, p));
    std::printf("\n");
  }
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!item.empty()) out.push_back(std::stoul(item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCDC transformer condition diagnosis from consecutive dissolved-gas data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mcdc 0.1.0");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset CSV");
  std::string gen_recipe = "default", gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--recipe", gen_recipe, "default, facility or a recipe JSON path");
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("-o,--out", gen_out, "Output CSV path")->required();

  // train
  auto* train = app.add_subcommand("train", "Cross-validate a model and save its artifacts");
  Overrides train_o;
  add_config_flags(train, train_o);

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on the split plan's test side");
  std::string ev_run, ev_ckpt, ev_plan, ev_out, ev_csv, ev_recipe;
  std::optional<std::uint64_t> ev_data_seed;
  bool ev_train_side = false, ev_allow = false;
  std::size_t ev_threads = 0;
  ev->add_option("--run", ev_run, "Directory written by train");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path (default RUN/checkpoint.json)");
  ev->add_option("--split-plan", ev_plan, "Split plan path (default RUN/split.json)");
  ev->add_option("-o,--out", ev_out, "Where report.json and roc.csv go (default RUN)");
  ev->add_option("--csv", ev_csv, "Dataset CSV (default: the run's recorded data source)");
  ev->add_option("--recipe", ev_recipe, "Synthetic recipe (default: the run's recorded one)");
  ev->add_option("--data-seed", ev_data_seed, "Synthetic generator seed");
  ev->add_flag("--train-side", ev_train_side, "Score the training side instead");
  ev->add_flag("--allow-train-side", ev_allow, "Confirm that scoring training data is intended");
  ev->add_option("--threads", ev_threads, "Worker threads (0 = all cores)");

  // compare
  auto* cmp = app.add_subcommand("compare", "Repeated model comparison with rank-sum p-values");
  Overrides cmp_o;
  add_config_flags(cmp, cmp_o);
  std::optional<std::size_t> cmp_reps;
  std::vector<std::string> cmp_models, cmp_modes;
  bool cmp_single = false;
  cmp->add_option("--repetitions", cmp_reps);
  cmp->add_option("--models", cmp_models, "Model kinds to compare")->delimiter(',');
  cmp->add_option("--modes", cmp_modes, "Split modes")->delimiter(',');
  cmp->add_flag("--single-fold", cmp_single, "Train one fold per repetition instead of all k");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Accuracy over a hyperparameter grid");
  Overrides sw_o;
  add_config_flags(sw, sw_o);
  std::string sw_tk, sw_ck, sw_heads, sw_t;
  sw->add_option("--grid-temporal-kernel", sw_tk, "Comma-separated temporal kernel sizes");
  sw->add_option("--grid-channel-kernel", sw_ck, "Comma-separated channel kernel sizes");
  sw->add_option("--grid-heads", sw_heads, "Comma-separated head counts");
  sw->add_option("--grid-temporal", sw_t, "Comma-separated window lengths");

  // verify
  auto* ver = app.add_subcommand("verify", "Run the invariant suite");
  verify::VerifyOptions ver_o;
  ver->add_option("--seed", ver_o.seed);
  ver->add_flag("--inject-fault", ver_o.inject_kernel_fault,
                "Corrupt a kernel gradient to demonstrate the check fails");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      data::SynthRecipe recipe = gen_recipe == "default"    ? data::default_recipe()
                                 : gen_recipe == "facility" ? data::facility_recipe()
                                                            : data::load_recipe(gen_recipe);
      const auto series = data::synth_generate(recipe, gen_seed);
      data::save_series(gen_out, series);
      std::size_t rows = 0;
      for (const auto& s : series) rows += s.length();
      std::printf("wrote %zu transformers, %zu rows to %s\n", series.size(), rows, gen_out.c_str());
      return 0;
    }

    if (*train) {
      const run::RunConfig cfg = resolve(train_o);
      const auto out = run::cmd_train(cfg);
      run::write_text(fs::path(cfg.output) / "config.json", run::run_config_to_json(cfg) + "\n");
      std::printf("%s: %zu train / %zu test windows (%s)\n", cfg.model.kind.c_str(),
                  out.plan.train.size(), out.plan.test.size(),
                  std::string(data::split_mode_name(cfg.mode)).c_str());
      for (const auto& f : out.cv.folds) {
        std::printf("fold %zu: %zu epochs, best epoch %zu, val loss %.4f, val acc %.4f%s\n",
                    f.history.fold, f.history.epochs.size(), f.history.best_epoch,
                    f.best_val_loss, f.best_val_accuracy, f.history.stopped_early ? " (early stop)" : "");
      }
      std::printf("best fold %zu; artifacts in %s\n", out.cv.best_fold, cfg.output.c_str());
      return 0;
    }

    if (*ev) {
      if (ev_run.empty() && (ev_ckpt.empty() || ev_plan.empty()))
        throw ConfigError("eval: give --run or both --checkpoint and --split-plan");
      const fs::path dir = ev_run;
      const fs::path ckpt = ev_ckpt.empty() ? dir / run::kCheckpointFile : fs::path(ev_ckpt);
      const fs::path plan = ev_plan.empty() ? dir / run::kSplitFile : fs::path(ev_plan);
      const fs::path out = !ev_out.empty() ? fs::path(ev_out) : !ev_run.empty() ? dir : ckpt.parent_path();
      run::DataSpec data;
      if (!ev_run.empty() && fs::exists(dir / "config.json"))
        data = run::load_run_config(dir / "config.json").data;
      if (!ev_csv.empty()) data.csv = ev_csv;
      if (!ev_recipe.empty()) {
        data.recipe = ev_recipe;
        data.csv.clear();
      }
      if (ev_data_seed) data.seed = *ev_data_seed;
      run::EvalOptions opts;
      opts.train_side = ev_train_side;
      opts.allow_train_side = ev_allow;
      opts.threads = ev_threads == 0 ? default_threads() : ev_threads;
      const auto rep = run::cmd_eval(ckpt, data, plan, out, opts);
      print_report(rep);
      std::printf("wrote %s and %s in %s\n", run::kReportFile, run::kRocFile, out.string().c_str());
      return 0;
    }

    if (*cmp) {
      run::RunConfig cfg = resolve(cmp_o);
      if (cmp_reps) cfg.compare.repetitions = *cmp_reps;
      if (!cmp_models.empty()) cfg.compare.models = cmp_models;
      if (!cmp_modes.empty()) {
        cfg.compare.modes.clear();
        for (const auto& m : cmp_modes) cfg.compare.modes.push_back(data::parse_split_mode(m));
      }
      if (cmp_single) cfg.compare.single_fold = true;
      const auto out = run::cmd_compare(cfg);
      fs::create_directories(cfg.output);
      run::write_text(fs::path(cfg.output) / "compare.json", out.json + "\n");
      run::write_text(fs::path(cfg.output) / "compare.txt", out.table);
      std::fputs(out.table.c_str(), stdout);
      return 0;
    }

    if (*sw) {
      run::RunConfig cfg = resolve(sw_o);
      if (!sw_tk.empty()) cfg.sweep.temporal_kernel = parse_list(sw_tk);
      if (!sw_ck.empty()) cfg.sweep.channel_kernel = parse_list(sw_ck);
      if (!sw_heads.empty()) cfg.sweep.heads = parse_list(sw_heads);
      if (!sw_t.empty()) cfg.sweep.temporal = parse_list(sw_t);
      const auto rows = run::cmd_sweep(cfg);
      const std::string csv = run::sweep_csv(rows);
      fs::create_directories(cfg.output);
      run::write_text(fs::path(cfg.output) / "sweep.csv", csv);
      std::fputs(csv.c_str(), stdout);
      return 0;
    }

    if (*ver) {
      const auto results = verify::run_all(ver_o);
      std::fputs(verify::format_results(results).c_str(), stdout);
      const bool ok = verify::all_passed(results);
      std::printf("%s\n", ok ? "all checks passed" : "verification FAILED");
      return ok ? 0 : 1;
    }
  } catch (const mcdc::Error& e) {
    std::fprintf(stderr, "mcdc: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mcdc: unexpected error: %s\n", e.what());
    return 3;
  }
  return 0;
}
