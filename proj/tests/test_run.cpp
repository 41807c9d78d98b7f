#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mcdc/error.hpp"
#include "mcdc/run.hpp"

using namespace mcdc;
using namespace mcdc::run;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("mcdc_test_run_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Two conditions, five transformers, 17 days each: 50 windows at T = 8.
std::string toy_recipe(const fs::path& dir) {
  data::SynthRecipe r;
  const auto base = data::default_recipe();
  r.classes = {base.classes[0], base.classes[6]};
  r.classes[0].transformers = 3;
  r.classes[1].transformers = 2;
  r.min_length = r.max_length = 17;
  r.noise = 0.1;
  const auto path = dir / "toy_recipe.json";
  write_text(path, data::recipe_to_json(r));
  return path.string();
}

RunConfig toy_config(const fs::path& dir) {
  json j = {{"seed", 5},
            {"output", (dir / "run").string()},
            {"data", {{"recipe", toy_recipe(dir)}, {"seed", 2}}},
            {"model", {{"temporal", 8}}},
            {"train", {{"threads", 1}}}};
  return parse_run_config(j.dump(), "toy");
}

}  // namespace

TEST_CASE("config: defaults, overrides and unknown keys") {
  const auto d = default_run_config();
  CHECK(d.train.epochs == 1000);
  CHECK(d.train.batch_size == 200);
  CHECK(d.train.lr0 == 0.01);
  CHECK(d.train.decay.size() == 2);
  CHECK(d.train.folds == 4);
  CHECK(d.model.mcdc.temporal == 12);
  CHECK(d.test_ratio == 0.2);

  const auto c = parse_run_config(R"({"seed": 9, "model": {"heads": 2}, "train": {"patience": null}})");
  CHECK(c.seed_value() == 9);
  CHECK(c.model.mcdc.heads == 2);
  CHECK(c.model.mcdc.temporal == 12);
  CHECK(c.train.patience == training::kNoEarlyStop);

  CHECK_THROWS_AS(parse_run_config(R"({"seed": 1, "model": {"depth": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": 1, "colour": "red"})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{bad json"), ConfigError);
  try {
    parse_run_config(R"({"seed": 1, "model": {"depth": 3}})", "my.json");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("my.json") != std::string::npos);
    CHECK(std::string(e.what()).find("model.depth") != std::string::npos);
  }

  const auto back = parse_run_config(run_config_to_json(c));
  CHECK(back.seed_value() == 9);
  CHECK(back.train.patience == training::kNoEarlyStop);
  CHECK(back.model.mcdc == c.model.mcdc);
}

TEST_CASE("config: seed is mandatory and paths are checked") {
  const auto c = parse_run_config(R"({"model": {"heads": 2}})");
  CHECK_FALSE(c.seed.has_value());
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(c.seed_value(), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": 1, "data": {"csv": "/no/such/file.csv"}})").validate(),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": 1, "model": {"kind": "svm"}})").validate(),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": 1, "split": {"test_ratio": 1.5}})").validate(),
                  ConfigError);
  CHECK_NOTHROW(parse_run_config(R"({"seed": 1})").validate());
}

TEST_CASE("pipeline: stage errors name their stage") {
  TempDir tmp("stages");
  const auto csv = tmp.path / "bad.csv";
  write_text(csv, std::string(data::kCsvHeader) + "\nA,110,NC,1,1,1,1,1,-4\n");
  DataSpec spec;
  spec.csv = csv.string();
  try {
    load_dataset(spec);
    FAIL("bad csv accepted");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load");
    CHECK(std::string(e.what()).find("stage 'load'") == 0);
  }

  write_text(csv, std::string(data::kCsvHeader) + "\nA,110,NC,1,1,1,1,1,1\n");
  const auto one_day = load_dataset(spec);
  try {
    prepare_windows(one_day, 8);
    FAIL("single observation accepted");
  } catch (const StageError& e) {
    CHECK(e.stage() == "interpolate");
  }

  write_text(csv, std::string(data::kCsvHeader) + "\nA,110,NC,1,1,1,1,1,1\nA,110,NC,3,1,1,1,1,1\n");
  try {
    prepare_windows(load_dataset(spec), 8);
    FAIL("short series accepted");
  } catch (const StageError& e) {
    CHECK(e.stage() == "window");
  }
}

TEST_CASE("train then eval: toy run, artifacts and reload") {
  TempDir tmp("train");
  const auto config = toy_config(tmp.path);
  const auto t0 = std::chrono::steady_clock::now();
  const auto outcome = cmd_train(config);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seconds < 60.0);
  CHECK(outcome.plan.window_count == 50);
  CHECK(outcome.cv.folds.size() == 4);

  const fs::path out = config.output;
  for (const char* f : {kCheckpointFile, kHistoryFile, kSplitFile}) CHECK(fs::exists(out / f));

  std::istringstream history(read_text(out / kHistoryFile));
  std::string line;
  std::getline(history, line);
  std::set<std::string> folds;
  while (std::getline(history, line)) folds.insert(line.substr(line.find(',') + 1, 1));
  CHECK(folds == std::set<std::string>{"0", "1", "2", "3", "m"});

  const auto ckpt = load_checkpoint(out / kCheckpointFile);
  CHECK(ckpt.stats == outcome.stats);
  CHECK(ckpt.model->params() == outcome.cv.best_model().params());

  EvalOptions opt;
  opt.threads = 1;
  const auto rep = cmd_eval(out / kCheckpointFile, config.data, out / kSplitFile, out / "eval", opt);
  CHECK(rep.samples == outcome.plan.test.size());
  CHECK(fs::exists(out / "eval" / kReportFile));
  CHECK(fs::exists(out / "eval" / kRocFile));
  const auto j = json::parse(read_text(out / "eval" / kReportFile));
  for (const char* k : {"Ac", "Macro-Pr", "Macro-Re", "Macro-F1"}) CHECK(j.at("table").contains(k));

  // Reloaded artifacts give the same numbers as the in-memory model.
  const auto series = load_dataset(config.data);
  const auto again = evaluate_checkpoint(ckpt, series, outcome.plan, opt);
  CHECK(report_to_json(again) == report_to_json(rep));
  const auto first = read_text(out / "eval" / kReportFile);
  cmd_eval(out / kCheckpointFile, config.data, out / kSplitFile, out / "eval", opt);
  CHECK(read_text(out / "eval" / kReportFile) == first);

  SUBCASE("training side is refused without the override") {
    EvalOptions train_side = opt;
    train_side.train_side = true;
    CHECK_THROWS_AS(evaluate_checkpoint(ckpt, series, outcome.plan, train_side), ContractError);
    train_side.allow_train_side = true;
    CHECK(evaluate_checkpoint(ckpt, series, outcome.plan, train_side).samples ==
          outcome.plan.train.size());
  }
  SUBCASE("mismatched plan or window length is a compatibility error") {
    auto plan = outcome.plan;
    plan.window_count += 1;
    CHECK_THROWS_AS(evaluate_checkpoint(ckpt, series, plan, opt), CompatibilityError);
    auto other = config;
    other.model.mcdc.temporal = 9;
    other.output = (tmp.path / "t9").string();
    other.train.epochs = 2;
    const auto o9 = train_pipeline(other);
    const auto plan9 = o9.plan;
    CHECK_THROWS_AS(evaluate_checkpoint(ckpt, series, plan9, opt), CompatibilityError);
  }
}

TEST_CASE("train is deterministic across reruns") {
  TempDir tmp("determinism");
  auto config = toy_config(tmp.path);
  config.train.epochs = 20;
  cmd_train(config);
  const auto a = read_text(fs::path(config.output) / kCheckpointFile);
  const auto split_a = read_text(fs::path(config.output) / kSplitFile);
  cmd_train(config);
  CHECK(read_text(fs::path(config.output) / kCheckpointFile) == a);
  CHECK(read_text(fs::path(config.output) / kSplitFile) == split_a);
}

TEST_CASE("sweep: cartesian rows and independent cells") {
  TempDir tmp("sweep");
  auto config = toy_config(tmp.path);
  config.train.epochs = 5;
  config.sweep.temporal_kernel = {3, 5};
  config.sweep.channel_kernel = {4, 6};
  config.sweep.heads = {2};
  config.sweep.temporal = {8};
  const auto rows = cmd_sweep(config);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].temporal_kernel == 3);
  CHECK(rows[0].channel_kernel == 4);
  CHECK(rows[3].temporal_kernel == 5);
  CHECK(rows[3].channel_kernel == 6);
  const auto csv = sweep_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  auto cell = config;
  cell.sweep.temporal_kernel = {5};
  cell.sweep.channel_kernel = {4};
  const auto single = cmd_sweep(cell);
  REQUIRE(single.size() == 1);
  CHECK(single[0].accuracy == rows[2].accuracy);
  CHECK(single[0].macro_f1 == rows[2].macro_f1);
  CHECK(single[0].parameters == rows[2].parameters);

  auto empty = config;
  empty.sweep.heads.clear();
  CHECK_THROWS_AS(cmd_sweep(empty), ConfigError);
  auto ann = config;
  ann.model.kind = "ann";
  CHECK_THROWS_AS(cmd_sweep(ann), ConfigError);
}

TEST_CASE("compare: identical configurations give p = 1") {
  TempDir tmp("compare");
  auto config = toy_config(tmp.path);
  config.train.epochs = 3;
  config.compare.models = {"mcdc", "mcdc"};
  config.compare.modes = {data::SplitMode::SampleWise};
  config.compare.repetitions = 3;
  config.compare.single_fold = true;
  const auto out = cmd_compare(config);
  REQUIRE(out.blocks.size() == 1);
  CHECK(out.blocks[0].p_values.at(0).p_value == doctest::Approx(1.0));
  CHECK(out.table.find("[sample-wise]") != std::string::npos);
  CHECK(json::parse(out.json).at("format") == "mcdc-compare");
}
