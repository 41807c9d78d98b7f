#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <limits>

#include "json.hpp"
#include "mcdc/checkpoint.hpp"
#include "mcdc/error.hpp"
#include "mcdc/random.hpp"

using namespace mcdc;
using nlohmann::json;

namespace {

data::NormStats some_stats() {
  data::NormStats s;
  for (std::size_t g = 0; g < kNumGases; ++g) {
    s.mean[g] = 10.0 / 3.0 * static_cast<double>(g + 1);
    s.stddev[g] = std::sqrt(2.0) * static_cast<double>(g + 1);
  }
  return s;
}

McdcHyper small() {
  McdcHyper h;
  h.temporal = 9;
  h.heads = 3;
  h.temporal_kernel = 2;
  h.channel_kernel = 4;
  h.ffn_hidden = 10;
  return h;
}

Tensor window(std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x(kNumGases, T);
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("checkpoint: every model kind round-trips bit for bit") {
  AnnHyper ann;
  ann.temporal = 9;
  for (const std::string kind : {"mcdc", "mcdc-matrix", "ann"}) {
    for (AnnInput input : {AnnInput::LastDay, AnnInput::Window}) {
      ann.input = input;
      const auto model = make_model(kind, small(), ann, 42);
      CHECK(model->kind() == kind);
      const auto text = checkpoint_to_json(*model, some_stats());
      const auto back = checkpoint_from_json(text);
      CHECK(back.model->kind() == kind);
      CHECK(back.model->params() == model->params());
      CHECK(back.stats == some_stats());
      CHECK(back.model->temporal() == 9);
      const auto x = window(9, 3);
      CHECK(forward(*back.model, x) == forward(*model, x));
      CHECK(checkpoint_to_json(*back.model, back.stats) == text);
    }
  }
}

TEST_CASE("checkpoint: file save and load") {
  const auto dir = std::filesystem::temp_directory_path() / "mcdc_test_checkpoint";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.json";
  const McdcModel m(small(), 5);
  save_checkpoint(path, m, some_stats());
  const auto back = load_checkpoint(path);
  CHECK(back.model->params() == m.params());
  const auto j = json::parse(checkpoint_to_json(m, some_stats()));
  CHECK(j.at("format") == "mcdc-checkpoint");
  CHECK(j.at("version") == kCheckpointVersion);
  CHECK(j.at("kind") == "mcdc");
  CHECK(j.at("params").size() == m.params().size());
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint: rejects corrupt or mismatched files") {
  const McdcModel m(small(), 5);
  const auto good = json::parse(checkpoint_to_json(m, some_stats()));

  CHECK_THROWS_AS(checkpoint_from_json("{"), ConfigError);
  auto j = good;
  j["format"] = "other";
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), ConfigError);
  j = good;
  j["version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), ConfigError);
  j = good;
  j["kind"] = "mcdc-matrix";
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), ConfigError);
  j = good;
  j["kind"] = "svm";
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), ConfigError);
  j = good;
  j["params"].erase(0);
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), ConfigError);
  j = good;
  j["params"][0]["name"] = "renamed";
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), ConfigError);
  j = good;
  j["params"][0]["rows"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(j.dump()), ConfigError);
  j = good;
  j.erase("norm");
  try {
    checkpoint_from_json(j.dump(), "run/x.json");
    FAIL("missing norm accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("run/x.json", 0) == 0);
  }

  McdcModel bad(small(), 5);
  bad.params()[0][0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(checkpoint_to_json(bad, some_stats()), ContractError);
}

TEST_CASE("make_model: unknown kind") {
  CHECK_THROWS_AS(make_model("svm", McdcHyper{}, AnnHyper{}, 0), ConfigError);
  CHECK(make_model("mcdc", McdcHyper{}, AnnHyper{}, 1)->params() ==
        make_model("mcdc", McdcHyper{}, AnnHyper{}, 1)->params());
}
