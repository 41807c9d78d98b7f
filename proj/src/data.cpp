#include "mcdc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "embedded_config.hpp"
#include "mcdc/error.hpp"
#include "mcdc/random.hpp"

namespace mcdc::data {

using nlohmann::json;

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV

std::vector<GasSeries> parse_series(std::istream& in, const std::string& source) {
  std::vector<GasSeries> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return out;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto expected = split_fields(kCsvHeader);
  const auto header = split_fields(line);
  for (std::size_t i = 0; i < std::max(header.size(), expected.size()); ++i) {
    if (i >= header.size()) {
      throw ParseError(source, line_no, "missing column '" + std::string(expected[i]) + "'");
    }
    if (i >= expected.size() || header[i] != expected[i]) {
      throw ParseError(source, line_no,
                       "unknown column '" + std::string(header[i]) + "' at position " +
                           std::to_string(i + 1) + " (expected header: " +
                           std::string(kCsvHeader) + ")");
    }
  }

  struct Row {
    long day;
    std::array<double, kNumGases> gas;
    std::size_t line;
  };
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<Row>> rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != expected.size()) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(expected.size()) + " fields, got " +
                           std::to_string(f.size()));
    }
    const std::string id(f[0]);
    if (id.empty()) throw ParseError(source, line_no, "empty transformer_id");
    int kv = 0;
    if (!parse_number(f[1], kv) ||
        std::find(kVoltageLevels.begin(), kVoltageLevels.end(), kv) == kVoltageLevels.end()) {
      throw ParseError(source, line_no,
                       "voltage_kv '" + std::string(f[1]) + "' not one of 35/110/220/500");
    }
    const auto cond = parse_condition(f[2]);
    if (!cond) throw ParseError(source, line_no, "unknown condition '" + std::string(f[2]) + "'");
    Row row{};
    row.line = line_no;
    if (!parse_number(f[3], row.day)) {
      throw ParseError(source, line_no, "bad day '" + std::string(f[3]) + "'");
    }
    for (std::size_t g = 0; g < kNumGases; ++g) {
      double v = 0.0;
      if (!parse_number(f[4 + g], v) || !std::isfinite(v)) {
        throw ParseError(source, line_no,
                         "bad " + std::string(kGasNames[g]) + " value '" + std::string(f[4 + g]) + "'");
      }
      if (v < 0.0) {
        throw ParseError(source, line_no,
                         "negative " + std::string(kGasNames[g]) + " concentration " +
                             std::string(f[4 + g]));
      }
      row.gas[g] = v;
    }

    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) {
      GasSeries s;
      s.transformer_id = id;
      s.voltage_kv = kv;
      s.condition = *cond;
      out.push_back(std::move(s));
      rows.emplace_back();
    } else {
      const GasSeries& s = out[it->second];
      if (s.condition != *cond || s.voltage_kv != kv) {
        throw ParseError(source, line_no,
                         "transformer '" + id + "' changes condition or voltage level");
      }
    }
    rows[it->second].push_back(row);
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& r = rows[i];
    std::stable_sort(r.begin(), r.end(), [](const Row& a, const Row& b) { return a.day < b.day; });
    for (std::size_t j = 1; j < r.size(); ++j) {
      if (r[j].day == r[j - 1].day) {
        throw ParseError(source, std::max(r[j].line, r[j - 1].line),
                         "duplicate day " + std::to_string(r[j].day) + " for transformer '" +
                             out[i].transformer_id + "' (first seen on line " +
                             std::to_string(std::min(r[j].line, r[j - 1].line)) + ")");
      }
    }
    GasSeries& s = out[i];
    s.readings = Tensor(kNumGases, r.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
      s.days.push_back(r[j].day);
      for (std::size_t g = 0; g < kNumGases; ++g) s.readings(g, j) = r[j].gas[g];
    }
  }
  return out;
}

std::vector<GasSeries> load_series(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return parse_series(in, path.string());
}

void write_series_csv(std::ostream& out, std::span<const GasSeries> series) {
  out << kCsvHeader << '\n';
  char buf[64];
  for (const auto& s : series) {
    for (std::size_t j = 0; j < s.length(); ++j) {
      out << s.transformer_id << ',' << s.voltage_kv << ',' << condition_name(s.condition) << ','
          << s.days[j];
      for (std::size_t g = 0; g < kNumGases; ++g) {
        const auto r = std::to_chars(buf, buf + sizeof buf, s.readings(g, j));
        out << ',' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
      }
      out << '\n';
    }
  }
}

void save_series(const std::filesystem::path& path, std::span<const GasSeries> series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_series_csv(out, series);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Gaps and windows

bool is_contiguous(const GasSeries& s) {
  for (std::size_t j = 1; j < s.days.size(); ++j)
    if (s.days[j] != s.days[j - 1] + 1) return false;
  return true;
}

GasSeries interpolate_gaps(const GasSeries& s) {
  if (s.length() < 2) {
    throw DataError("interpolate_gaps: transformer '" + s.transformer_id + "' has " +
                    std::to_string(s.length()) + " observation(s), need at least 2");
  }
  GasSeries out = s;
  const long first = s.days.front(), last = s.days.back();
  const auto len = static_cast<std::size_t>(last - first + 1);
  out.days.resize(len);
  out.readings = Tensor(kNumGases, len);
  std::size_t obs = 0;
  for (std::size_t j = 0; j < len; ++j) {
    const long day = first + static_cast<long>(j);
    out.days[j] = day;
    while (s.days[obs] < day) ++obs;  // s.days[obs] >= day
    for (std::size_t g = 0; g < kNumGases; ++g) {
      if (s.days[obs] == day) {
        out.readings(g, j) = s.readings(g, obs);
      } else {
        const double d0 = static_cast<double>(s.days[obs - 1]);
        const double d1 = static_cast<double>(s.days[obs]);
        const double v0 = s.readings(g, obs - 1), v1 = s.readings(g, obs);
        out.readings(g, j) = v0 + (v1 - v0) * (static_cast<double>(day) - d0) / (d1 - d0);
      }
    }
  }
  return out;
}

std::vector<CdgdWindow> overlapping_sample(const GasSeries& s, std::size_t window_len,
                                           std::size_t stride) {
  if (window_len == 0 || stride == 0) throw ConfigError("overlapping_sample: T and stride must be >= 1");
  if (!is_contiguous(s)) {
    throw ContractError("overlapping_sample: series '" + s.transformer_id +
                        "' has day gaps; interpolate first");
  }
  std::vector<CdgdWindow> out;
  const std::size_t len = s.length();
  if (len < window_len) {
    std::clog << "mcdc: series '" << s.transformer_id << "' (" << len
              << " days) shorter than window " << window_len << ", skipped\n";
    return out;
  }
  for (std::size_t start = 0; start + window_len <= len; start += stride) {
    CdgdWindow w;
    w.transformer_id = s.transformer_id;
    w.start_day = s.days[start];
    w.label = s.condition;
    w.x = Tensor(kNumGases, window_len);
    for (std::size_t g = 0; g < kNumGases; ++g)
      for (std::size_t t = 0; t < window_len; ++t) w.x(g, t) = s.readings(g, start + t);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<CdgdWindow> build_windows(std::span<const GasSeries> series, std::size_t window_len) {
  std::vector<CdgdWindow> out;
  for (const auto& s : series) {
    auto w = overlapping_sample(interpolate_gaps(s), window_len);
    std::move(w.begin(), w.end(), std::back_inserter(out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalisation

NormStats fit_normalizer(std::span<const CdgdWindow> train) {
  NormStats st;
  st.stddev.fill(1.0);
  if (train.empty()) return st;
  for (std::size_t g = 0; g < kNumGases; ++g) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& w : train)
      for (std::size_t t = 0; t < w.x.cols(); ++t, ++n) sum += w.x(g, t);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& w : train)
      for (std::size_t t = 0; t < w.x.cols(); ++t) {
        const double d = w.x(g, t) - mean;
        ss += d * d;
      }
    st.mean[g] = mean;
    st.stddev[g] = std::sqrt(ss / static_cast<double>(n));
  }
  return st;
}

Tensor normalize(const Tensor& x, const NormStats& st) {
  Tensor z(x.rows(), x.cols());
  for (std::size_t g = 0; g < x.rows(); ++g) {
    const double s = std::max(st.stddev[g], kStdFloor);
    for (std::size_t t = 0; t < x.cols(); ++t) z(g, t) = (x(g, t) - st.mean[g]) / s;
  }
  return z;
}

Tensor denormalize(const Tensor& z, const NormStats& st) {
  Tensor x(z.rows(), z.cols());
  for (std::size_t g = 0; g < z.rows(); ++g) {
    const double s = std::max(st.stddev[g], kStdFloor);
    for (std::size_t t = 0; t < z.cols(); ++t) x(g, t) = z(g, t) * s + st.mean[g];
  }
  return x;
}

std::vector<CdgdWindow> normalize(std::span<const CdgdWindow> windows, const NormStats& st) {
  std::vector<CdgdWindow> out(windows.begin(), windows.end());
  for (auto& w : out) w.x = normalize(w.x, st);
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::string_view split_mode_name(SplitMode m) {
  return m == SplitMode::SampleWise ? "sample-wise" : "facility-wise";
}

SplitMode parse_split_mode(std::string_view s) {
  if (s == "sample-wise" || s == "sample") return SplitMode::SampleWise;
  if (s == "facility-wise" || s == "facility") return SplitMode::FacilityWise;
  throw ConfigError("unknown split mode '" + std::string(s) + "'");
}

std::vector<std::vector<std::size_t>> kfold(std::span<const std::size_t> items, std::size_t k,
                                            std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2 (k=1 leaves no validation part)");
  if (k > items.size()) {
    throw ConfigError("kfold: k=" + std::to_string(k) + " exceeds " +
                      std::to_string(items.size()) + " training samples");
  }
  std::vector<std::size_t> order(items.begin(), items.end());
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

SplitPlan split(std::span<const CdgdWindow> windows, SplitMode mode, double test_ratio,
                std::uint64_t seed, std::size_t k) {
  if (!(test_ratio > 0.0 && test_ratio < 1.0)) throw ConfigError("split: test ratio must be in (0,1)");
  SplitPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  plan.test_ratio = test_ratio;
  plan.window_count = windows.size();
  plan.temporal = windows.empty() ? 0 : windows.front().x.cols();
  Rng rng(derive_seed(seed, 0));

  if (mode == SplitMode::SampleWise) {
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_test =
        static_cast<std::size_t>(std::llround(test_ratio * static_cast<double>(order.size())));
    plan.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    plan.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  } else {
    // Transformers per condition, in first-appearance order.
    std::map<Condition, std::vector<std::string>> by_condition;
    std::set<std::string> seen;
    for (const auto& w : windows) {
      if (seen.insert(w.transformer_id).second) by_condition[w.label].push_back(w.transformer_id);
    }
    std::set<std::string> test_ids;
    std::vector<std::string> missing;
    for (auto& [cond, ids] : by_condition) {
      if (ids.size() < 2) {
        missing.emplace_back(condition_name(cond));
        continue;
      }
      rng.shuffle(ids);
      auto n_test = static_cast<std::size_t>(
          std::ceil(test_ratio * static_cast<double>(ids.size()) - 1e-9));
      n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        (i < n_test ? plan.test_ids : plan.train_ids).push_back(ids[i]);
        if (i < n_test) test_ids.insert(ids[i]);
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw DataError("facility-wise split cannot cover conditions on both sides: " + list +
                      " (need at least 2 transformers each)");
    }
    std::sort(plan.train_ids.begin(), plan.train_ids.end());
    std::sort(plan.test_ids.begin(), plan.test_ids.end());
    for (std::size_t i = 0; i < windows.size(); ++i)
      (test_ids.count(windows[i].transformer_id) ? plan.test : plan.train).push_back(i);
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  if (plan.train.empty() || plan.test.empty()) throw DataError("split: one side is empty");
  plan.folds = kfold(plan.train, k, derive_seed(seed, 1));
  return plan;
}

std::string split_plan_to_json(const SplitPlan& p) {
  json j;
  j["format"] = "mcdc-split";
  j["version"] = 1;
  j["mode"] = split_mode_name(p.mode);
  j["seed"] = p.seed;
  j["test_ratio"] = p.test_ratio;
  j["window_count"] = p.window_count;
  j["temporal"] = p.temporal;
  j["train"] = p.train;
  j["test"] = p.test;
  j["train_ids"] = p.train_ids;
  j["test_ids"] = p.test_ids;
  j["folds"] = p.folds;
  return j.dump(1);
}

SplitPlan split_plan_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "mcdc-split") throw ConfigError("not a split plan");
    SplitPlan p;
    p.mode = parse_split_mode(j.at("mode").get<std::string>());
    p.seed = j.at("seed").get<std::uint64_t>();
    p.test_ratio = j.at("test_ratio").get<double>();
    p.window_count = j.at("window_count").get<std::size_t>();
    p.temporal = j.at("temporal").get<std::size_t>();
    p.train = j.at("train").get<std::vector<std::size_t>>();
    p.test = j.at("test").get<std::vector<std::size_t>>();
    p.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    p.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    p.folds = j.at("folds").get<std::vector<std::vector<std::size_t>>>();
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("split plan: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic recipes

namespace {

std::array<double, kNumGases> gas_array(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != kNumGases) {
    throw ConfigError(std::string("recipe: '") + key + "' needs 5 values (h2,ch4,c2h6,c2h4,c2h2)");
  }
  std::array<double, kNumGases> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

}  // namespace

SynthRecipe parse_recipe_json(const std::string& text) {
  SynthRecipe r;
  try {
    const json j = json::parse(text);
    r.min_length = j.value("min_length", r.min_length);
    r.max_length = j.value("max_length", r.max_length);
    r.noise = j.value("noise", r.noise);
    r.level_offset = j.value("level_offset", r.level_offset);
    r.gap_probability = j.value("gap_probability", r.gap_probability);
    for (const auto& c : j.at("classes")) {
      ClassRecipe cr;
      const auto cond = parse_condition(c.at("condition").get<std::string>());
      if (!cond) throw ConfigError("recipe: unknown condition " + c.at("condition").dump());
      cr.condition = *cond;
      cr.transformers = c.at("transformers").get<std::size_t>();
      cr.base = gas_array(c, "base");
      cr.slope = gas_array(c, "slope");
      cr.amplitude = gas_array(c, "amplitude");
      cr.period = c.at("period").get<double>();
      r.classes.push_back(cr);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("recipe: ") + e.what());
  }
  if (r.classes.empty()) throw ConfigError("recipe: empty class set");
  if (r.min_length < 2 || r.max_length < r.min_length)
    throw ConfigError("recipe: need 2 <= min_length <= max_length");
  if (r.noise < 0 || r.level_offset < 0 || r.gap_probability < 0 || r.gap_probability >= 1)
    throw ConfigError("recipe: noise/level_offset must be >= 0 and gap_probability in [0,1)");
  for (const auto& c : r.classes)
    if (c.transformers == 0 || !(c.period > 0))
      throw ConfigError("recipe: every class needs transformers >= 1 and period > 0");
  return r;
}

std::string recipe_to_json(const SynthRecipe& r) {
  json j;
  j["min_length"] = r.min_length;
  j["max_length"] = r.max_length;
  j["noise"] = r.noise;
  j["level_offset"] = r.level_offset;
  j["gap_probability"] = r.gap_probability;
  j["classes"] = json::array();
  for (const auto& c : r.classes) {
    j["classes"].push_back({{"condition", condition_name(c.condition)},
                            {"transformers", c.transformers},
                            {"base", c.base},
                            {"slope", c.slope},
                            {"amplitude", c.amplitude},
                            {"period", c.period}});
  }
  return j.dump(2);
}

SynthRecipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipe '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_recipe_json(ss.str());
}

SynthRecipe default_recipe() { return parse_recipe_json(std::string(embedded::kDefaultRecipe)); }
SynthRecipe facility_recipe() { return parse_recipe_json(std::string(embedded::kFacilityRecipe)); }

std::vector<GasSeries> synth_generate(const SynthRecipe& recipe, std::uint64_t seed) {
  if (recipe.classes.empty()) throw ConfigError("synth_generate: empty class set");
  std::vector<GasSeries> out;
  for (std::size_t ci = 0; ci < recipe.classes.size(); ++ci) {
    const ClassRecipe& c = recipe.classes[ci];
    for (std::size_t k = 0; k < c.transformers; ++k) {
      Rng rng(derive_seed(seed, (ci << 20) + k));
      GasSeries s;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%02zu", std::string(condition_name(c.condition)).c_str(), k + 1);
      s.transformer_id = id;
      s.condition = c.condition;
      s.voltage_kv = kVoltageLevels[rng.index(kVoltageLevels.size())];
      const std::size_t len =
          recipe.min_length + rng.index(recipe.max_length - recipe.min_length + 1);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::array<double, kNumGases> offset{};
      for (std::size_t g = 0; g < kNumGases; ++g)
        offset[g] = recipe.level_offset * c.base[g] * rng.normal();

      std::vector<std::size_t> kept;
      for (std::size_t t = 0; t < len; ++t) {
        const bool interior = t > 0 && t + 1 < len;
        const bool drop = rng.uniform() < recipe.gap_probability;
        if (!(interior && drop)) kept.push_back(t);
      }
      s.readings = Tensor(kNumGases, kept.size());
      const long first_day = 1;
      for (std::size_t j = 0; j < kept.size(); ++j) {
        const double t = static_cast<double>(kept[j]);
        s.days.push_back(first_day + static_cast<long>(kept[j]));
        const double wave = std::sin(2.0 * std::numbers::pi * t / c.period + phase);
        for (std::size_t g = 0; g < kNumGases; ++g) {
          const double v = c.base[g] + offset[g] + c.slope[g] * t + c.amplitude[g] * wave +
                           recipe.noise * c.base[g] * rng.normal();
          s.readings(g, j) = std::max(0.0, v);
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace mcdc::data
