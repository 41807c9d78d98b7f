#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mcdc/checkpoint.hpp"
#include "mcdc/error.hpp"
#include "mcdc/evaluation.hpp"
#include "mcdc/run.hpp"
#include "mcdc/training.hpp"
#include "mcdc/verify.hpp"

namespace py = pybind11;
using namespace mcdc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Tensor& t) {
  Array a({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

Tensor from_array(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  Tensor t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), t.values().begin());
  return t;
}

Condition condition_arg(const std::string& name) {
  const auto c = parse_condition(name);
  if (!c) throw ConfigError("unknown condition '" + name + "'");
  return *c;
}

data::SynthRecipe recipe_arg(const std::string& recipe) {
  if (recipe == "default") return data::default_recipe();
  if (recipe == "facility") return data::facility_recipe();
  return data::load_recipe(recipe);
}

// Python-side model handle.
struct Model {
  std::shared_ptr<Classifier> impl;
  data::NormStats stats;
  bool has_stats = false;
};

Model make(const std::string& kind, std::uint64_t seed, std::size_t temporal, std::size_t heads,
           std::size_t temporal_kernel, std::size_t channel_kernel, std::size_t ffn_hidden,
           const std::string& ann_input) {
  McdcHyper h;
  h.temporal = temporal;
  h.heads = heads;
  h.temporal_kernel = temporal_kernel;
  h.channel_kernel = channel_kernel;
  h.ffn_hidden = ffn_hidden;
  h.attention = kind == "mcdc-matrix" ? attention::Kind::Matrix : attention::Kind::Conv;
  AnnHyper a;
  a.temporal = temporal;
  if (ann_input == "window") a.input = AnnInput::Window;
  else if (ann_input != "last-day") throw ConfigError("ann_input must be 'last-day' or 'window'");
  return {std::shared_ptr<Classifier>(make_model(kind, h, a, seed)), {}, false};
}

py::dict metrics_dict(const eval::Metrics& m) {
  py::dict d;
  d["Ac"] = m.accuracy;
  d["Macro-Pr"] = m.macro_precision;
  d["Macro-Re"] = m.macro_recall;
  d["Macro-F1"] = m.macro_f1;
  py::list per;
  for (const auto& c : m.per_class) {
    py::dict x;
    x["tp"] = c.tp;
    x["fp"] = c.fp;
    x["fn"] = c.fn;
    x["tn"] = c.tn;
    x["precision"] = c.precision;
    x["recall"] = c.recall;
    x["f1"] = c.f1;
    per.append(x);
  }
  d["per_class"] = per;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MCDC transformer condition diagnosis core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<CompatibilityError>(m, "CompatibilityError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("CONDITIONS") = std::vector<std::string>(kConditionNames.begin(), kConditionNames.end());
  m.attr("GASES") = std::vector<std::string>(kGasNames.begin(), kGasNames.end());

  py::class_<data::GasSeries>(m, "GasSeries")
      .def(py::init([](std::string id, int kv, const std::string& cond, std::vector<long> days,
                       const Array& readings) {
             data::GasSeries s;
             s.transformer_id = std::move(id);
             s.voltage_kv = kv;
             s.condition = condition_arg(cond);
             s.days = std::move(days);
             s.readings = from_array(readings);
             if (s.readings.rows() != kNumGases || s.readings.cols() != s.days.size())
               throw DimensionError("readings must be 5 x len(days)");
             return s;
           }),
           py::arg("transformer_id"), py::arg("voltage_kv"), py::arg("condition"),
           py::arg("days"), py::arg("readings"))
      .def_readonly("transformer_id", &data::GasSeries::transformer_id)
      .def_readonly("voltage_kv", &data::GasSeries::voltage_kv)
      .def_property_readonly("condition",
                             [](const data::GasSeries& s) { return std::string(condition_name(s.condition)); })
      .def_readonly("days", &data::GasSeries::days)
      .def_property_readonly("readings", [](const data::GasSeries& s) { return to_array(s.readings); })
      .def("__len__", &data::GasSeries::length)
      .def("__repr__", [](const data::GasSeries& s) {
        return "<GasSeries " + s.transformer_id + " " + std::string(condition_name(s.condition)) +
               " " + std::to_string(s.length()) + " days>";
      });

  m.def("synth_generate",
        [](const std::string& recipe, std::uint64_t seed) { return data::synth_generate(recipe_arg(recipe), seed); },
        py::arg("recipe") = "default", py::arg("seed"),
        "Synthetic series from 'default', 'facility' or a recipe JSON path.");
  m.def("load_series", [](const std::filesystem::path& p) { return data::load_series(p); },
        py::arg("path"));
  m.def("save_series",
        [](const std::filesystem::path& p, const std::vector<data::GasSeries>& s) { data::save_series(p, s); },
        py::arg("path"), py::arg("series"));
  m.def("interpolate_gaps", &data::interpolate_gaps, py::arg("series"));

  m.def("build_windows",
        [](const std::vector<data::GasSeries>& series, std::size_t temporal) {
          const auto w = data::build_windows(series, temporal);
          py::array_t<double> x({w.size(), kNumGases, temporal});
          py::array_t<std::int64_t> y(static_cast<py::ssize_t>(w.size()));
          auto* xp = x.mutable_data();
          auto* yp = y.mutable_data();
          std::vector<std::string> ids;
          for (std::size_t i = 0; i < w.size(); ++i) {
            std::copy(w[i].x.values().begin(), w[i].x.values().end(), xp + i * kNumGases * temporal);
            yp[i] = static_cast<std::int64_t>(condition_code(w[i].label));
            ids.push_back(w[i].transformer_id);
          }
          return py::make_tuple(x, y, ids);
        },
        py::arg("series"), py::arg("temporal"),
        "Overlapping windows as (X[N,5,T], labels[N], transformer ids).");

  py::class_<Model>(m, "Model")
      .def_property_readonly("kind", [](const Model& mo) { return mo.impl->kind(); })
      .def_property_readonly("temporal", [](const Model& mo) { return mo.impl->temporal(); })
      .def_property_readonly("classes", [](const Model& mo) { return mo.impl->classes(); })
      .def_property_readonly("parameter_count",
                             [](const Model& mo) { return mo.impl->params().scalar_count(); })
      .def("parameters",
           [](const Model& mo) {
             py::dict d;
             const auto& ps = mo.impl->params();
             for (std::size_t i = 0; i < ps.size(); ++i) d[py::str(ps.name(i))] = to_array(ps[i]);
             return d;
           })
      .def("forward",
           [](const Model& mo, const Array& window, bool raw) {
             Tensor x = from_array(window);
             if (!raw && mo.has_stats) x = data::normalize(x, mo.stats);
             return to_array(forward(*mo.impl, x)).attr("ravel")();
           },
           py::arg("window"), py::arg("raw") = false,
           "Class probabilities for one 5 x T window. Checkpoint models normalise the input "
           "with their stored statistics unless raw=True.")
      .def("predict",
           [](const Model& mo, const Array& window) {
             Tensor x = from_array(window);
             if (mo.has_stats) x = data::normalize(x, mo.stats);
             return std::string(condition_name(static_cast<Condition>(predict(*mo.impl, x))));
           },
           py::arg("window"))
      .def("save",
           [](const Model& mo, const std::filesystem::path& p) {
             save_checkpoint(p, *mo.impl, mo.has_stats ? mo.stats : data::NormStats{});
           },
           py::arg("path"));

  m.def("make_model", &make, py::arg("kind") = "mcdc", py::arg("seed") = 0,
        py::arg("temporal") = 12, py::arg("heads") = 4, py::arg("temporal_kernel") = 5,
        py::arg("channel_kernel") = 6, py::arg("ffn_hidden") = 64,
        py::arg("ann_input") = "last-day");
  m.def("load_checkpoint",
        [](const std::filesystem::path& p) {
          auto c = load_checkpoint(p);
          return Model{std::shared_ptr<Classifier>(std::move(c.model)), c.stats, true};
        },
        py::arg("path"));

  m.def("lr_schedule",
        [](std::size_t epoch) { return training::lr_schedule(epoch, training::TrainConfig{}); },
        py::arg("epoch"));

  m.def("metrics",
        [](const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred) {
          const auto cm = eval::confusion(truth, pred);
          py::dict d = metrics_dict(eval::metrics(cm));
          std::vector<std::vector<std::size_t>> rows(cm.classes(), std::vector<std::size_t>(cm.classes()));
          for (std::size_t t = 0; t < cm.classes(); ++t)
            for (std::size_t p = 0; p < cm.classes(); ++p) rows[t][p] = cm.at(t, p);
          d["confusion"] = rows;
          return d;
        },
        py::arg("truth"), py::arg("pred"));
  m.def("roc_auc",
        [](const std::vector<std::size_t>& truth, const Array& probs) {
          const auto r = eval::roc_auc(truth, from_array(probs));
          py::dict d;
          py::dict per;
          for (const auto& c : r.per_class) per[py::str(c.label)] = c.auc ? py::cast(*c.auc) : py::none();
          d["per_class"] = per;
          d["macro"] = r.macro_auc ? py::cast(*r.macro_auc) : py::none();
          d["micro"] = r.micro.auc ? py::cast(*r.micro.auc) : py::none();
          return d;
        },
        py::arg("truth"), py::arg("probs"));
  m.def("wilcoxon_rank_sum",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          const auto r = eval::wilcoxon_rank_sum(a, b);
          return py::make_tuple(r.rank_sum, r.p_value, r.exact);
        },
        py::arg("a"), py::arg("b"), "(rank sum of a, two-sided p, exact?)");

  m.def("train",
        [](const std::string& config_json) {
          const auto config = run::parse_run_config(config_json, "<python>");
          config.validate();
          run::TrainOutcome out;
          {
            py::gil_scoped_release release;
            out = run::cmd_train(config);
            run::write_text(std::filesystem::path(config.output) / "config.json",
                            run::run_config_to_json(config) + "\n");
          }
          py::dict d;
          d["output"] = config.output;
          d["train_windows"] = out.plan.train.size();
          d["test_windows"] = out.plan.test.size();
          d["best_fold"] = out.cv.best_fold;
          std::vector<double> acc;
          for (const auto& f : out.cv.folds) acc.push_back(f.best_val_accuracy);
          d["fold_val_accuracy"] = acc;
          return d;
        },
        py::arg("config_json"),
        "Run the train pipeline from a JSON config (merged over the defaults).");
  m.def("evaluate",
        [](const std::filesystem::path& run_dir, std::size_t threads) {
          const auto cfg = run::load_run_config(run_dir / "config.json");
          run::EvalOptions opt;
          opt.threads = threads == 0 ? default_threads() : threads;
          const auto rep = run::cmd_eval(run_dir / run::kCheckpointFile, cfg.data,
                                         run_dir / run::kSplitFile, run_dir, opt);
          return py::module_::import("json").attr("loads")(eval::report_to_json(rep));
        },
        py::arg("run_dir"), py::arg("threads") = 1,
        "Score a train run's test side; writes report.json and roc.csv.");

  m.def("verify",
        [](std::uint64_t seed) {
          verify::VerifyOptions o;
          o.seed = seed;
          std::vector<std::tuple<std::string, bool, std::string>> out;
          for (const auto& r : verify::run_all(o)) out.emplace_back(r.name, r.passed, r.detail);
          return out;
        },
        py::arg("seed") = 7, "Invariant suite as (name, passed, detail) tuples.");
}
