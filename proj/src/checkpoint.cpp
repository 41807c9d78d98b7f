#include "mcdc/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "mcdc/error.hpp"

namespace mcdc {

using nlohmann::json;

namespace {

json mcdc_hyper_json(const McdcHyper& h) {
  return {{"temporal_kernel", h.temporal_kernel},
          {"channel_kernel", h.channel_kernel},
          {"heads", h.heads},
          {"temporal", h.temporal},
          {"classes", h.classes},
          {"ffn_hidden", h.ffn_hidden},
          {"attention", h.attention == attention::Kind::Conv ? "conv" : "matrix"}};
}

McdcHyper mcdc_hyper_from(const json& j) {
  McdcHyper h;
  h.temporal_kernel = j.at("temporal_kernel").get<std::size_t>();
  h.channel_kernel = j.at("channel_kernel").get<std::size_t>();
  h.heads = j.at("heads").get<std::size_t>();
  h.temporal = j.at("temporal").get<std::size_t>();
  h.classes = j.at("classes").get<std::size_t>();
  h.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  const auto att = j.at("attention").get<std::string>();
  if (att == "conv") {
    h.attention = attention::Kind::Conv;
  } else if (att == "matrix") {
    h.attention = attention::Kind::Matrix;
  } else {
    throw ConfigError("unknown attention kind '" + att + "'");
  }
  return h;
}

json ann_hyper_json(const AnnHyper& h) {
  return {{"temporal", h.temporal},
          {"hidden1", h.hidden1},
          {"hidden2", h.hidden2},
          {"classes", h.classes},
          {"input", h.input == AnnInput::LastDay ? "last-day" : "window"}};
}

AnnHyper ann_hyper_from(const json& j) {
  AnnHyper h;
  h.temporal = j.at("temporal").get<std::size_t>();
  h.hidden1 = j.at("hidden1").get<std::size_t>();
  h.hidden2 = j.at("hidden2").get<std::size_t>();
  h.classes = j.at("classes").get<std::size_t>();
  const auto in = j.at("input").get<std::string>();
  if (in == "last-day") {
    h.input = AnnInput::LastDay;
  } else if (in == "window") {
    h.input = AnnInput::Window;
  } else {
    throw ConfigError("unknown ann input '" + in + "'");
  }
  return h;
}

}  // namespace

std::unique_ptr<Classifier> make_model(const std::string& kind, const McdcHyper& mcdc,
                                       const AnnHyper& ann, std::uint64_t seed) {
  if (kind == "mcdc") {
    McdcHyper h = mcdc;
    h.attention = attention::Kind::Conv;
    return std::make_unique<McdcModel>(h, seed);
  }
  if (kind == "mcdc-matrix") return std::make_unique<McdcModel>(mcdc_matrix_variant(mcdc, seed));
  if (kind == "ann") return std::make_unique<AnnModel>(ann, seed);
  throw ConfigError("unknown model kind '" + kind + "' (expected mcdc, mcdc-matrix or ann)");
}

std::string checkpoint_to_json(const Classifier& model, const data::NormStats& stats) {
  json j;
  j["format"] = "mcdc-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = model.kind();
  if (const auto* m = dynamic_cast<const McdcModel*>(&model)) {
    j["hyper"] = mcdc_hyper_json(m->hyper());
  } else if (const auto* a = dynamic_cast<const AnnModel*>(&model)) {
    j["hyper"] = ann_hyper_json(a->hyper());
  } else {
    throw ContractError("checkpoint: unsupported model type '" + model.kind() + "'");
  }
  j["norm"] = {{"mean", stats.mean}, {"stddev", stats.stddev}};
  json params = json::array();
  const ParamSet& ps = model.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].all_finite())
      throw ContractError("checkpoint: parameter '" + ps.name(i) + "' is not finite");
    params.push_back({{"name", ps.name(i)},
                      {"rows", ps[i].rows()},
                      {"cols", ps[i].cols()},
                      {"data", ps[i].storage()}});
  }
  j["params"] = params;
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text, const std::string& source) {
  Checkpoint out;
  try {
    const json j = json::parse(text);
    if (j.at("format") != "mcdc-checkpoint") throw ConfigError("not an mcdc checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ConfigError("unsupported checkpoint version " + j.at("version").dump());
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "ann") {
      out.model = std::make_unique<AnnModel>(AnnModel::zeros(ann_hyper_from(j.at("hyper"))));
    } else if (kind == "mcdc" || kind == "mcdc-matrix") {
      out.model = std::make_unique<McdcModel>(McdcModel::zeros(mcdc_hyper_from(j.at("hyper"))));
      if (out.model->kind() != kind)
        throw ConfigError("kind '" + kind + "' disagrees with the stored attention type");
    } else {
      throw ConfigError("unknown model kind '" + kind + "'");
    }
    out.stats.mean = j.at("norm").at("mean").get<std::array<double, kNumGases>>();
    out.stats.stddev = j.at("norm").at("stddev").get<std::array<double, kNumGases>>();

    ParamSet& ps = out.model->params();
    const auto& params = j.at("params");
    if (params.size() != ps.size()) {
      throw ConfigError("expected " + std::to_string(ps.size()) + " parameter tensors, found " +
                        std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& p = params[i];
      const auto name = p.at("name").get<std::string>();
      if (name != ps.name(i))
        throw ConfigError("parameter " + std::to_string(i) + " is '" + name + "', expected '" +
                          ps.name(i) + "'");
      Tensor t(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>(),
               p.at("data").get<std::vector<double>>());
      if (!t.same_shape(ps[i]))
        throw ConfigError("parameter '" + name + "' has shape " + t.shape_string() +
                          ", expected " + ps[i].shape_string());
      ps[i] = std::move(t);
    }
  } catch (const json::exception& e) {
    throw ConfigError(source + ": malformed checkpoint: " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Classifier& model,
                     const data::NormStats& stats) {
  const std::string text = checkpoint_to_json(model, stats);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out << text << '\n';
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str(), path.string());
}

}  // namespace mcdc
