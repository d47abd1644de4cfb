#include "mrfseg/model_io.hpp"

#include <fstream>

namespace mrfseg {

FittedModel fit_model(const TrainingSet& training, std::optional<double> sigma, double log_clamp) {
  const double width = sigma ? *sigma : default_parzen_width(training);
  return FittedModel{ParzenModel(training, width), fit_gaussian_model(training, log_clamp)};
}

nlohmann::json model_to_json(const FittedModel& model) {
  const int d = model.parzen.channels();
  nlohmann::json j;
  j["channels"] = d;
  j["sigma"] = model.parzen.sigma();
  j["log_clamp"] = model.gaussian.log_clamp();
  nlohmann::json tissues = nlohmann::json::object();
  for (Tissue t : model.parzen.training().tissues()) {
    nlohmann::json tj;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : model.parzen.training().of(t)) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < d; ++c) row.push_back(p[c]);
      pts.push_back(row);
    }
    tj["points"] = pts;
    if (model.gaussian.models(t)) {
      const auto& g = model.gaussian.tissue(t);
      nlohmann::json mean = nlohmann::json::array();
      nlohmann::json cov = nlohmann::json::array();
      for (int r = 0; r < d; ++r) {
        mean.push_back(g.mean[r]);
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < d; ++c) row.push_back(g.cov(r, c));
        cov.push_back(row);
      }
      tj["log_mean"] = mean;
      tj["log_cov"] = cov;
    }
    tissues[std::string(tissue_name(t))] = tj;
  }
  j["tissues"] = tissues;
  return j;
}

FittedModel model_from_json(const nlohmann::json& j) {
  try {
    const int d = j.at("channels").get<int>();
    if (d != 1 && d != 2) throw FormatError("model channels must be 1 or 2");
    TrainingSet training;
    training.channels = d;
    GaussianTissueModel gaussian(d, j.at("log_clamp").get<double>());
    for (const auto& [name, tj] : j.at("tissues").items()) {
      const auto t = parse_tissue(name);
      if (!t || *t == Tissue::unclassified) throw FormatError("unknown tissue '" + name + "'");
      for (const auto& row : tj.at("points")) {
        if (row.size() != static_cast<std::size_t>(d)) throw FormatError("point has wrong echo count");
        EchoVector p{};
        for (int c = 0; c < d; ++c) p[c] = row[c].get<double>();
        training.of(*t).push_back(p);
      }
      if (tj.contains("log_mean")) {
        EchoVector mean{};
        EchoMatrix cov;
        for (int r = 0; r < d; ++r) {
          mean[r] = tj.at("log_mean").at(r).get<double>();
          for (int c = 0; c < d; ++c) cov(r, c) = tj.at("log_cov").at(r).at(c).get<double>();
        }
        gaussian.set(*t, mean, cov);
      }
    }
    return FittedModel{ParzenModel(std::move(training), j.at("sigma").get<double>()),
                       std::move(gaussian)};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON is malformed: ") + e.what());
  }
}

void save_model(const std::filesystem::path& p, const FittedModel& model) {
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write " + p.string());
  out << model_to_json(model).dump(1) << '\n';
  if (!out) throw FormatError("failed writing " + p.string());
}

FittedModel load_model(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

TissueModels make_tissue_models(const FittedModel& model, bool use_lut,
                                std::optional<std::size_t> lut_bins) {
  TissueModels m{model.parzen, model.gaussian, std::nullopt};
  if (use_lut) m.lut.emplace(m.parzen, lut_bins.value_or(default_lut_bins(m.parzen.channels())));
  return m;
}

}  // namespace mrfseg
