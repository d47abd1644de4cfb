#include "mrfseg/config.hpp"

#include <fstream>

namespace mrfseg {

RunParams RunConfig::run_params() const {
  RunParams p;
  p.algorithm = algorithm;
  p.iterations = iterations;
  p.schedule.sweeps = sweeps;
  p.schedule.constant = schedule_c;
  p.potentials = PotentialTable::potts(epsilon, sb_potential);
  p.prior = BiasPrior{alpha, beta};
  p.unclassified_threshold = threshold;
  p.bias_step = delta;
  p.filter_passes = filter_k;
  p.consistent_gaussian = consistent_gaussian;
  p.freeze_bias = freeze_bias;
  p.keep_best = keep_best;
  p.parallel = parallel;
  p.seed = seed;
  p.validate();
  return p;
}

RunConfig apply_config_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "algorithm") {
        const auto a = parse_algorithm(v.get<std::string>());
        if (!a) throw ConfigError("unknown algorithm '" + v.get<std::string>() + "'");
        c.algorithm = *a;
      } else if (key == "iterations") {
        c.iterations = v.get<std::size_t>();
      } else if (key == "sweeps") {
        c.sweeps = v.get<std::size_t>();
      } else if (key == "epsilon") {
        c.epsilon = v.get<double>();
      } else if (key == "sb_potential") {
        c.sb_potential = v.get<double>();
      } else if (key == "alpha") {
        c.alpha = v.get<double>();
      } else if (key == "beta") {
        c.beta = v.get<double>();
      } else if (key == "sigma") {
        c.sigma = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "delta") {
        c.delta = v.get<double>();
      } else if (key == "schedule_c") {
        c.schedule_c = v.get<double>();
      } else if (key == "threshold") {
        c.threshold = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "filter_k") {
        c.filter_k = v.get<std::size_t>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "parallel") {
        c.parallel = v.get<bool>();
      } else if (key == "consistent_gaussian") {
        c.consistent_gaussian = v.get<bool>();
      } else if (key == "freeze_bias") {
        c.freeze_bias = v.get<bool>();
      } else if (key == "keep_best") {
        c.keep_best = v.get<bool>();
      } else if (key == "use_lut") {
        c.use_lut = v.get<bool>();
      } else if (key == "lut_bins") {
        c.lut_bins = v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
      } else if (key == "log_clamp") {
        c.log_clamp = v.get<double>();
      } else if (key == "training_points") {
        c.training_points = v.get<std::size_t>();
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "' has the wrong type: " + e.what());
    }
  }
  if (c.sigma && !(*c.sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(c.log_clamp > 0.0)) throw ConfigError("log_clamp must be positive");
  if (c.lut_bins && *c.lut_bins < 2) throw ConfigError("lut_bins must be at least 2");
  return c;
}

RunConfig load_config(const std::filesystem::path& p, RunConfig base) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config " + p.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + " is not valid JSON: " + e.what());
  }
  return apply_config_json(j, std::move(base));
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["algorithm"] = std::string(algorithm_name(c.algorithm));
  j["iterations"] = c.iterations;
  j["sweeps"] = c.sweeps;
  j["epsilon"] = c.epsilon;
  j["sb_potential"] = c.sb_potential;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["sigma"] = c.sigma ? nlohmann::json(*c.sigma) : nlohmann::json(nullptr);
  j["delta"] = c.delta;
  j["schedule_c"] = c.schedule_c;
  j["threshold"] = c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr);
  j["filter_k"] = c.filter_k;
  j["seed"] = c.seed;
  j["parallel"] = c.parallel;
  j["consistent_gaussian"] = c.consistent_gaussian;
  j["freeze_bias"] = c.freeze_bias;
  j["keep_best"] = c.keep_best;
  j["use_lut"] = c.use_lut;
  j["lut_bins"] = c.lut_bins ? nlohmann::json(*c.lut_bins) : nlohmann::json(nullptr);
  j["log_clamp"] = c.log_clamp;
  j["training_points"] = c.training_points;
  return j;
}

}  // namespace mrfseg
