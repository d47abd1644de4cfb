#pragma once

// Run configuration JSON. Every key is optional and overrides the default:
//   algorithm, iterations, sweeps, epsilon, sb_potential, alpha, beta, sigma,
//   delta, schedule_c, threshold, filter_k, seed, parallel,
//   consistent_gaussian, freeze_bias, keep_best, use_lut, lut_bins,
//   log_clamp, training_points

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "mrfseg/model_io.hpp"
#include "mrfseg/optimizers.hpp"

namespace mrfseg {

struct RunConfig {
  Algorithm algorithm = Algorithm::icm1;
  std::size_t iterations = 6;
  std::size_t sweeps = 1000;
  double epsilon = kDefaultEpsilon;
  double sb_potential = kDefaultSbBrainPotential;
  double alpha = 100.0;
  double beta = 20.0;
  std::optional<double> sigma;  // Parzen width; derived from training when unset
  double delta = 0.02;
  double schedule_c = 1.0;
  std::optional<double> threshold;
  std::size_t filter_k = 16;
  std::uint64_t seed = 1;
  bool parallel = false;
  bool consistent_gaussian = false;
  bool freeze_bias = false;
  bool keep_best = true;
  bool use_lut = true;
  std::optional<std::size_t> lut_bins;
  double log_clamp = kDefaultLogClamp;
  std::size_t training_points = 500;

  RunParams run_params() const;
};

/// Applies the keys of j on top of base. Unknown keys and wrong types throw
/// ConfigError.
RunConfig apply_config_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& p, RunConfig base = {});
nlohmann::json config_to_json(const RunConfig& c);

}  // namespace mrfseg
