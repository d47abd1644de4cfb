#pragma once

// Fitted model file: JSON with per-tissue training points, the Parzen
// width, the log clamp, and log-domain means/covariances.

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "mrfseg/intensity_model.hpp"
#include "mrfseg/optimizers.hpp"

namespace mrfseg {

struct FittedModel {
  ParzenModel parzen;
  GaussianTissueModel gaussian;
};

inline constexpr double kDefaultLogClamp = 1.0;

/// sigma defaults to default_parzen_width(training).
FittedModel fit_model(const TrainingSet& training, std::optional<double> sigma = std::nullopt,
                      double log_clamp = kDefaultLogClamp);

nlohmann::json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& p, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& p);

/// Copies the fitted model into the optimizer bundle, optionally with a LUT
/// (bins default to default_lut_bins(channels)).
TissueModels make_tissue_models(const FittedModel& model, bool use_lut,
                                std::optional<std::size_t> lut_bins = std::nullopt);

}  // namespace mrfseg
