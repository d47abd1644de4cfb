#pragma once

// Tissue-conditional intensity likelihoods.
//
// ParzenModel is the exact non-parametric density (a Gaussian kernel of
// width sigma on every training point, evaluated at the bias-corrected raw
// intensity exp(b) * z). GaussianTissueModel is the log-intensity Gaussian
// surrogate used for closed-form bias updates. DensityLut tabulates a
// ParzenModel on a regular grid.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mrfseg/lattice.hpp"
#include "mrfseg/linalg.hpp"

namespace mrfseg {

struct TrainingSet {
  int channels = 1;
  std::array<std::vector<EchoVector>, kTissueCount> points;

  std::vector<EchoVector>& of(Tissue t) { return points[tissue_slot(t)]; }
  const std::vector<EchoVector>& of(Tissue t) const { return points[tissue_slot(t)]; }
  bool has(Tissue t) const { return t != Tissue::unclassified && !of(t).empty(); }
  std::vector<Tissue> tissues() const;
  std::size_t total() const;
};

/// UTF-8 TSV, one point per line: tissue<TAB>echo1[<TAB>echo2].
TrainingSet read_training_tsv(std::istream& in);
TrainingSet load_training_tsv(const std::filesystem::path& p);
void write_training_tsv(std::ostream& out, const TrainingSet& training);

/// 0.3 x the pooled within-tissue standard deviation (pooled over tissues
/// and echoes), floored at 1e-3 x the mean absolute training intensity.
double default_parzen_width(const TrainingSet& training);

class ParzenModel {
 public:
  ParzenModel(TrainingSet training, double sigma);

  int channels() const { return training_.channels; }
  double sigma() const { return sigma_; }
  const TrainingSet& training() const { return training_; }
  bool models(Tissue t) const { return training_.has(t); }

  /// ln p at an already bias-corrected raw intensity.
  double log_density_corrected(const EchoVector& corrected, Tissue t) const;

  /// Largest log-density attained at any training point of any tissue.
  double peak_log_density() const { return peak_log_density_; }

 private:
  TrainingSet training_;
  double sigma_;
  double log_norm_;  // -(d/2) ln(2 pi sigma^2)
  double peak_log_density_ = 0.0;
};

/// exp(bias) * z, channel-wise.
EchoVector corrected_intensity(std::span<const double> z, std::span<const double> bias);

/// ln of the Parzen density at exp(bias) * z; exact kernel sum.
double parzen_log_density(std::span<const double> z, Tissue t, std::span<const double> bias,
                          const ParzenModel& model);

struct TissueGaussian {
  EchoVector mean{};   // of log-intensities
  EchoMatrix cov;
  EchoMatrix inv_cov;
  double log_norm = 0.0;  // -(d/2) ln(2 pi) - (1/2) ln |cov|
};

class GaussianTissueModel {
 public:
  GaussianTissueModel() = default;
  GaussianTissueModel(int channels, double log_clamp);

  int channels() const { return channels_; }
  double log_clamp() const { return log_clamp_; }
  bool models(Tissue t) const {
    return t != Tissue::unclassified && tissues_[tissue_slot(t)].has_value();
  }
  const TissueGaussian& tissue(Tissue t) const;

  /// Throws ModelFitError if cov is not symmetric positive definite.
  void set(Tissue t, const EchoVector& mean, const EchoMatrix& cov);

  /// ln(max(z, log_clamp)) per channel.
  EchoVector log_intensity(std::span<const double> z) const;

 private:
  int channels_ = 1;
  double log_clamp_ = 1.0;
  std::array<std::optional<TissueGaussian>, kTissueCount> tissues_;
};

inline constexpr double kCovarianceRegularization = 1e-6;
inline constexpr double kCovarianceFloor = 1e-10;

/// Sample mean/covariance of clamped log-intensities per trained tissue.
/// Covariances get lambda*I added, lambda = max(1e-6 trace/d, 1e-10).
GaussianTissueModel fit_gaussian_model(const TrainingSet& training, double log_clamp);

/// ln N(z_log + bias; mean_t, cov_t).
double gaussian_log_density(std::span<const double> z_log, Tissue t, std::span<const double> bias,
                            const GaussianTissueModel& model);

class DensityLut {
 public:
  /// Every tissue shares one grid covering [min - 3 sigma, max + 3 sigma]
  /// of all training points, per echo.
  DensityLut(const ParzenModel& model, std::size_t bins_per_echo);

  std::size_t bins_per_echo() const { return bins_; }
  int channels() const { return channels_; }
  bool models(Tissue t) const { return !grids_[tissue_slot(t)].values.empty(); }

  double lower(Tissue t, int echo) const { return grids_[tissue_slot(t)].lo[echo]; }
  double bin_width(Tissue t, int echo) const { return grids_[tissue_slot(t)].width[echo]; }
  double bin_center(Tissue t, int echo, std::size_t k) const;

  /// Nearest bin center; queries outside the grid use the edge bin.
  double log_density_corrected(const EchoVector& corrected, Tissue t) const;
  /// Nearest bin center, or nothing when the query lies outside the grid.
  std::optional<double> lookup(const EchoVector& corrected, Tissue t) const;

 private:
  struct Grid {
    EchoVector lo{};
    EchoVector width{};
    std::vector<double> values;  // echo 0 fastest
  };
  std::size_t bins_;
  int channels_;
  std::array<Grid, kTissueCount> grids_;
};

inline std::size_t default_lut_bins(int channels) { return channels == 1 ? 4096 : 256; }

DensityLut build_lut(const ParzenModel& model, std::size_t bins_per_echo);

/// Common interface the optimizers evaluate p(z_i | x_i, y_i) through.
class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual int channels() const = 0;
  virtual bool models(Tissue t) const = 0;
  virtual double log_density(std::span<const double> z, Tissue t,
                             std::span<const double> bias) const = 0;
  /// Log-likelihood assigned to unclassified voxels.
  virtual double unclassified_log_density() const = 0;

  std::vector<Tissue> modeled_tissues() const;
};

/// ln(1e-6) relative to the peak density.
inline constexpr double kUnclassifiedRelativeFloor = 1e-6;

class ParzenLikelihood final : public Likelihood {
 public:
  explicit ParzenLikelihood(const ParzenModel& model, const DensityLut* lut = nullptr)
      : model_(model), lut_(lut) {}

  int channels() const override { return model_.channels(); }
  bool models(Tissue t) const override { return model_.models(t); }
  double log_density(std::span<const double> z, Tissue t,
                     std::span<const double> bias) const override;
  /// LUT inside its grid, the exact sum elsewhere.
  double log_density_corrected(const EchoVector& corrected, Tissue t) const {
    if (lut_) {
      if (const auto v = lut_->lookup(corrected, t)) return *v;
    }
    return model_.log_density_corrected(corrected, t);
  }
  double unclassified_log_density() const override;

 private:
  const ParzenModel& model_;
  const DensityLut* lut_;
};

class GaussianLikelihood final : public Likelihood {
 public:
  explicit GaussianLikelihood(const GaussianTissueModel& model) : model_(model) {}

  int channels() const override { return model_.channels(); }
  bool models(Tissue t) const override { return model_.models(t); }
  double log_density(std::span<const double> z, Tissue t,
                     std::span<const double> bias) const override;
  double unclassified_log_density() const override;

 private:
  const GaussianTissueModel& model_;
};

}  // namespace mrfseg
