#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mrfseg/intensity_model.hpp"
#include "mrfseg/lattice.hpp"
#include "mrfseg/linalg.hpp"

namespace mrfseg {

struct ErrorReport {
  double error = 0.0;  // misclassified / non-BG truth; may exceed 1
  std::size_t misclassified = 0;
  std::size_t non_background = 0;
  /// confusion[truth slot][predicted slot]; slot 5 is unclassified.
  std::array<std::array<std::size_t, kTissueCount + 1>, kTissueCount + 1> confusion{};
};

/// Every voxel with pred != truth counts, including BG truth voxels;
/// unclassified predictions count as errors. Throws if truth has no non-BG.
ErrorReport error_rate(const LabelMap& pred, const LabelMap& truth);

inline constexpr std::size_t kThicknessWindowRadius = 5;  // 11-voxel Chebyshev window

/// Mismatches within Chebyshev distance 5 of any truth-GM voxel, divided by
/// the truth-GM count.
double thickness_error(const LabelMap& pred, const LabelMap& truth);

/// Voxels within Chebyshev distance `radius` of a truth-GM voxel.
std::vector<bool> gm_window(const LabelMap& truth, std::size_t radius = kThicknessWindowRadius);

struct ContrastStats {
  double cnr = 0.0;
  double snr_a = 0.0;
  double snr_b = 0.0;
};

/// CNR = (mean_b - mean_a) / N, SNR_t = mean_t / N.
ContrastStats contrast_stats(double mean_a, double mean_b, double noise_std);

double mahalanobis(const EchoVector& mean_a, const EchoMatrix& cov_a, const EchoVector& mean_b,
                   const EchoMatrix& cov_b, int channels);
double mahalanobis(const GaussianTissueModel& model, Tissue a, Tissue b);

}  // namespace mrfseg
