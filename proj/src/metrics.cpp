#include "mrfseg/metrics.hpp"

#include <cmath>

namespace mrfseg {
namespace {

void require_same_grid(const LabelMap& a, const LabelMap& b) {
  if (!a.dims.same_grid(b.dims)) throw FormatError("label maps have different dims");
}

// One-dimensional running max (dilation) along an axis.
void dilate_axis(std::vector<bool>& mask, const Dims& d, int axis, std::size_t radius) {
  const std::array<std::size_t, 3> extent{d.nx, d.ny, d.nz};
  const std::array<std::size_t, 3> stride{1, d.nx, d.nx * d.ny};
  const std::size_t n = extent[axis];
  const std::size_t s = stride[axis];
  std::vector<bool> line(n);
  for (std::size_t base = 0; base < d.voxel_count(); ++base) {
    // visit each line once, from its first voxel
    if ((base / s) % n != 0) continue;
    for (std::size_t k = 0; k < n; ++k) line[k] = mask[base + k * s];
    long long last = -1'000'000;
    std::vector<bool> out(n, false);
    for (std::size_t k = 0; k < n; ++k) {
      if (line[k]) last = static_cast<long long>(k);
      if (static_cast<long long>(k) - last <= static_cast<long long>(radius)) out[k] = true;
    }
    last = 1'000'000'000;
    for (std::size_t k = n; k-- > 0;) {
      if (line[k]) last = static_cast<long long>(k);
      if (last - static_cast<long long>(k) <= static_cast<long long>(radius)) out[k] = true;
    }
    for (std::size_t k = 0; k < n; ++k) mask[base + k * s] = out[k];
  }
}

}  // namespace

ErrorReport error_rate(const LabelMap& pred, const LabelMap& truth) {
  require_same_grid(pred, truth);
  ErrorReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Tissue t = truth[i];
    const Tissue p = pred[i];
    ++r.confusion[tissue_slot(t)][tissue_slot(p)];
    if (t != Tissue::bg) ++r.non_background;
    if (p != t) ++r.misclassified;
  }
  if (r.non_background == 0) throw ConfigError("truth has no non-background voxels");
  r.error = static_cast<double>(r.misclassified) / static_cast<double>(r.non_background);
  return r;
}

std::vector<bool> gm_window(const LabelMap& truth, std::size_t radius) {
  std::vector<bool> mask(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) mask[i] = truth[i] == Tissue::gm;
  for (int axis = 0; axis < 3; ++axis) dilate_axis(mask, truth.dims, axis, radius);
  return mask;
}

double thickness_error(const LabelMap& pred, const LabelMap& truth) {
  require_same_grid(pred, truth);
  std::size_t gm = 0;
  for (Tissue t : truth.labels) gm += t == Tissue::gm ? 1 : 0;
  if (gm == 0) throw ConfigError("truth contains no GM voxels");
  const auto window = gm_window(truth);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (window[i] && pred[i] != truth[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(gm);
}

ContrastStats contrast_stats(double mean_a, double mean_b, double noise_std) {
  if (!(noise_std > 0.0)) throw ConfigError("noise std must be positive");
  return {(mean_b - mean_a) / noise_std, mean_a / noise_std, mean_b / noise_std};
}

double mahalanobis(const EchoVector& mean_a, const EchoMatrix& cov_a, const EchoVector& mean_b,
                   const EchoMatrix& cov_b, int channels) {
  EchoMatrix pooled;
  for (std::size_t k = 0; k < pooled.m.size(); ++k) pooled.m[k] = 0.5 * (cov_a.m[k] + cov_b.m[k]);
  const double det = determinant(pooled, channels);
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
    throw ConfigError("pooled covariance is singular");
  }
  EchoVector diff{};
  for (int c = 0; c < channels; ++c) diff[c] = mean_a[c] - mean_b[c];
  return std::sqrt(quadratic_form(inverse(pooled, channels), diff, channels));
}

double mahalanobis(const GaussianTissueModel& model, Tissue a, Tissue b) {
  const auto& ga = model.tissue(a);
  const auto& gb = model.tissue(b);
  return mahalanobis(ga.mean, ga.cov, gb.mean, gb.cov, model.channels());
}

}  // namespace mrfseg
