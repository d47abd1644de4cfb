#include "mrfseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mrfseg/random.hpp"

namespace mrfseg {

TissueMeans TissueMeans::double_echo() {
  TissueMeans m;
  m.channels = 2;
  m.mean[tissue_slot(Tissue::bg)] = {kBackgroundNoiseFloor, kBackgroundNoiseFloor};
  m.mean[tissue_slot(Tissue::sb)] = {456.0, 167.0};
  m.mean[tissue_slot(Tissue::wm)] = {823.0, 426.0};
  m.mean[tissue_slot(Tissue::gm)] = {1059.0, 602.0};
  m.mean[tissue_slot(Tissue::csf)] = {1363.0, 1223.0};
  return m;
}

TissueMeans TissueMeans::single_echo() const {
  TissueMeans m = *this;
  m.channels = 1;
  for (auto& v : m.mean) v[1] = 0.0;
  return m;
}

std::array<EchoVector, kTissueCount> double_echo_tissue_stds() {
  std::array<EchoVector, kTissueCount> s{};
  s[tissue_slot(Tissue::sb)] = {120.0, 69.0};
  s[tissue_slot(Tissue::wm)] = {70.0, 59.0};
  s[tissue_slot(Tissue::gm)] = {95.0, 102.0};
  s[tissue_slot(Tissue::csf)] = {177.0, 307.0};
  return s;
}

void PhantomSpec::validate() const {
  labels.dims.validate();
  if (means.channels != 1 && means.channels != 2) throw ConfigError("phantom needs 1 or 2 echoes");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw ConfigError("S must be >= 0");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("N must be >= 0");
  if (!(inhomogeneity >= 0.0) || !(inhomogeneity < 1.0)) throw ConfigError("I must be in [0, 1)");
  for (Tissue t : labels.labels) {
    if (t == Tissue::unclassified) throw ConfigError("phantom template contains unclassified voxels");
  }
}

std::array<double, 3> default_inhomogeneity_center(const Dims& dims) {
  return {0.0, 0.0, 0.5 * static_cast<double>(dims.nz - 1)};
}

std::vector<double> radial_inhomogeneity(const LabelMap& labels, double inhomogeneity,
                                         const std::array<double, 3>& center,
                                         bool high_near_center) {
  if (!(inhomogeneity >= 0.0) || !(inhomogeneity < 1.0)) {
    throw ConfigError("inhomogeneity must be in [0, 1)");
  }
  const Dims& d = labels.dims;
  std::vector<double> dist(d.voxel_count());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const Index3 c = coords_of(i, d);
    const double dx = static_cast<double>(c.x) - center[0];
    const double dy = static_cast<double>(c.y) - center[1];
    const double dz = static_cast<double>(c.z) - center[2];
    dist[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (labels[i] != Tissue::bg) {
      lo = std::min(lo, dist[i]);
      hi = std::max(hi, dist[i]);
    }
  }
  if (!(lo <= hi)) throw ConfigError("inhomogeneity range undefined: template is all background");
  std::vector<double> factor(dist.size(), 1.0);
  if (hi == lo || inhomogeneity == 0.0) return factor;
  const double sign = high_near_center ? 1.0 : -1.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double u = (dist[i] - lo) / (hi - lo);  // 0 nearest, 1 farthest non-BG voxel
    factor[i] = 1.0 + sign * inhomogeneity * (1.0 - 2.0 * u);
  }
  return factor;
}

Volume synthesize(const PhantomSpec& spec) {
  spec.validate();
  Dims dims = spec.labels.dims;
  dims.channels = spec.means.channels;
  const int nc = dims.channels;
  const std::size_t n = dims.voxel_count();

  // 1. tissue means
  Volume v(dims);
  for (std::size_t i = 0; i < n; ++i) {
    const EchoVector& m = spec.means.of(spec.labels[i]);
    for (int c = 0; c < nc; ++c) v.at(i, c) = m[c];
  }

  // 2. one pass of the 7-point kernel {1 center, S per neighbor}, renormalized
  if (spec.smoothing > 0.0) {
    std::vector<double> out(v.data.size());
    for (std::size_t i = 0; i < n; ++i) {
      const NeighborList nb = first_order_neighbors(i, dims);
      const double norm = 1.0 + spec.smoothing * static_cast<double>(nb.size());
      for (int c = 0; c < nc; ++c) {
        double s = 0.0;
        for (std::size_t j : nb) s += v.at(j, c);
        out[i * nc + c] = (v.at(i, c) + spec.smoothing * s) / norm;
      }
    }
    v.data = std::move(out);
  }

  // 3. independent Gaussian noise per echo
  if (spec.noise > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      CounterRng rng(spec.seed, 0x6e6f697365ULL, i);
      for (int c = 0; c < nc; ++c) v.at(i, c) += spec.noise * rng.normal();
    }
  }

  // 4. radial inhomogeneity
  if (spec.inhomogeneity > 0.0) {
    const auto center = spec.center.value_or(default_inhomogeneity_center(dims));
    const auto factor =
        radial_inhomogeneity(spec.labels, spec.inhomogeneity, center, spec.high_near_center);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < nc; ++c) v.at(i, c) *= factor[i];
    }
  }
  return v;
}

LabelMap sinusoidal_gyrus(const Dims& dims, std::size_t thickness, std::optional<double> period,
                          std::optional<double> amplitude) {
  if (thickness < 1) throw ConfigError("gyrus thickness must be at least 1 voxel");
  LabelMap out(dims, Tissue::bg);
  const double p = period.value_or(static_cast<double>(dims.nx));
  const double a = amplitude.value_or(static_cast<double>(dims.ny) / 8.0);
  if (!(p > 0.0) || !(a >= 0.0)) throw ConfigError("gyrus period/amplitude must be positive");
  const double base = 0.5 * (static_cast<double>(dims.ny) - static_cast<double>(thickness));
  std::vector<long long> lower(dims.nx);
  for (std::size_t x = 0; x < dims.nx; ++x) {
    const double s = base + a * std::sin(2.0 * std::numbers::pi * static_cast<double>(x) / p);
    lower[x] = std::llround(s);
    // at least one WM row below and one BG row above the sheet
    if (lower[x] < 1 ||
        lower[x] + static_cast<long long>(thickness) > static_cast<long long>(dims.ny) - 1) {
      throw ConfigError("gyrus thickness " + std::to_string(thickness) +
                        " exceeds the band height of a " + std::to_string(dims.ny) +
                        "-voxel volume");
    }
  }
  for (std::size_t z = 0; z < dims.nz; ++z) {
    for (std::size_t y = 0; y < dims.ny; ++y) {
      for (std::size_t x = 0; x < dims.nx; ++x) {
        const auto yy = static_cast<long long>(y);
        Tissue t = Tissue::bg;
        if (yy < lower[x]) {
          t = Tissue::wm;
        } else if (yy < lower[x] + static_cast<long long>(thickness)) {
          t = Tissue::gm;
        }
        out[linear_index({x, y, z}, dims)] = t;
      }
    }
  }
  return out;
}

LabelMap shell_template(const Dims& dims, bool include_sb) {
  LabelMap out(dims, Tissue::bg);
  const double s = static_cast<double>(std::min(dims.nx, dims.ny)) / 128.0;
  const double cx = 0.5 * static_cast<double>(dims.nx - 1);
  const double cy = 0.5 * static_cast<double>(dims.ny - 1);
  const double cz = 0.5 * static_cast<double>(dims.nz - 1);
  const double half_z = std::max(0.5 * static_cast<double>(dims.nz), 1.0);
  for (std::size_t z = 0; z < dims.nz; ++z) {
    const double zf = std::abs(static_cast<double>(z) - cz) / half_z;
    const double zscale = 1.0 - 0.12 * zf * zf;
    // slow twist of the folding pattern along z
    const double phase = 0.15 * static_cast<double>(z);
    for (std::size_t y = 0; y < dims.ny; ++y) {
      for (std::size_t x = 0; x < dims.nx; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double r = std::sqrt(dx * dx + dy * dy);
        const double th = std::atan2(dy, dx);
        const double head = 0.47 * static_cast<double>(std::min(dims.nx, dims.ny)) * zscale;
        const double skull_in = head - 7.0 * s;
        const double csf_in = skull_in - 3.0 * s;
        // sulci: the cortical surface dips inward, CSF fills the gap
        const double fold = 0.5 * (1.0 - std::cos(9.0 * th + phase));
        const double gm_out = csf_in - 3.0 * s * fold;
        const double wm_out =
            gm_out - 3.5 * s - 3.0 * s * (0.5 + 0.5 * std::sin(18.0 * th - 2.0 * phase));
        Tissue t = Tissue::bg;
        if (r >= head) {
          t = Tissue::bg;
        } else if (r >= skull_in) {
          t = include_sb ? Tissue::sb : Tissue::bg;
        } else if (r >= gm_out) {
          t = Tissue::csf;
        } else if (r >= wm_out) {
          t = Tissue::gm;
        } else {
          t = Tissue::wm;
          // ventricles
          const double vx = dx / (11.0 * s * zscale);
          const double vy = dy / (5.0 * s * zscale);
          if (vx * vx + vy * vy < 1.0) t = Tissue::csf;
          // deep gray nuclei
          for (double side : {-1.0, 1.0}) {
            const double gx = (dx - side * 16.0 * s) / (5.0 * s);
            const double gy = (dy - 8.0 * s) / (6.0 * s);
            if (gx * gx + gy * gy < 1.0) t = Tissue::gm;
          }
        }
        out[linear_index({x, y, z}, dims)] = t;
      }
    }
  }
  return out;
}

TrainingSet sample_training(const Volume& volume, const LabelMap& truth, std::size_t per_tissue,
                            std::uint64_t seed) {
  if (!volume.dims.same_grid(truth.dims)) throw FormatError("training volume/label dims differ");
  TrainingSet out;
  out.channels = volume.dims.channels;
  std::array<std::vector<std::size_t>, kTissueCount> members;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != Tissue::unclassified) members[tissue_slot(truth[i])].push_back(i);
  }
  for (Tissue t : kTissues) {
    auto& idx = members[tissue_slot(t)];
    CounterRng rng(seed, 0x747261696eULL, tissue_slot(t));
    const std::size_t take = std::min(per_tissue, idx.size());
    for (std::size_t k = 0; k < take; ++k) {
      std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
      out.of(t).push_back(to_echo(volume.voxel(idx[k])));
    }
  }
  return out;
}

}  // namespace mrfseg
