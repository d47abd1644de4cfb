#pragma once

// Synthetic multi-echo phantoms: mean fill, 7-point smoothing, Gaussian
// noise, then a radial multiplicative inhomogeneity. Also the label
// templates used by the benchmarks.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mrfseg/intensity_model.hpp"
#include "mrfseg/lattice.hpp"
#include "mrfseg/linalg.hpp"

namespace mrfseg {

struct TissueMeans {
  int channels = 2;
  std::array<EchoVector, kTissueCount> mean{};

  const EchoVector& of(Tissue t) const { return mean[tissue_slot(t)]; }

  /// pd/T2 double-echo signals (BG at the equipment noise floor of 30).
  static TissueMeans double_echo();
  /// First (pd) echo only.
  TissueMeans single_echo() const;
};

/// Per-echo standard deviations measured alongside TissueMeans::double_echo
/// (no BG entry; BG is reported as 0).
std::array<EchoVector, kTissueCount> double_echo_tissue_stds();

inline constexpr double kBackgroundNoiseFloor = 30.0;

struct PhantomSpec {
  LabelMap labels;  // template; becomes the ground truth
  TissueMeans means = TissueMeans::double_echo();
  double smoothing = 0.0;      // S: neighbor weight relative to the center
  double noise = 0.0;          // N: Gaussian noise std per echo (raw units)
  double inhomogeneity = 0.0;  // I in [0, 1)
  std::optional<std::array<double, 3>> center;  // default (0, 0, (nz-1)/2)
  bool high_near_center = true;
  std::uint64_t seed = 1;

  void validate() const;
};

Volume synthesize(const PhantomSpec& spec);

/// Multiplicative factor per voxel, linear in Euclidean distance from
/// center; over non-BG voxels it spans exactly [1-I, 1+I].
std::vector<double> radial_inhomogeneity(const LabelMap& labels, double inhomogeneity,
                                         const std::array<double, 3>& center,
                                         bool high_near_center = true);

std::array<double, 3> default_inhomogeneity_center(const Dims& dims);

/// WM below a sinusoidal GM sheet of vertical thickness `thickness`, BG
/// above; uniform along z. Defaults: period nx, amplitude ny/8.
LabelMap sinusoidal_gyrus(const Dims& dims, std::size_t thickness,
                          std::optional<double> period = std::nullopt,
                          std::optional<double> amplitude = std::nullopt);

/// Nested-shell head: BG outside, then SB, CSF, a folded GM ribbon, WM core
/// with CSF ventricles and deep GM. With include_sb false the SB shell is BG.
LabelMap shell_template(const Dims& dims, bool include_sb);

/// Up to per_tissue voxels of every tissue present in truth, drawn without
/// replacement.
TrainingSet sample_training(const Volume& volume, const LabelMap& truth, std::size_t per_tissue,
                            std::uint64_t seed);

}  // namespace mrfseg
