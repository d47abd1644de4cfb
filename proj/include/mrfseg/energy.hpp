#pragma once

// Gibbs energies of the label and bias-field priors and the tempered log
// posterior that both optimizers climb. Lattice edges are unordered pairs
// and counted once.

#include <array>
#include <span>

#include "mrfseg/intensity_model.hpp"
#include "mrfseg/lattice.hpp"

namespace mrfseg {

/// Symmetric pairwise label potential. Equal real tissues cost 0 and the
/// unclassified label is indifferent (0 against everything).
class PotentialTable {
 public:
  PotentialTable() = default;

  /// epsilon between different tissues, sb_brain between SB and WM/GM/CSF.
  static PotentialTable potts(double epsilon, double sb_brain);
  static PotentialTable none() { return PotentialTable{}; }

  double operator()(Tissue a, Tissue b) const {
    return table_[tissue_slot(a) * kSlots + tissue_slot(b)];
  }

  /// Sets both (a,b) and (b,a). Rejects non-zero diagonals and entries
  /// involving the unclassified label.
  void set(Tissue a, Tissue b, double value);

 private:
  static constexpr std::size_t kSlots = kTissueCount + 1;
  std::array<double, kSlots * kSlots> table_{};
};

inline constexpr double kDefaultEpsilon = 0.05;
inline constexpr double kDefaultSbBrainPotential = 0.5;

struct BiasPrior {
  double alpha = 100.0;  // gradient stiffness
  double beta = 20.0;    // magnitude penalty

  void validate() const;
};

/// beta matching an expected inhomogeneity standard deviation: 1 / (2 dI^2).
double beta_for_inhomogeneity_std(double delta_i);

class Temperature {
 public:
  explicit Temperature(double t);
  double value() const { return t_; }

 private:
  double t_;
};

double label_energy(const LabelMap& labels, const PotentialTable& pot);

/// Sum of e[candidate][x_j] over the current neighbors j of voxel i.
double local_label_energy(const LabelMap& labels, std::size_t i, Tissue candidate,
                          const PotentialTable& pot);

double bias_energy(const BiasField& bias, const BiasPrior& prior);

/// Terms of bias_energy that involve voxel i, with y_i replaced by candidate.
double local_bias_energy(const BiasField& bias, std::size_t i, std::span<const double> candidate,
                         const BiasPrior& prior);

/// Sum over voxels of log p(z_i | x_i, y_i); unclassified voxels contribute
/// likelihood.unclassified_log_density().
double log_likelihood_sum(const LabelMap& labels, const BiasField& bias, const Volume& volume,
                          const Likelihood& likelihood);

/// (1/T) [ sum_i log p(z_i|x_i,y_i) - E(x) - U(y) ], up to the normalizer.
double log_posterior(const LabelMap& labels, const BiasField& bias, const Volume& volume,
                     const Likelihood& likelihood, const PotentialTable& pot,
                     const BiasPrior& prior, Temperature t);

}  // namespace mrfseg
