#pragma once

// MAP search over labels and bias field: simulated annealing (SA), the
// closed-form-bias ICM (ICM1), the filtered-residual ICM (ICM2), and the
// AS baseline, which is ICM2 with every label potential set to zero.

#include <cstdint>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "mrfseg/energy.hpp"
#include "mrfseg/intensity_model.hpp"
#include "mrfseg/lattice.hpp"
#include "mrfseg/random.hpp"

namespace mrfseg {

enum class Algorithm { sa, icm1, icm2, as };

std::string_view algorithm_name(Algorithm a);
std::optional<Algorithm> parse_algorithm(std::string_view name);

/// T(l) = constant / ln(1 + l) for sweeps l = 1..sweeps.
struct AnnealSchedule {
  double constant = 1.0;
  std::size_t sweeps = 1000;

  double temperature(std::size_t sweep) const;
  void validate() const;
};

struct RunParams {
  Algorithm algorithm = Algorithm::icm1;
  std::size_t iterations = 6;  // ICM variants
  AnnealSchedule schedule;     // SA
  PotentialTable potentials = PotentialTable::potts(kDefaultEpsilon, kDefaultSbBrainPotential);
  BiasPrior prior;
  /// Voxels whose best log-probability falls below this are unclassified.
  std::optional<double> unclassified_threshold;
  double bias_step = 0.02;          // SA bias proposal half-width (log units)
  std::size_t filter_passes = 16;   // ICM2 [1,2,1]/4 passes per axis
  bool consistent_gaussian = false; // ICM1 label pass uses the Gaussian model
  bool freeze_bias = false;         // hold the bias field at its initial value
  bool keep_best = true;            // SA returns the best sweep, not the last
  bool parallel = false;            // checkerboard update order
  std::uint64_t seed = 1;

  void validate() const;
};

struct OptState {
  LabelMap labels;
  BiasField bias;
  std::size_t counter = 0;
  std::uint64_t seed = 0;
};

/// Everything the optimizers may evaluate. The LUT, when present, replaces
/// exact Parzen sums.
struct TissueModels {
  ParzenModel parzen;
  std::optional<GaussianTissueModel> gaussian;
  std::optional<DensityLut> lut;

  ParzenLikelihood parzen_likelihood() const {
    return ParzenLikelihood(parzen, lut ? &*lut : nullptr);
  }
  int channels() const { return parzen.channels(); }
};

/// Zero bias and per-voxel argmax of the likelihood. Ties go to the lowest
/// tissue code.
OptState initialize(const Volume& volume, const Likelihood& likelihood,
                    std::optional<double> unclassified_threshold = std::nullopt,
                    std::uint64_t seed = 0);

/// Accept with probability min(1, exp(delta)) given u uniform on [0, 1).
inline bool metropolis_accept(double delta, double u) {
  if (delta >= 0.0) return true;
  return u < std::exp(delta);
}

template <class Rng>
bool metropolis_accept(double delta, Rng& rng) {
  if (delta >= 0.0) return true;
  double u = 0.0;
  if constexpr (requires { rng.uniform(); }) {
    u = rng.uniform();
  } else {
    u = std::generate_canonical<double, 53>(rng);
  }
  return metropolis_accept(delta, u);
}

struct SweepStats {
  std::size_t label_accepts = 0;
  std::size_t bias_accepts = 0;
};

/// One Monte-Carlo sweep: every voxel gets one label proposal and one bias
/// proposal, each accepted by the Metropolis rule at temperature t. Random
/// draws come from per-voxel streams keyed by (seed, sweep counter, voxel).
SweepStats sa_sweep(OptState& state, Temperature t, const Volume& volume,
                    const TissueModels& models, const RunParams& params);

struct SaResult {
  LabelMap labels;
  BiasField bias;
  std::vector<double> trace;  // untempered log posterior after each sweep
  std::size_t best_sweep = 0;
  double label_accept_rate = 0.0;
  double bias_accept_rate = 0.0;
};

SaResult sa_run(const Volume& volume, const TissueModels& models, const RunParams& params);

/// Closed-form maximizer of the Gaussian-surrogate posterior in y_i with
/// the label and neighbor biases fixed.
EchoVector solve_bias_at(const BiasField& bias, std::size_t i, Tissue t,
                         std::span<const double> z, const GaussianTissueModel& model,
                         const BiasPrior& prior);

/// Per-voxel label update maximizing log p(z_i|x,y_i) - sum_j e[x][x_j].
/// Returns the number of voxels whose label changed.
std::size_t label_pass(OptState& state, const Volume& volume, const Likelihood& likelihood,
                       const RunParams& params);

struct IterationStats {
  std::size_t labels_changed = 0;
  std::size_t singular_voxels = 0;  // ICM2: filtered normalizer not invertible
};

/// Bias pass (closed form, Gauss-Seidel) followed by a label pass.
IterationStats icm1_iteration(OptState& state, const Volume& volume, const TissueModels& models,
                              const RunParams& params);

/// In-place separable [1,2,1]/4 smoothing applied `passes` times per axis;
/// boundary taps are renormalized so constants are preserved. `components`
/// interleaved values per voxel.
void smooth_binomial(std::span<double> field, const Dims& dims, int components,
                     std::size_t passes);

/// Filtered-residual bias estimate followed by a label pass.
IterationStats icm2_iteration(OptState& state, const Volume& volume, const TissueModels& models,
                              const RunParams& params);

struct Diagnostics {
  std::vector<double> energy_trace;           // log posterior after init and each step
  std::vector<double> label_change_fraction;  // per ICM iteration
  std::size_t singular_voxels = 0;
  std::size_t steps = 0;
  double label_accept_rate = 0.0;
  double bias_accept_rate = 0.0;
};

struct SegmentResult {
  LabelMap labels;
  BiasField bias;
  Diagnostics diagnostics;
};

/// Called with the step number (0 = after initialization) and current state.
using StepObserver = std::function<void(std::size_t, const OptState&)>;

SegmentResult segment(const Volume& volume, const TissueModels& models, const RunParams& params,
                      const StepObserver& observer = {});

}  // namespace mrfseg
