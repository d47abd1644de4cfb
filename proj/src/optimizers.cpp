#include "mrfseg/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrfseg {
namespace {

// Visits every voxel once. Raster order is sequential; checkerboard order
// updates the two color classes in turn and parallelizes within a class,
// which is safe because f only writes voxel i and reads its neighbors.
// f returns a two-bit flag set; the per-bit totals are returned.
template <class F>
std::pair<std::size_t, std::size_t> visit_voxels(const Dims& d, bool checkerboard, F&& f) {
  std::size_t bit0 = 0;
  std::size_t bit1 = 0;
  const std::size_t sz = d.nx * d.ny;
  if (!checkerboard) {
    for (std::size_t z = 0; z < d.nz; ++z) {
      for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
          const std::size_t i = x + y * d.nx + z * sz;
          const unsigned r = f(i, Index3{x, y, z});
          bit0 += r & 1u;
          bit1 += (r >> 1) & 1u;
        }
      }
    }
    return {bit0, bit1};
  }
  const auto rows = static_cast<long long>(d.ny * d.nz);
  for (std::size_t color = 0; color < 2; ++color) {
#pragma omp parallel for schedule(static) reduction(+ : bit0, bit1)
    for (long long row = 0; row < rows; ++row) {
      const std::size_t y = static_cast<std::size_t>(row) % d.ny;
      const std::size_t z = static_cast<std::size_t>(row) / d.ny;
      for (std::size_t x = (y + z + color) & 1u; x < d.nx; x += 2) {
        const std::size_t i = x + y * d.nx + z * sz;
        const unsigned r = f(i, Index3{x, y, z});
        bit0 += r & 1u;
        bit1 += (r >> 1) & 1u;
      }
    }
  }
  return {bit0, bit1};
}

void check_inputs(const Volume& volume, const TissueModels& models) {
  if (volume.dims.channels != models.channels()) {
    throw ConfigError("volume has " + std::to_string(volume.dims.channels) +
                      " channels but the model was trained on " +
                      std::to_string(models.channels()));
  }
}

const GaussianTissueModel& require_gaussian(const TissueModels& models, Algorithm a) {
  if (!models.gaussian) {
    throw ConfigError(std::string(algorithm_name(a)) + " needs a fitted Gaussian model");
  }
  return *models.gaussian;
}

double local_label_energy_at(const LabelMap& labels, const NeighborList& nb, Tissue candidate,
                             const PotentialTable& pot) {
  double e = 0.0;
  for (std::size_t j : nb) e += pot(candidate, labels[j]);
  return e;
}

double local_bias_energy_at(const BiasField& bias, const NeighborList& nb,
                            const EchoVector& candidate, const BiasPrior& prior) {
  const int d = bias.dims.channels;
  double grad = 0.0;
  for (std::size_t j : nb) {
    for (int c = 0; c < d; ++c) {
      const double diff = candidate[c] - bias.values[j * d + c];
      grad += diff * diff;
    }
  }
  double mag = 0.0;
  for (int c = 0; c < d; ++c) mag += candidate[c] * candidate[c];
  return prior.alpha * grad + prior.beta * mag;
}

// Bias pass shared by ICM1: closed-form update per voxel, in place.
void icm1_bias_pass(OptState& state, const Volume& volume, const GaussianTissueModel& g,
                    const RunParams& params) {
  const int d = volume.dims.channels;
  visit_voxels(volume.dims, params.parallel, [&](std::size_t i, Index3) -> unsigned {
    const Tissue t = state.labels[i];
    if (t == Tissue::unclassified || !g.models(t)) return 0;
    const EchoVector y = solve_bias_at(state.bias, i, t, volume.voxel(i), g, params.prior);
    for (int c = 0; c < d; ++c) state.bias.values[i * d + c] = y[c];
    return 0;
  });
}

const Likelihood& label_likelihood(const RunParams& params, const ParzenLikelihood& parzen,
                                   const std::optional<GaussianLikelihood>& gauss) {
  if (params.consistent_gaussian && gauss) return *gauss;
  return parzen;
}

double report_energy(const OptState& s, const Volume& volume, const Likelihood& like,
                     const PotentialTable& pot, const BiasPrior& prior) {
  return log_posterior(s.labels, s.bias, volume, like, pot, prior, Temperature(1.0));
}

}  // namespace

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::sa: return "sa";
    case Algorithm::icm1: return "icm1";
    case Algorithm::icm2: return "icm2";
    case Algorithm::as: return "as";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::sa, Algorithm::icm1, Algorithm::icm2, Algorithm::as}) {
    if (algorithm_name(a) == name) return a;
  }
  return std::nullopt;
}

double AnnealSchedule::temperature(std::size_t sweep) const {
  return constant / std::log1p(static_cast<double>(std::max<std::size_t>(sweep, 1)));
}

void AnnealSchedule::validate() const {
  if (!(constant > 0.0) || !std::isfinite(constant)) {
    throw ConfigError("schedule constant must be positive");
  }
}

void RunParams::validate() const {
  schedule.validate();
  prior.validate();
  if (algorithm == Algorithm::sa && !(bias_step > 0.0)) {
    throw ConfigError("SA bias proposal half-width must be positive");
  }
}

OptState initialize(const Volume& volume, const Likelihood& likelihood,
                    std::optional<double> unclassified_threshold, std::uint64_t seed) {
  if (volume.dims.channels != likelihood.channels()) {
    throw ConfigError("volume and likelihood disagree on channel count");
  }
  const auto tissues = likelihood.modeled_tissues();
  if (tissues.empty()) throw ConfigError("likelihood models no tissue");
  OptState s;
  s.labels = LabelMap(volume.dims);
  s.bias = BiasField(volume.dims);
  s.seed = seed;
  for (std::size_t i = 0; i < volume.dims.voxel_count(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    Tissue best_t = tissues.front();
    for (Tissue t : tissues) {
      const double v = likelihood.log_density(volume.voxel(i), t, s.bias.voxel(i));
      if (v > best) {
        best = v;
        best_t = t;
      }
    }
    if (unclassified_threshold && best < *unclassified_threshold) best_t = Tissue::unclassified;
    s.labels[i] = best_t;
  }
  return s;
}

SweepStats sa_sweep(OptState& state, Temperature temp, const Volume& volume,
                    const TissueModels& models, const RunParams& params) {
  check_inputs(volume, models);
  const ParzenLikelihood like = models.parzen_likelihood();
  const auto tissues = like.modeled_tissues();
  const double floor = like.unclassified_log_density();
  const double inv_t = 1.0 / temp.value();
  const int d = volume.dims.channels;
  const std::size_t sweep = ++state.counter;
  const auto& pot = params.potentials;

  auto log_lik = [&](std::size_t i, Tissue t, const EchoVector& b) {
    if (t == Tissue::unclassified) return floor;
    return like.log_density(volume.voxel(i), t, std::span<const double>(b.data(), d));
  };

  const auto [label_acc, bias_acc] =
      visit_voxels(volume.dims, params.parallel, [&](std::size_t i, Index3 c) -> unsigned {
        CounterRng rng(state.seed, sweep, i);
        const NeighborList nb = neighbors_at(c, i, volume.dims);
        const Tissue cur = state.labels[i];
        EchoVector b = to_echo(state.bias.voxel(i));
        unsigned flags = 0;

        // label proposal: uniform over the other modeled tissues
        std::size_t n_other = tissues.size();
        if (cur != Tissue::unclassified) --n_other;
        if (n_other > 0) {
          std::size_t pick = rng.below(n_other);
          Tissue proposal = tissues.front();
          for (Tissue t : tissues) {
            if (t == cur) continue;
            if (pick-- == 0) {
              proposal = t;
              break;
            }
          }
          const double delta =
              (log_lik(i, proposal, b) - log_lik(i, cur, b) -
               (local_label_energy_at(state.labels, nb, proposal, pot) -
                local_label_energy_at(state.labels, nb, cur, pot))) *
              inv_t;
          if (metropolis_accept(delta, rng)) {
            state.labels[i] = proposal;
            flags |= 1u;
          }
        }

        if (!params.freeze_bias) {
          EchoVector nb_b = b;
          for (int ch = 0; ch < d; ++ch) nb_b[ch] += rng.uniform(-params.bias_step, params.bias_step);
          const Tissue t = state.labels[i];
          const double delta =
              (log_lik(i, t, nb_b) - log_lik(i, t, b) -
               (local_bias_energy_at(state.bias, nb, nb_b, params.prior) -
                local_bias_energy_at(state.bias, nb, b, params.prior))) *
              inv_t;
          if (metropolis_accept(delta, rng)) {
            for (int ch = 0; ch < d; ++ch) state.bias.values[i * d + ch] = nb_b[ch];
            flags |= 2u;
          }
        }
        return flags;
      });
  return SweepStats{label_acc, bias_acc};
}

SaResult sa_run(const Volume& volume, const TissueModels& models, const RunParams& params) {
  params.validate();
  check_inputs(volume, models);
  const ParzenLikelihood like = models.parzen_likelihood();
  OptState state = initialize(volume, like, params.unclassified_threshold, params.seed);

  SaResult out;
  double best = report_energy(state, volume, like, params.potentials, params.prior);
  out.labels = state.labels;
  out.bias = state.bias;
  std::size_t label_acc = 0;
  std::size_t bias_acc = 0;
  for (std::size_t l = 1; l <= params.schedule.sweeps; ++l) {
    const SweepStats st =
        sa_sweep(state, Temperature(params.schedule.temperature(l)), volume, models, params);
    label_acc += st.label_accepts;
    bias_acc += st.bias_accepts;
    const double e = report_energy(state, volume, like, params.potentials, params.prior);
    out.trace.push_back(e);
    if (!params.keep_best || e > best) {
      best = e;
      out.best_sweep = l;
      out.labels = state.labels;
      out.bias = state.bias;
    }
  }
  const double proposals =
      static_cast<double>(params.schedule.sweeps) * static_cast<double>(volume.dims.voxel_count());
  if (proposals > 0) {
    out.label_accept_rate = static_cast<double>(label_acc) / proposals;
    out.bias_accept_rate = static_cast<double>(bias_acc) / proposals;
  }
  return out;
}

EchoVector solve_bias_at(const BiasField& bias, std::size_t i, Tissue t, std::span<const double> z,
                         const GaussianTissueModel& model, const BiasPrior& prior) {
  const int d = model.channels();
  const TissueGaussian& g = model.tissue(t);
  const NeighborList nb = first_order_neighbors(i, bias.dims);
  const double n = static_cast<double>(nb.size());

  EchoVector neighbor_sum{};
  for (std::size_t j : nb) {
    for (int c = 0; c < d; ++c) neighbor_sum[c] += bias.values[j * d + c];
  }
  // A = (2 alpha n + 2 beta) Sigma + 1
  EchoMatrix a = EchoMatrix::identity(d);
  const double scale = 2.0 * prior.alpha * n + 2.0 * prior.beta;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) a(r, c) += scale * g.cov(r, c);
  }
  const EchoVector z_log = model.log_intensity(z);
  EchoVector rhs = multiply(g.cov, neighbor_sum, d);
  for (int c = 0; c < d; ++c) rhs[c] = 2.0 * prior.alpha * rhs[c] + (g.mean[c] - z_log[c]);
  return multiply(inverse(a, d), rhs, d);
}

std::size_t label_pass(OptState& state, const Volume& volume, const Likelihood& likelihood,
                       const RunParams& params) {
  const auto tissues = likelihood.modeled_tissues();
  const auto& pot = params.potentials;
  const auto [changed, unused] =
      visit_voxels(volume.dims, params.parallel, [&](std::size_t i, Index3 c) -> unsigned {
        const NeighborList nb = neighbors_at(c, i, volume.dims);
        double best = -std::numeric_limits<double>::infinity();
        Tissue best_t = tissues.front();
        for (Tissue t : tissues) {
          const double v = likelihood.log_density(volume.voxel(i), t, state.bias.voxel(i)) -
                           local_label_energy_at(state.labels, nb, t, pot);
          if (v > best) {
            best = v;
            best_t = t;
          }
        }
        if (params.unclassified_threshold && best < *params.unclassified_threshold) {
          best_t = Tissue::unclassified;
        }
        const bool moved = best_t != state.labels[i];
        state.labels[i] = best_t;
        return moved ? 1u : 0u;
      });
  (void)unused;
  return changed;
}

IterationStats icm1_iteration(OptState& state, const Volume& volume, const TissueModels& models,
                              const RunParams& params) {
  check_inputs(volume, models);
  const GaussianTissueModel& g = require_gaussian(models, Algorithm::icm1);
  if (!params.freeze_bias) icm1_bias_pass(state, volume, g, params);
  const ParzenLikelihood parzen = models.parzen_likelihood();
  const std::optional<GaussianLikelihood> gauss(std::in_place, g);
  IterationStats st;
  st.labels_changed = label_pass(state, volume, label_likelihood(params, parzen, gauss), params);
  ++state.counter;
  return st;
}

void smooth_binomial(std::span<double> field, const Dims& dims, int components,
                     std::size_t passes) {
  const std::array<std::size_t, 3> extent{dims.nx, dims.ny, dims.nz};
  const std::array<std::size_t, 3> stride{1, dims.nx, dims.nx * dims.ny};
  const auto comp = static_cast<std::size_t>(components);
  std::vector<double> line;
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = extent[axis];
    if (n < 2) continue;
    const std::size_t s = stride[axis];
    line.resize(n);
    const std::size_t lines = dims.voxel_count() / n;
    for (std::size_t l = 0; l < lines; ++l) {
      // start voxel of line l: enumerate the other two axes
      std::size_t base = 0;
      if (axis == 0) {
        base = l * dims.nx;
      } else if (axis == 1) {
        base = (l % dims.nx) + (l / dims.nx) * dims.nx * dims.ny;
      } else {
        base = l;
      }
      for (std::size_t c = 0; c < comp; ++c) {
        for (std::size_t k = 0; k < n; ++k) line[k] = field[(base + k * s) * comp + c];
        for (std::size_t p = 0; p < passes; ++p) {
          double prev = line[0];
          line[0] = (2.0 * line[0] + line[1]) / 3.0;
          for (std::size_t k = 1; k + 1 < n; ++k) {
            const double cur = line[k];
            line[k] = 0.25 * (prev + 2.0 * cur + line[k + 1]);
            prev = cur;
          }
          line[n - 1] = (prev + 2.0 * line[n - 1]) / 3.0;
        }
        for (std::size_t k = 0; k < n; ++k) field[(base + k * s) * comp + c] = line[k];
      }
    }
  }
}

IterationStats icm2_iteration(OptState& state, const Volume& volume, const TissueModels& models,
                              const RunParams& params) {
  check_inputs(volume, models);
  const GaussianTissueModel& g = require_gaussian(models, Algorithm::icm2);
  const ParzenLikelihood parzen = models.parzen_likelihood();
  const int d = volume.dims.channels;
  const std::size_t nvox = volume.dims.voxel_count();
  IterationStats st;

  if (!params.freeze_bias) {
    std::vector<Tissue> tissues;
    for (Tissue t : parzen.modeled_tissues()) {
      if (g.models(t)) tissues.push_back(t);
    }
    // R: d values per voxel. N: symmetric d x d stored as (00), or (00, 01, 11).
    const int n_comp = d == 1 ? 1 : 3;
    std::vector<double> residual(nvox * d, 0.0);
    std::vector<double> normalizer(nvox * n_comp, 0.0);
    std::vector<double> logw(tissues.size());
#pragma omp parallel for schedule(static) firstprivate(logw) if (params.parallel)
    for (long long ii = 0; ii < static_cast<long long>(nvox); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const auto z = volume.voxel(i);
      const auto y_old = state.bias.voxel(i);
      // uniform tissue prior p(x) cancels after normalizing the weights
      double max_w = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < tissues.size(); ++k) {
        logw[k] = parzen.log_density(z, tissues[k], y_old);
        max_w = std::max(max_w, logw[k]);
      }
      double total = 0.0;
      for (double& w : logw) {
        w = std::exp(w - max_w);
        total += w;
      }
      const EchoVector z_log = g.log_intensity(z);
      EchoVector r{};
      EchoMatrix nm;
      for (std::size_t k = 0; k < tissues.size(); ++k) {
        const TissueGaussian& tg = g.tissue(tissues[k]);
        const double w = logw[k] / total;
        EchoVector diff{};
        for (int c = 0; c < d; ++c) diff[c] = tg.mean[c] - z_log[c];
        const EchoVector rk = multiply(tg.inv_cov, diff, d);
        for (int c = 0; c < d; ++c) r[c] += w * rk[c];
        for (auto m = 0u; m < nm.m.size(); ++m) nm.m[m] += w * tg.inv_cov.m[m];
      }
      for (int c = 0; c < d; ++c) residual[i * d + c] = r[c];
      if (d == 1) {
        normalizer[i] = nm(0, 0);
      } else {
        normalizer[i * 3 + 0] = nm(0, 0);
        normalizer[i * 3 + 1] = 0.5 * (nm(0, 1) + nm(1, 0));
        normalizer[i * 3 + 2] = nm(1, 1);
      }
    }
    smooth_binomial(residual, volume.dims, d, params.filter_passes);
    smooth_binomial(normalizer, volume.dims, n_comp, params.filter_passes);
    std::size_t singular = 0;
    for (std::size_t i = 0; i < nvox; ++i) {
      EchoMatrix nm;
      if (d == 1) {
        nm(0, 0) = normalizer[i];
      } else {
        nm(0, 0) = normalizer[i * 3 + 0];
        nm(0, 1) = nm(1, 0) = normalizer[i * 3 + 1];
        nm(1, 1) = normalizer[i * 3 + 2];
      }
      const double det = determinant(nm, d);
      const double scale = std::pow(std::abs(trace(nm, d)) / d, d);
      if (!(std::abs(det) > 1e-12 * scale) || !std::isfinite(det)) {
        ++singular;
        continue;
      }
      EchoVector r{};
      for (int c = 0; c < d; ++c) r[c] = residual[i * d + c];
      const EchoVector y = multiply(inverse(nm, d), r, d);
      for (int c = 0; c < d; ++c) state.bias.values[i * d + c] = y[c];
    }
    st.singular_voxels = singular;
  }
  const std::optional<GaussianLikelihood> gauss(std::in_place, g);
  st.labels_changed = label_pass(state, volume, label_likelihood(params, parzen, gauss), params);
  ++state.counter;
  return st;
}

SegmentResult segment(const Volume& volume, const TissueModels& models, const RunParams& params,
                      const StepObserver& observer) {
  params.validate();
  check_inputs(volume, models);
  SegmentResult out;
  Diagnostics& diag = out.diagnostics;

  if (params.algorithm == Algorithm::sa) {
    SaResult sa = sa_run(volume, models, params);
    out.labels = std::move(sa.labels);
    out.bias = std::move(sa.bias);
    diag.energy_trace = std::move(sa.trace);
    diag.steps = params.schedule.sweeps;
    diag.label_accept_rate = sa.label_accept_rate;
    diag.bias_accept_rate = sa.bias_accept_rate;
    if (observer) {
      OptState final_state{out.labels, out.bias, diag.steps, params.seed};
      observer(diag.steps, final_state);
    }
    return out;
  }

  const GaussianTissueModel& g = require_gaussian(models, params.algorithm);
  RunParams run = params;
  if (params.algorithm == Algorithm::as) run.potentials = PotentialTable::none();
  const bool filtered = run.algorithm != Algorithm::icm1;
  const BiasPrior report_prior = filtered ? BiasPrior{0.0, 0.0} : run.prior;

  const ParzenLikelihood parzen = models.parzen_likelihood();
  const std::optional<GaussianLikelihood> gauss(std::in_place, g);
  const Likelihood& like = label_likelihood(run, parzen, gauss);

  OptState state = initialize(volume, parzen, run.unclassified_threshold, run.seed);
  diag.energy_trace.push_back(report_energy(state, volume, like, run.potentials, report_prior));
  if (observer) observer(0, state);
  const double nvox = static_cast<double>(volume.dims.voxel_count());
  for (std::size_t it = 1; it <= run.iterations; ++it) {
    const IterationStats st = filtered ? icm2_iteration(state, volume, models, run)
                                       : icm1_iteration(state, volume, models, run);
    diag.singular_voxels += st.singular_voxels;
    diag.label_change_fraction.push_back(static_cast<double>(st.labels_changed) / nvox);
    diag.energy_trace.push_back(report_energy(state, volume, like, run.potentials, report_prior));
    if (observer) observer(it, state);
  }
  diag.steps = run.iterations;
  out.labels = std::move(state.labels);
  out.bias = std::move(state.bias);
  return out;
}

}  // namespace mrfseg
