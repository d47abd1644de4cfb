#include "mrfseg/energy.hpp"

#include <cmath>

namespace mrfseg {

PotentialTable PotentialTable::potts(double epsilon, double sb_brain) {
  PotentialTable p;
  for (Tissue a : kTissues) {
    for (Tissue b : kTissues) {
      if (a != b) p.set(a, b, epsilon);
    }
  }
  for (Tissue brain : {Tissue::wm, Tissue::gm, Tissue::csf}) p.set(Tissue::sb, brain, sb_brain);
  return p;
}

void PotentialTable::set(Tissue a, Tissue b, double value) {
  if (!std::isfinite(value)) throw ConfigError("potential entries must be finite");
  if (a == Tissue::unclassified || b == Tissue::unclassified) {
    throw ConfigError("the unclassified label is indifferent; its potentials are fixed at 0");
  }
  if (a == b && value != 0.0) throw ConfigError("same-tissue potential must be 0");
  table_[tissue_slot(a) * kSlots + tissue_slot(b)] = value;
  table_[tissue_slot(b) * kSlots + tissue_slot(a)] = value;
}

void BiasPrior::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw ConfigError("bias prior alpha and beta must be finite and non-negative");
  }
}

double beta_for_inhomogeneity_std(double delta_i) {
  if (!(delta_i > 0.0)) throw ConfigError("inhomogeneity std must be positive");
  return 1.0 / (2.0 * delta_i * delta_i);
}

Temperature::Temperature(double t) : t_(t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("temperature must be finite and > 0");
}

double label_energy(const LabelMap& labels, const PotentialTable& pot) {
  double e = 0.0;
  for_each_edge(labels.dims, [&](std::size_t i, std::size_t j) { e += pot(labels[i], labels[j]); });
  return e;
}

double local_label_energy(const LabelMap& labels, std::size_t i, Tissue candidate,
                          const PotentialTable& pot) {
  double e = 0.0;
  for (std::size_t j : first_order_neighbors(i, labels.dims)) e += pot(candidate, labels[j]);
  return e;
}

double bias_energy(const BiasField& bias, const BiasPrior& prior) {
  const int d = bias.dims.channels;
  double grad = 0.0;
  for_each_edge(bias.dims, [&](std::size_t i, std::size_t j) {
    for (int c = 0; c < d; ++c) {
      const double diff = bias.values[i * d + c] - bias.values[j * d + c];
      grad += diff * diff;
    }
  });
  double mag = 0.0;
  for (double v : bias.values) mag += v * v;
  return prior.alpha * grad + prior.beta * mag;
}

double local_bias_energy(const BiasField& bias, std::size_t i, std::span<const double> candidate,
                         const BiasPrior& prior) {
  const int d = bias.dims.channels;
  double grad = 0.0;
  for (std::size_t j : first_order_neighbors(i, bias.dims)) {
    for (int c = 0; c < d; ++c) {
      const double diff = candidate[c] - bias.values[j * d + c];
      grad += diff * diff;
    }
  }
  double mag = 0.0;
  for (int c = 0; c < d; ++c) mag += candidate[c] * candidate[c];
  return prior.alpha * grad + prior.beta * mag;
}

double log_likelihood_sum(const LabelMap& labels, const BiasField& bias, const Volume& volume,
                          const Likelihood& likelihood) {
  if (!labels.dims.same_grid(volume.dims) || !bias.dims.same_grid(volume.dims) ||
      bias.dims.channels != volume.dims.channels) {
    throw FormatError("labels, bias and volume must share dims");
  }
  const double floor = likelihood.unclassified_log_density();
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Tissue t = labels[i];
    s += t == Tissue::unclassified ? floor : likelihood.log_density(volume.voxel(i), t, bias.voxel(i));
  }
  return s;
}

double log_posterior(const LabelMap& labels, const BiasField& bias, const Volume& volume,
                     const Likelihood& likelihood, const PotentialTable& pot,
                     const BiasPrior& prior, Temperature t) {
  const double raw = log_likelihood_sum(labels, bias, volume, likelihood) -
                     label_energy(labels, pot) - bias_energy(bias, prior);
  return raw / t.value();
}

}  // namespace mrfseg
