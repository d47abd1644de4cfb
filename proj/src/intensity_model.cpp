#include "mrfseg/intensity_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

namespace mrfseg {
namespace {

constexpr double kLn2Pi = 1.8378770664093454836;  // ln(2 pi)

std::string tissue_str(Tissue t) { return std::string(tissue_name(t)); }

}  // namespace

std::vector<Tissue> TrainingSet::tissues() const {
  std::vector<Tissue> out;
  for (Tissue t : kTissues) {
    if (has(t)) out.push_back(t);
  }
  return out;
}

std::size_t TrainingSet::total() const {
  std::size_t n = 0;
  for (const auto& p : points) n += p.size();
  return n;
}

TrainingSet read_training_tsv(std::istream& in) {
  TrainingSet out;
  out.channels = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const auto where = " (line " + std::to_string(line_no) + ")";
    if (fields.size() < 2 || fields.size() > 3) {
      throw FormatError("training line needs tissue and 1 or 2 echoes" + where);
    }
    const auto tissue = parse_tissue(fields[0]);
    if (!tissue || *tissue == Tissue::unclassified) {
      throw FormatError("unknown training tissue '" + fields[0] + "'" + where);
    }
    const int d = static_cast<int>(fields.size()) - 1;
    if (out.channels == 0) out.channels = d;
    if (d != out.channels) throw FormatError("inconsistent echo count" + where);
    EchoVector p{};
    for (int c = 0; c < d; ++c) {
      try {
        std::size_t used = 0;
        p[c] = std::stod(fields[c + 1], &used);
        if (used != fields[c + 1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw FormatError("bad intensity '" + fields[c + 1] + "'" + where);
      }
      if (!std::isfinite(p[c])) throw FormatError("non-finite intensity" + where);
    }
    out.of(*tissue).push_back(p);
  }
  if (out.channels == 0) throw FormatError("training file contains no points");
  return out;
}

TrainingSet load_training_tsv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  return read_training_tsv(in);
}

void write_training_tsv(std::ostream& out, const TrainingSet& training) {
  out.precision(17);
  for (Tissue t : kTissues) {
    for (const auto& p : training.of(t)) {
      out << tissue_name(t);
      for (int c = 0; c < training.channels; ++c) out << '\t' << p[c];
      out << '\n';
    }
  }
}

double default_parzen_width(const TrainingSet& training) {
  double ss = 0.0;
  double dof = 0.0;
  double magnitude = 0.0;
  std::size_t count = 0;
  for (Tissue t : training.tissues()) {
    const auto& pts = training.of(t);
    for (const auto& p : pts) {
      for (int c = 0; c < training.channels; ++c) magnitude += std::abs(p[c]);
      count += static_cast<std::size_t>(training.channels);
    }
    if (pts.size() < 2) continue;
    for (int c = 0; c < training.channels; ++c) {
      double mean = 0.0;
      for (const auto& p : pts) mean += p[c];
      mean /= static_cast<double>(pts.size());
      for (const auto& p : pts) ss += (p[c] - mean) * (p[c] - mean);
      dof += static_cast<double>(pts.size() - 1);
    }
  }
  if (dof == 0.0) throw ModelFitError("cannot derive a Parzen width: no tissue has 2 points");
  const double floor = count > 0 ? 1e-3 * magnitude / static_cast<double>(count) : 0.0;
  const double width = std::max(0.3 * std::sqrt(ss / dof), floor);
  if (!(width > 0.0)) throw ModelFitError("cannot derive a Parzen width: all training points are 0");
  return width;
}

ParzenModel::ParzenModel(TrainingSet training, double sigma)
    : training_(std::move(training)), sigma_(sigma) {
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
    throw ModelFitError("Parzen width must be positive and finite");
  }
  if (training_.channels != 1 && training_.channels != 2) {
    throw ModelFitError("training points must have 1 or 2 echoes");
  }
  if (training_.tissues().empty()) throw ModelFitError("training set is empty");
  const int d = training_.channels;
  log_norm_ = -0.5 * d * (kLn2Pi + 2.0 * std::log(sigma_));
  peak_log_density_ = -std::numeric_limits<double>::infinity();
  for (Tissue t : training_.tissues()) {
    for (const auto& p : training_.of(t)) {
      peak_log_density_ = std::max(peak_log_density_, log_density_corrected(p, t));
    }
  }
}

double ParzenModel::log_density_corrected(const EchoVector& corrected, Tissue t) const {
  if (!models(t)) throw ConfigError("tissue " + tissue_str(t) + " is not modeled");
  const auto& pts = training_.of(t);
  const int d = training_.channels;
  const double inv_var = 1.0 / (sigma_ * sigma_);
  // log-sum-exp over the kernel exponents
  double max_e = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> exps;
  exps.resize(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    double r2 = 0.0;
    for (int c = 0; c < d; ++c) {
      const double r = corrected[c] - pts[k][c];
      r2 += r * r;
    }
    exps[k] = -0.5 * r2 * inv_var;
    max_e = std::max(max_e, exps[k]);
  }
  double s = 0.0;
  for (double e : exps) s += std::exp(e - max_e);
  return max_e + std::log(s) - std::log(static_cast<double>(pts.size())) + log_norm_;
}

EchoVector corrected_intensity(std::span<const double> z, std::span<const double> bias) {
  EchoVector out{};
  for (std::size_t c = 0; c < z.size(); ++c) out[c] = std::exp(bias[c]) * z[c];
  return out;
}

double parzen_log_density(std::span<const double> z, Tissue t, std::span<const double> bias,
                          const ParzenModel& model) {
  return model.log_density_corrected(corrected_intensity(z, bias), t);
}

GaussianTissueModel::GaussianTissueModel(int channels, double log_clamp)
    : channels_(channels), log_clamp_(log_clamp) {
  if (channels != 1 && channels != 2) throw ModelFitError("channels must be 1 or 2");
  if (!(log_clamp > 0.0)) throw ModelFitError("log clamp must be positive");
}

const TissueGaussian& GaussianTissueModel::tissue(Tissue t) const {
  if (!models(t)) throw ConfigError("tissue " + tissue_str(t) + " has no Gaussian fit");
  return *tissues_[tissue_slot(t)];
}

void GaussianTissueModel::set(Tissue t, const EchoVector& mean, const EchoMatrix& cov) {
  const int d = channels_;
  if (t == Tissue::unclassified) throw ModelFitError("cannot fit the unclassified label");
  if (d == 2 && std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * (std::abs(cov(0, 1)) + 1.0)) {
    throw ModelFitError("covariance of " + tissue_str(t) + " is not symmetric");
  }
  if (!(min_eigenvalue(cov, d) > 0.0)) {
    throw ModelFitError("covariance of " + tissue_str(t) + " is not positive definite");
  }
  TissueGaussian g;
  g.mean = mean;
  g.cov = cov;
  g.inv_cov = inverse(cov, d);
  g.log_norm = -0.5 * d * kLn2Pi - 0.5 * std::log(determinant(cov, d));
  tissues_[tissue_slot(t)] = g;
}

EchoVector GaussianTissueModel::log_intensity(std::span<const double> z) const {
  EchoVector out{};
  for (int c = 0; c < channels_; ++c) out[c] = std::log(std::max(z[c], log_clamp_));
  return out;
}

GaussianTissueModel fit_gaussian_model(const TrainingSet& training, double log_clamp) {
  GaussianTissueModel model(training.channels, log_clamp);
  const int d = training.channels;
  for (Tissue t : training.tissues()) {
    const auto& pts = training.of(t);
    if (pts.size() < 2) {
      throw ModelFitError("tissue " + tissue_str(t) + " needs at least 2 training points, has " +
                          std::to_string(pts.size()));
    }
    std::vector<EchoVector> logs;
    logs.reserve(pts.size());
    for (const auto& p : pts) logs.push_back(model.log_intensity(p));
    EchoVector mean{};
    for (const auto& l : logs) {
      for (int c = 0; c < d; ++c) mean[c] += l[c];
    }
    for (int c = 0; c < d; ++c) mean[c] /= static_cast<double>(logs.size());
    EchoMatrix cov;
    for (const auto& l : logs) {
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) cov(r, c) += (l[r] - mean[r]) * (l[c] - mean[c]);
      }
    }
    const double denom = static_cast<double>(logs.size() - 1);
    for (auto& v : cov.m) v /= denom;
    const double lambda =
        std::max(kCovarianceRegularization * trace(cov, d) / d, kCovarianceFloor);
    for (int k = 0; k < d; ++k) cov(k, k) += lambda;
    model.set(t, mean, cov);
  }
  return model;
}

double gaussian_log_density(std::span<const double> z_log, Tissue t, std::span<const double> bias,
                            const GaussianTissueModel& model) {
  const auto& g = model.tissue(t);
  const int d = model.channels();
  EchoVector r{};
  for (int c = 0; c < d; ++c) r[c] = z_log[c] + bias[c] - g.mean[c];
  return g.log_norm - 0.5 * quadratic_form(g.inv_cov, r, d);
}

DensityLut::DensityLut(const ParzenModel& model, std::size_t bins_per_echo)
    : bins_(bins_per_echo), channels_(model.channels()) {
  if (bins_ < 2) throw ConfigError("LUT needs at least 2 bins per echo");
  const int d = channels_;
  const double sigma = model.sigma();
  const std::size_t cells = d == 1 ? bins_ : bins_ * bins_;
  // one grid shared by all tissues, spanning every training point
  EchoVector lo{};
  EchoVector width{};
  for (int c = 0; c < d; ++c) {
    double mn = std::numeric_limits<double>::infinity();
    double mx = -mn;
    for (Tissue t : model.training().tissues()) {
      for (const auto& p : model.training().of(t)) {
        mn = std::min(mn, p[c]);
        mx = std::max(mx, p[c]);
      }
    }
    lo[c] = mn - 3.0 * sigma;
    width[c] = (mx - mn + 6.0 * sigma) / static_cast<double>(bins_);
  }
  for (Tissue t : model.training().tissues()) {
    const auto& pts = model.training().of(t);
    Grid& g = grids_[tissue_slot(t)];
    g.lo = lo;
    g.width = width;
    g.values.assign(cells, 0.0);
    if (d == 1) {
      for (std::size_t i = 0; i < bins_; ++i) {
        g.values[i] = model.log_density_corrected({bin_center(t, 0, i), 0.0}, t);
      }
      continue;
    }
    // Isotropic kernel: the 2-D sum factors per training point into a
    // product of two 1-D Gaussians.
    const double inv_var = 1.0 / (sigma * sigma);
    const std::size_t np = pts.size();
    // exponents, point index fastest
    std::vector<double> eu(bins_ * np);
    std::vector<double> ev(bins_ * np);
    for (std::size_t i = 0; i < bins_; ++i) {
      const double cu = bin_center(t, 0, i);
      const double cv = bin_center(t, 1, i);
      for (std::size_t k = 0; k < np; ++k) {
        eu[i * np + k] = -0.5 * (cu - pts[k][0]) * (cu - pts[k][0]) * inv_var;
        ev[i * np + k] = -0.5 * (cv - pts[k][1]) * (cv - pts[k][1]) * inv_var;
      }
    }
    std::vector<double> gu(bins_);
    std::vector<double> gv(bins_);
    for (std::size_t k = 0; k < np; ++k) {
      for (std::size_t i = 0; i < bins_; ++i) {
        gu[i] = std::exp(eu[i * np + k]);
        gv[i] = std::exp(ev[i * np + k]);
      }
      for (std::size_t j = 0; j < bins_; ++j) {
        if (gv[j] == 0.0) continue;
        double* row = g.values.data() + j * bins_;
        for (std::size_t i = 0; i < bins_; ++i) row[i] += gv[j] * gu[i];
      }
    }
    const double log_scale =
        -std::log(static_cast<double>(np)) - (kLn2Pi + 2.0 * std::log(sigma));
    for (std::size_t j = 0; j < bins_; ++j) {
      const double* b = ev.data() + j * np;
      for (std::size_t i = 0; i < bins_; ++i) {
        double& v = g.values[i + j * bins_];
        if (v > 1e-280) {
          v = std::log(v) + log_scale;
          continue;
        }
        // underflowed: log-sum-exp, skipping terms below e^-40 of the largest
        const double* a = eu.data() + i * np;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < np; ++k) top = std::max(top, a[k] + b[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < np; ++k) {
          const double e = a[k] + b[k] - top;
          if (e > -40.0) sum += std::exp(e);
        }
        v = top + std::log(sum) + log_scale;
      }
    }
  }
}

double DensityLut::bin_center(Tissue t, int echo, std::size_t k) const {
  const Grid& g = grids_[tissue_slot(t)];
  return g.lo[echo] + (static_cast<double>(k) + 0.5) * g.width[echo];
}

std::optional<double> DensityLut::lookup(const EchoVector& corrected, Tissue t) const {
  if (!models(t)) throw ConfigError("tissue " + tissue_str(t) + " is not in the LUT");
  const Grid& g = grids_[tissue_slot(t)];
  for (int c = 0; c < channels_; ++c) {
    const double pos = (corrected[c] - g.lo[c]) / g.width[c];
    if (!(pos >= 0.0 && pos < static_cast<double>(bins_))) return std::nullopt;
  }
  return log_density_corrected(corrected, t);
}

double DensityLut::log_density_corrected(const EchoVector& corrected, Tissue t) const {
  if (!models(t)) throw ConfigError("tissue " + tissue_str(t) + " is not in the LUT");
  const Grid& g = grids_[tissue_slot(t)];
  std::size_t cell = 0;
  std::size_t stride = 1;
  for (int c = 0; c < channels_; ++c) {
    const double pos = (corrected[c] - g.lo[c]) / g.width[c];
    std::size_t k = 0;
    if (pos >= static_cast<double>(bins_)) {
      k = bins_ - 1;
    } else if (pos > 0.0) {
      k = static_cast<std::size_t>(pos);
    }
    cell += k * stride;
    stride *= bins_;
  }
  return g.values[cell];
}

DensityLut build_lut(const ParzenModel& model, std::size_t bins_per_echo) {
  return DensityLut(model, bins_per_echo);
}

std::vector<Tissue> Likelihood::modeled_tissues() const {
  std::vector<Tissue> out;
  for (Tissue t : kTissues) {
    if (models(t)) out.push_back(t);
  }
  return out;
}

double ParzenLikelihood::log_density(std::span<const double> z, Tissue t,
                                     std::span<const double> bias) const {
  return log_density_corrected(corrected_intensity(z, bias), t);
}

double ParzenLikelihood::unclassified_log_density() const {
  return std::log(kUnclassifiedRelativeFloor) + model_.peak_log_density();
}

double GaussianLikelihood::log_density(std::span<const double> z, Tissue t,
                                       std::span<const double> bias) const {
  const EchoVector zl = model_.log_intensity(z);
  return gaussian_log_density(std::span<const double>(zl.data(), z.size()), t, bias, model_);
}

double GaussianLikelihood::unclassified_log_density() const {
  double peak = -std::numeric_limits<double>::infinity();
  for (Tissue t : kTissues) {
    if (model_.models(t)) peak = std::max(peak, model_.tissue(t).log_norm);
  }
  return std::log(kUnclassifiedRelativeFloor) + peak;
}

}  // namespace mrfseg
