#include "mrfseg/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mrfseg/metrics.hpp"
#include "mrfseg/random.hpp"

namespace mrfseg {
namespace {

struct PhantomParams {
  double noise;
  double inhomogeneity;
  double smoothing;
};

PhantomParams phantom_params(int figure, const FigureSetup& f, double value) {
  PhantomParams p{f.noise, f.inhomogeneity, f.smoothing};
  switch (figure) {
    case 4: p.noise = value; break;
    case 5: p.inhomogeneity = value; break;
    case 6: p.smoothing = value; break;
    case 8:
      // set A (0) or set B (1)
      if (value == 0.0) {
        p = {50.0, 0.1, 0.2};
      } else {
        p = {80.0, 0.0, 0.0};
      }
      break;
    default: break;
  }
  return p;
}

std::string format_value(int figure, double v) {
  if (figure == 8) return v == 0.0 ? "A" : "B";
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

std::string AlgorithmChoice::name() const {
  return std::string(algorithm_name(algorithm)) + (echo == EchoMode::single ? "-se" : "-de");
}

std::optional<AlgorithmChoice> parse_algorithm_choice(std::string_view name) {
  const auto dash = name.rfind('-');
  if (dash == std::string_view::npos) return std::nullopt;
  const auto algo = parse_algorithm(name.substr(0, dash));
  const auto mode = name.substr(dash + 1);
  if (!algo || (mode != "se" && mode != "de")) return std::nullopt;
  return AlgorithmChoice{*algo, mode == "se" ? EchoMode::single : EchoMode::dual};
}

FigureSetup figure_setup(int figure) {
  FigureSetup f;
  switch (figure) {
    case 2:
    case 3:
      f = {"iterations", 50.0, 0.1, 0.2, figure == 3, false, true};
      break;
    case 4: f = {"N", 50.0, 0.0, 0.0, false, false, false}; break;
    case 5: f = {"I", 50.0, 0.0, 0.0, false, false, false}; break;
    case 6: f = {"S", 50.0, 0.0, 0.0, false, false, false}; break;
    case 7: f = {"d", 50.0, 0.1, 0.2, false, true, false}; break;
    case 8: f = {"set", 50.0, 0.1, 0.2, true, false, false}; break;
    default: throw ConfigError("figure must be one of 2..8, got " + std::to_string(figure));
  }
  return f;
}

void BenchmarkSpec::validate() const {
  const FigureSetup f = figure_setup(figure);
  dims.validate();
  if (seeds.empty()) throw ConfigError("benchmark needs at least one seed");
  if (algorithms.empty()) throw ConfigError("benchmark needs at least one algorithm");
  for (double v : values) {
    bool ok = std::isfinite(v);
    switch (figure) {
      case 2:
      case 3: ok = ok && v >= 0.0 && v == std::floor(v); break;
      case 4: ok = ok && v >= 0.0; break;
      case 5: ok = ok && v >= 0.0 && v < 1.0; break;
      case 6: ok = ok && v >= 0.0; break;
      case 7: ok = ok && v >= 1.0 && v == std::floor(v); break;
      case 8: ok = ok && (v == 0.0 || v == 1.0); break;
      default: break;
    }
    if (!ok) {
      throw ConfigError("value " + std::to_string(v) + " is outside the legal range of " +
                        f.param_name + " for figure " + std::to_string(figure));
    }
  }
}

BenchmarkSpec BenchmarkSpec::defaults_for(int figure) {
  BenchmarkSpec s;
  s.figure = figure;
  const AlgorithmChoice icm1_de{Algorithm::icm1, EchoMode::dual};
  const AlgorithmChoice icm2_de{Algorithm::icm2, EchoMode::dual};
  const AlgorithmChoice as_de{Algorithm::as, EchoMode::dual};
  const AlgorithmChoice icm1_se{Algorithm::icm1, EchoMode::single};
  s.algorithms = {icm1_de, icm2_de, as_de, icm1_se};
  switch (figure) {
    case 2:
    case 3: s.values = {1, 2, 3, 4, 5, 6, 8, 10, 12}; break;
    case 4: s.values = {30, 50, 80, 100}; break;
    case 5: s.values = {0.0, 0.05, 0.10, 0.15}; break;
    case 6: s.values = {0.0, 0.1, 0.2, 0.3}; break;
    case 7:
      s.values = {1, 2, 3, 4, 5};
      s.dims = Dims{128, 64, 8, 1};
      break;
    case 8:
      s.values = {0, 1};
      s.algorithms = {{Algorithm::sa, EchoMode::single}, icm1_se};
      s.dims = Dims{64, 64, 8, 1};
      break;
    default: figure_setup(figure);
  }
  return s;
}

CellInputs prepare_cell(const BenchmarkSpec& spec, double value, EchoMode echo,
                        std::uint64_t seed) {
  const FigureSetup f = figure_setup(spec.figure);
  const PhantomParams pp = phantom_params(spec.figure, f, value);
  Dims dims = spec.dims;
  dims.channels = 1;

  LabelMap truth = f.gyrus ? sinusoidal_gyrus(dims, static_cast<std::size_t>(value))
                           : shell_template(dims, f.include_sb);
  TissueMeans means = TissueMeans::double_echo();
  if (echo == EchoMode::single) means = means.single_echo();

  // The phantom seed ignores the swept value, so every point of a sweep
  // sees the same underlying noise draws.
  PhantomSpec ps;
  ps.labels = truth;
  ps.means = means;
  ps.noise = pp.noise;
  ps.smoothing = pp.smoothing;
  ps.inhomogeneity = pp.inhomogeneity;
  ps.seed = stream_key(seed, 0x7068616eULL);
  Volume volume = synthesize(ps);

  PhantomSpec train_spec = ps;
  train_spec.inhomogeneity = 0.0;
  train_spec.seed = stream_key(seed, 0x747261696eULL);
  const Volume train_volume = synthesize(train_spec);
  const TrainingSet training =
      sample_training(train_volume, truth, spec.config.training_points, train_spec.seed);
  const FittedModel fitted = fit_model(training, spec.config.sigma, spec.config.log_clamp);
  return CellInputs{std::move(volume), std::move(truth),
                    make_tissue_models(fitted, spec.config.use_lut, spec.config.lut_bins)};
}

RunRecord run_cell(const BenchmarkSpec& spec, double value, const AlgorithmChoice& choice,
                   std::uint64_t seed) {
  const FigureSetup f = figure_setup(spec.figure);
  const auto start = std::chrono::steady_clock::now();
  const CellInputs in = prepare_cell(spec, value, choice.echo, seed);

  RunConfig cfg = spec.config;
  cfg.algorithm = choice.algorithm;
  cfg.seed = seed;
  if (f.sweeps_iterations) {
    if (choice.algorithm == Algorithm::sa) {
      cfg.sweeps = static_cast<std::size_t>(value);
    } else {
      cfg.iterations = static_cast<std::size_t>(value);
    }
  }
  const SegmentResult res = segment(in.volume, in.models, cfg.run_params());

  RunRecord r;
  r.figure = spec.figure;
  r.param_name = f.param_name;
  r.param_value = value;
  r.algorithm = std::string(algorithm_name(choice.algorithm));
  r.echo_mode = choice.echo == EchoMode::single ? "SE" : "DE";
  r.seed = seed;
  r.error = f.gyrus ? thickness_error(res.labels, in.truth) : error_rate(res.labels, in.truth).error;
  r.iterations = choice.algorithm == Algorithm::sa ? cfg.sweeps : cfg.iterations;
  if (spec.record_timing) {
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
  }
  return r;
}

std::vector<RunRecord> benchmark_sweep(const BenchmarkSpec& spec, int threads) {
  spec.validate();
  struct Cell {
    std::size_t value_index;
    std::size_t algo_index;
    std::size_t seed_index;
  };
  std::vector<Cell> cells;
  for (std::size_t v = 0; v < spec.values.size(); ++v) {
    for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
      for (std::size_t s = 0; s < spec.seeds.size(); ++s) cells.push_back({v, a, s});
    }
  }
  std::vector<RunRecord> rows(cells.size());
  std::vector<std::exception_ptr> failures(cells.size());
  const auto n = static_cast<long long>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(threads, 1))
  for (long long k = 0; k < n; ++k) {
    const Cell& c = cells[static_cast<std::size_t>(k)];
    try {
      rows[k] = run_cell(spec, spec.values[c.value_index], spec.algorithms[c.algo_index],
                         spec.seeds[c.seed_index]);
    } catch (...) {
      failures[k] = std::current_exception();
    }
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (!failures[k]) continue;
    const Cell& c = cells[k];
    std::string what = "unknown error";
    try {
      std::rethrow_exception(failures[k]);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    throw Error("benchmark cell (figure " + std::to_string(spec.figure) + ", " +
                figure_setup(spec.figure).param_name + "=" +
                format_value(spec.figure, spec.values[c.value_index]) + ", " +
                spec.algorithms[c.algo_index].name() + ", seed " +
                std::to_string(spec.seeds[c.seed_index]) + ") failed: " + what);
  }
  // cells were generated in (value, algorithm, seed) order already
  return rows;
}

void write_csv(std::ostream& out, const std::vector<RunRecord>& rows) {
  out << "figure,param_name,param_value,algorithm,echo_mode,seed,error,iterations,wall_ms\n";
  for (const auto& r : rows) {
    out << r.figure << ',' << r.param_name << ',' << format_value(r.figure, r.param_value) << ','
        << r.algorithm << ',' << r.echo_mode << ',' << r.seed << ',' << std::setprecision(10)
        << r.error << ',' << r.iterations << ',' << std::fixed << std::setprecision(1)
        << r.wall_ms << std::defaultfloat << '\n';
  }
}

double mean_error(const std::vector<RunRecord>& rows, double value, const AlgorithmChoice& choice) {
  const std::string algo(algorithm_name(choice.algorithm));
  const std::string mode = choice.echo == EchoMode::single ? "SE" : "DE";
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.param_value == value && r.algorithm == algo && r.echo_mode == mode) {
      sum += r.error;
      ++n;
    }
  }
  if (n == 0) throw ConfigError("no benchmark rows for " + choice.name());
  return sum / static_cast<double>(n);
}

}  // namespace mrfseg
