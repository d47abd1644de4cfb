#pragma once

// Parameter sweeps over synthetic phantoms: for each (value, algorithm,
// seed) cell a phantom is synthesized, a training set is drawn from a
// second, inhomogeneity-free phantom with the same S and N, the volume is
// segmented and the result scored. One RunRecord per cell.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mrfseg/config.hpp"
#include "mrfseg/lattice.hpp"
#include "mrfseg/phantom.hpp"

namespace mrfseg {

enum class EchoMode { single, dual };

struct AlgorithmChoice {
  Algorithm algorithm = Algorithm::icm1;
  EchoMode echo = EchoMode::dual;

  std::string name() const;  // e.g. "icm1-de"
  bool operator==(const AlgorithmChoice&) const = default;
};

std::optional<AlgorithmChoice> parse_algorithm_choice(std::string_view name);

/// Fixed phantom parameters of one figure and the name of its swept one.
struct FigureSetup {
  std::string param_name;
  double noise = 50.0;
  double inhomogeneity = 0.0;
  double smoothing = 0.0;
  bool include_sb = false;
  bool gyrus = false;           // sinusoidal thickness phantom, thickness_error metric
  bool sweeps_iterations = false;
};

FigureSetup figure_setup(int figure);

struct BenchmarkSpec {
  int figure = 4;
  std::vector<double> values;
  std::vector<AlgorithmChoice> algorithms;
  Dims dims{128, 128, 8, 1};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  RunConfig config;
  bool record_timing = true;

  void validate() const;

  /// Sweep values, algorithms and desk-scale dims for a figure.
  static BenchmarkSpec defaults_for(int figure);
};

struct RunRecord {
  int figure = 0;
  std::string param_name;
  double param_value = 0.0;
  std::string algorithm;
  std::string echo_mode;  // "SE" or "DE"
  std::uint64_t seed = 0;
  double error = 0.0;
  std::size_t iterations = 0;
  double wall_ms = 0.0;
};

/// The phantom, truth and fitted models of one cell.
struct CellInputs {
  Volume volume;
  LabelMap truth;
  TissueModels models;
};

CellInputs prepare_cell(const BenchmarkSpec& spec, double value, EchoMode echo,
                        std::uint64_t seed);

RunRecord run_cell(const BenchmarkSpec& spec, double value, const AlgorithmChoice& choice,
                   std::uint64_t seed);

/// Runs every cell, up to `threads` at a time; rows come back sorted by
/// (value, algorithm order, seed). A failing cell aborts with its context.
std::vector<RunRecord> benchmark_sweep(const BenchmarkSpec& spec, int threads = 1);

/// Columns: figure,param_name,param_value,algorithm,echo_mode,seed,error,iterations,wall_ms
void write_csv(std::ostream& out, const std::vector<RunRecord>& rows);

/// Mean error over all seeds of one (value, algorithm) pair.
double mean_error(const std::vector<RunRecord>& rows, double value, const AlgorithmChoice& choice);

}  // namespace mrfseg
