#include "mrfseg/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mrfseg/benchmark.hpp"
#include "mrfseg/config.hpp"
#include "mrfseg/errors.hpp"
#include "mrfseg/metrics.hpp"
#include "mrfseg/model_io.hpp"
#include "mrfseg/mvol.hpp"
#include "mrfseg/phantom.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrfseg {
namespace {

// Outputs are written next to their destination and renamed only once the
// whole command has succeeded.
class StagedOutputs {
 public:
  StagedOutputs() = default;
  StagedOutputs(const StagedOutputs&) = delete;
  StagedOutputs& operator=(const StagedOutputs&) = delete;
  ~StagedOutputs() {
    for (const auto& [tmp, final_path] : files_) {
      std::error_code ec;
      fs::remove(tmp, ec);
    }
  }

  fs::path stage(const fs::path& final_path) {
    for (const auto& f : files_) {
      if (f.second == final_path) throw ConfigError("output path given twice: " + final_path.string());
    }
    fs::path tmp = final_path;
    tmp += ".partial";
    files_.emplace_back(tmp, final_path);
    return tmp;
  }

  std::ofstream open(const fs::path& final_path, bool binary = false) {
    const fs::path tmp = stage(final_path);
    std::ofstream f(tmp, binary ? std::ios::binary : std::ios::out);
    if (!f) throw FormatError("cannot write " + final_path.string());
    return f;
  }

  void commit() {
    for (const auto& [tmp, final_path] : files_) fs::rename(tmp, final_path);
    files_.clear();
  }

 private:
  std::vector<std::pair<fs::path, fs::path>> files_;
};

void finish(std::ofstream& f, const fs::path& name) {
  f.flush();
  if (!f) throw FormatError("failed writing " + name.string());
  f.close();
}

int default_threads() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer, got '" + env + "'");
  }
  return 1;
}

Dims parse_dims(const std::vector<std::size_t>& v) {
  if (v.size() != 3) throw ConfigError("--dims needs three values nx,ny,nz");
  Dims d{v[0], v[1], v[2], 1};
  d.validate();
  return d;
}

double parse_number(const std::string& text, const std::string& flag) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError(flag + " expects numbers, got '" + text + "'");
  }
  return v;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string training;
  std::string out;
  std::optional<double> sigma;
  double log_clamp = kDefaultLogClamp;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* sub = app.add_subcommand("train", "Fit a tissue model from a training TSV");
  sub->add_option("--training", a.training, "TSV: tissue<TAB>echo1[<TAB>echo2]")->required();
  sub->add_option("--out", a.out, "model JSON to write")->required();
  sub->add_option("--sigma", a.sigma, "Parzen width (default: from the training data)");
  sub->add_option("--log-clamp", a.log_clamp, "floor applied before taking logs");
}

void run_train(const TrainArgs& a, std::ostream& out) {
  const TrainingSet training = load_training_tsv(a.training);
  if (a.sigma && !(*a.sigma > 0.0)) throw ConfigError("--sigma must be positive");
  const FittedModel model = fit_model(training, a.sigma, a.log_clamp);
  StagedOutputs staged;
  auto f = staged.open(a.out);
  f << model_to_json(model).dump(1) << '\n';
  finish(f, a.out);
  staged.commit();
  out << "model: " << training.total() << " points, " << training.tissues().size()
      << " tissues, sigma " << model.parzen.sigma() << '\n';
}

// ------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config;
  std::string labels;
  std::string templ = "shell";
  std::vector<std::size_t> dims{128, 128, 8};
  std::size_t thickness = 3;
  bool sb = false;
  int echoes = 2;
  double noise = 0.0;
  double smooth = 0.0;
  double inhom = 0.0;
  bool low_near_center = false;
  std::uint64_t seed = 1;
  std::string out;
  std::string truth_out;
  std::string training_out;
  std::size_t training_points = 500;
  CLI::App* sub = nullptr;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  auto* sub = app.add_subcommand("simulate", "Synthesize a phantom volume");
  a.sub = sub;
  sub->add_option("--config", a.config, "JSON with any of the flag names as keys");
  sub->add_option("--labels", a.labels, "template label MVOL (overrides --template)");
  sub->add_option("--template", a.templ, "built-in template")->check(CLI::IsMember({"shell", "gyrus"}));
  sub->add_option("--dims", a.dims, "nx,ny,nz of a built-in template")->delimiter(',')->expected(3);
  sub->add_option("--thickness", a.thickness, "gyrus GM thickness in voxels");
  sub->add_flag("--sb", a.sb, "include the scalp/bone shell");
  sub->add_option("--echoes", a.echoes, "1 (pd only) or 2")->check(CLI::IsMember({1, 2}));
  sub->add_option("--noise", a.noise, "noise std N per echo");
  sub->add_option("--smooth", a.smooth, "smoothing weight S");
  sub->add_option("--inhom", a.inhom, "inhomogeneity I");
  sub->add_flag("--low-near-center", a.low_near_center, "put 1-I, not 1+I, nearest the center");
  sub->add_option("--seed", a.seed, "noise seed");
  sub->add_option("--out", a.out, "volume MVOL to write")->required();
  sub->add_option("--truth-out", a.truth_out, "ground-truth label MVOL to write");
  sub->add_option("--training-out", a.training_out, "training TSV sampled from the phantom");
  sub->add_option("--training-points", a.training_points, "training points per tissue");
}

// Config keys are applied only where the flag was not given explicitly.
void apply_simulate_config(SimulateArgs& a) {
  if (a.config.empty()) return;
  std::ifstream in(a.config);
  if (!in) throw ConfigError("cannot open config " + a.config);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(a.config + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("simulate config must be a JSON object");
  auto given = [&](const char* flag) { return a.sub->count(std::string("--") + flag) > 0; };
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "labels") {
        if (!given("labels")) a.labels = v.get<std::string>();
      } else if (key == "template") {
        if (!given("template")) a.templ = v.get<std::string>();
      } else if (key == "dims") {
        if (!given("dims")) a.dims = v.get<std::vector<std::size_t>>();
      } else if (key == "thickness") {
        if (!given("thickness")) a.thickness = v.get<std::size_t>();
      } else if (key == "sb") {
        if (!given("sb")) a.sb = v.get<bool>();
      } else if (key == "echoes") {
        if (!given("echoes")) a.echoes = v.get<int>();
      } else if (key == "noise") {
        if (!given("noise")) a.noise = v.get<double>();
      } else if (key == "smooth") {
        if (!given("smooth")) a.smooth = v.get<double>();
      } else if (key == "inhom") {
        if (!given("inhom")) a.inhom = v.get<double>();
      } else if (key == "low_near_center") {
        if (!given("low-near-center")) a.low_near_center = v.get<bool>();
      } else if (key == "seed") {
        if (!given("seed")) a.seed = v.get<std::uint64_t>();
      } else if (key == "training_points") {
        if (!given("training-points")) a.training_points = v.get<std::size_t>();
      } else {
        throw ConfigError("unknown simulate config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("simulate config key '" + key + "' has the wrong type: " + e.what());
    }
  }
  if (a.templ != "shell" && a.templ != "gyrus") throw ConfigError("unknown template '" + a.templ + "'");
  if (a.echoes != 1 && a.echoes != 2) throw ConfigError("echoes must be 1 or 2");
}

void run_simulate(SimulateArgs a, std::ostream& out) {
  apply_simulate_config(a);
  PhantomSpec ps;
  std::array<double, 3> voxel_mm{1.0, 1.0, 1.0};
  if (!a.labels.empty()) {
    std::ifstream in(a.labels, std::ios::binary);
    if (!in) throw FormatError("cannot open " + a.labels);
    const auto header = read_mvol_header(in);
    voxel_mm = header.voxel_mm;
    ps.labels = load_labels(a.labels);
  } else {
    const Dims dims = parse_dims(a.dims);
    ps.labels = a.templ == "gyrus" ? sinusoidal_gyrus(dims, a.thickness) : shell_template(dims, a.sb);
  }
  ps.means = TissueMeans::double_echo();
  if (a.echoes == 1) ps.means = ps.means.single_echo();
  ps.noise = a.noise;
  ps.smoothing = a.smooth;
  ps.inhomogeneity = a.inhom;
  ps.high_near_center = !a.low_near_center;
  ps.seed = a.seed;
  Volume v = synthesize(ps);
  v.voxel_mm = voxel_mm;

  StagedOutputs staged;
  {
    auto f = staged.open(a.out, true);
    write_volume(f, v);
    finish(f, a.out);
  }
  if (!a.truth_out.empty()) {
    auto f = staged.open(a.truth_out, true);
    write_labels(f, ps.labels, voxel_mm);
    finish(f, a.truth_out);
  }
  if (!a.training_out.empty()) {
    const TrainingSet t = sample_training(v, ps.labels, a.training_points, stream_key(a.seed, 1));
    auto f = staged.open(a.training_out);
    write_training_tsv(f, t);
    finish(f, a.training_out);
  }
  staged.commit();
  out << "phantom " << v.dims.nx << "x" << v.dims.ny << "x" << v.dims.nz << ", " << v.dims.channels
      << " echo(s)\n";
}

// -------------------------------------------------------------- segment

struct SegmentArgs {
  std::string volume;
  std::string model;
  std::string config;
  std::string algo;
  std::optional<std::size_t> iters;
  std::optional<std::size_t> sweeps;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  bool parallel = false;
  bool no_lut = false;
  std::optional<int> threads;
  std::string labels_out;
  std::string bias_out;
  std::string diag_out;
};

void add_segment(CLI::App& app, SegmentArgs& a) {
  auto* sub = app.add_subcommand("segment", "Segment a volume");
  sub->add_option("--volume", a.volume, "intensity MVOL")->required();
  sub->add_option("--model", a.model, "model JSON from `train`")->required();
  sub->add_option("--config", a.config, "run-config JSON");
  sub->add_option("--algo", a.algo, "sa, icm1, icm2 or as")
      ->check(CLI::IsMember({"sa", "icm1", "icm2", "as"}));
  sub->add_option("--iters", a.iters, "ICM iterations");
  sub->add_option("--sweeps", a.sweeps, "SA sweeps");
  sub->add_option("--seed", a.seed, "RNG seed");
  sub->add_option("--threshold", a.threshold, "unclassified log-probability threshold");
  sub->add_flag("--parallel", a.parallel, "checkerboard update order across threads");
  sub->add_flag("--no-lut", a.no_lut, "evaluate Parzen sums exactly");
  sub->add_option("--threads", a.threads, "worker threads (default $MRFSEG_THREADS or 1)");
  sub->add_option("--labels-out", a.labels_out, "label MVOL to write")->required();
  sub->add_option("--bias-out", a.bias_out, "bias MVOL to write")->required();
  sub->add_option("--diag-out", a.diag_out, "diagnostics JSON to write");
}

void run_segment(const SegmentArgs& a, std::ostream& out) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_config(a.config, cfg);
  if (!a.algo.empty()) cfg.algorithm = *parse_algorithm(a.algo);
  if (a.iters) cfg.iterations = *a.iters;
  if (a.sweeps) cfg.sweeps = *a.sweeps;
  if (a.seed) cfg.seed = *a.seed;
  if (a.threshold) cfg.threshold = a.threshold;
  if (a.parallel) cfg.parallel = true;
  if (a.no_lut) cfg.use_lut = false;
  const int threads = a.threads ? *a.threads : default_threads();
  if (threads < 1) throw ConfigError("--threads must be at least 1");
  omp_set_num_threads(threads);

  const Volume volume = load_volume(a.volume);
  const FittedModel fitted = load_model(a.model);
  if (fitted.parzen.channels() != volume.dims.channels) {
    throw ConfigError("model has " + std::to_string(fitted.parzen.channels()) +
                      " echo(s) but the volume has " + std::to_string(volume.dims.channels));
  }
  const TissueModels models = make_tissue_models(fitted, cfg.use_lut, cfg.lut_bins);
  const SegmentResult res = segment(volume, models, cfg.run_params());

  StagedOutputs staged;
  {
    auto f = staged.open(a.labels_out, true);
    write_labels(f, res.labels, volume.voxel_mm);
    finish(f, a.labels_out);
  }
  {
    auto f = staged.open(a.bias_out, true);
    write_bias(f, res.bias, volume.voxel_mm);
    finish(f, a.bias_out);
  }
  if (!a.diag_out.empty()) {
    const Diagnostics& d = res.diagnostics;
    json j;
    j["algorithm"] = std::string(algorithm_name(cfg.algorithm));
    j["steps"] = d.steps;
    j["energy_trace"] = d.energy_trace;
    j["label_change_fraction"] = d.label_change_fraction;
    j["singular_voxels"] = d.singular_voxels;
    if (cfg.algorithm == Algorithm::sa) {
      j["label_accept_rate"] = d.label_accept_rate;
      j["bias_accept_rate"] = d.bias_accept_rate;
    }
    j["config"] = config_to_json(cfg);
    auto f = staged.open(a.diag_out);
    f << j.dump(1) << '\n';
    finish(f, a.diag_out);
  }
  staged.commit();
  out << algorithm_name(cfg.algorithm) << ": " << res.diagnostics.steps << " step(s)\n";
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
  std::string pred;
  std::string truth;
  bool thickness = false;
  std::string out;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  auto* sub = app.add_subcommand("score", "Compare a label MVOL against ground truth");
  sub->add_option("--pred", a.pred, "predicted label MVOL")->required();
  sub->add_option("--truth", a.truth, "ground-truth label MVOL")->required();
  sub->add_flag("--thickness", a.thickness, "also report the GM-window thickness error");
  sub->add_option("--out", a.out, "write the JSON here instead of stdout");
}

void run_score(const ScoreArgs& a, std::ostream& out, std::ostream& err) {
  const LabelMap pred = load_labels(a.pred);
  const LabelMap truth = load_labels(a.truth);
  const ErrorReport r = error_rate(pred, truth);
  json j;
  j["error"] = r.error;
  j["misclassified"] = r.misclassified;
  j["non_background"] = r.non_background;
  json conf = json::object();
  for (std::size_t t = 0; t <= kTissueCount; ++t) {
    json row = json::object();
    for (std::size_t p = 0; p <= kTissueCount; ++p) {
      if (r.confusion[t][p] == 0) continue;
      const Tissue pt = p == kTissueCount ? Tissue::unclassified : static_cast<Tissue>(p);
      row[std::string(tissue_name(pt))] = r.confusion[t][p];
    }
    if (row.empty()) continue;
    const Tissue tt = t == kTissueCount ? Tissue::unclassified : static_cast<Tissue>(t);
    conf[std::string(tissue_name(tt))] = row;
  }
  j["confusion"] = conf;
  std::optional<double> thick;
  if (a.thickness) {
    thick = thickness_error(pred, truth);
    j["thickness_error"] = *thick;
  }

  std::ostringstream summary;
  summary << "error " << std::fixed << std::setprecision(4) << 100.0 * r.error << "% ("
          << r.misclassified << " misclassified / " << r.non_background << " non-BG voxels)";
  if (thick) summary << ", thickness error " << 100.0 * *thick << "%";

  if (a.out.empty()) {
    out << j.dump(1) << '\n';
    err << summary.str() << '\n';
  } else {
    StagedOutputs staged;
    auto f = staged.open(a.out);
    f << j.dump(1) << '\n';
    finish(f, a.out);
    staged.commit();
    out << summary.str() << '\n';
  }
}

// ------------------------------------------------------------ benchmark

struct BenchmarkArgs {
  int figure = 4;
  std::vector<std::string> values;
  std::vector<std::string> algos;
  std::vector<std::size_t> dims;
  std::vector<std::uint64_t> seeds;
  std::string config;
  std::optional<int> threads;
  bool no_timing = false;
  std::string out;
  CLI::App* sub = nullptr;
};

void add_benchmark(CLI::App& app, BenchmarkArgs& a) {
  auto* sub = app.add_subcommand("benchmark", "Run a figure sweep and write CSV");
  a.sub = sub;
  sub->add_option("--figure", a.figure, "figure id 2..8")->required()->check(CLI::Range(2, 8));
  sub->add_option("--values", a.values, "sweep values (fig 8: 0 = set A, 1 = set B)")
      ->delimiter(',')
      ->expected(0, 1 << 20);
  sub->add_option("--algos", a.algos, "e.g. icm1-de,sa-se")->delimiter(',');
  sub->add_option("--dims", a.dims, "template nx,ny,nz")->delimiter(',')->expected(3);
  sub->add_option("--seeds", a.seeds, "seeds, one run per seed")->delimiter(',');
  sub->add_option("--config", a.config, "run-config JSON applied to every cell");
  sub->add_option("--threads", a.threads, "cells run at once (default $MRFSEG_THREADS or 1)");
  sub->add_flag("--no-timing", a.no_timing, "write wall_ms as 0 for byte-stable output");
  sub->add_option("--out", a.out, "CSV to write")->required();
}

void run_benchmark(const BenchmarkArgs& a, std::ostream& out) {
  BenchmarkSpec spec = BenchmarkSpec::defaults_for(a.figure);
  if (a.sub->count("--values") > 0) {
    // "--values ''" is an empty sweep
    spec.values.clear();
    for (const auto& text : a.values) {
      if (text.empty()) continue;
      spec.values.push_back(parse_number(text, "--values"));
    }
  }
  if (!a.algos.empty()) {
    spec.algorithms.clear();
    for (const auto& name : a.algos) {
      const auto c = parse_algorithm_choice(name);
      if (!c) throw ConfigError("unknown algorithm '" + name + "' (expected e.g. icm1-de)");
      spec.algorithms.push_back(*c);
    }
  }
  if (!a.dims.empty()) spec.dims = parse_dims(a.dims);
  if (!a.seeds.empty()) spec.seeds = a.seeds;
  if (!a.config.empty()) spec.config = load_config(a.config, spec.config);
  spec.record_timing = !a.no_timing;
  const int threads = a.threads ? *a.threads : default_threads();
  if (threads < 1) throw ConfigError("--threads must be at least 1");
  // cells already run concurrently
  omp_set_num_threads(1);

  const auto rows = benchmark_sweep(spec, threads);
  StagedOutputs staged;
  auto f = staged.open(a.out);
  write_csv(f, rows);
  finish(f, a.out);
  staged.commit();
  out << rows.size() << " run(s) written to " << a.out << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("MAP segmentation of multi-echo MR volumes", "mrfseg");
  app.require_subcommand(1);
  TrainArgs train;
  SimulateArgs simulate;
  SegmentArgs seg;
  ScoreArgs score;
  BenchmarkArgs bench;
  add_train(app, train);
  add_simulate(app, simulate);
  add_segment(app, seg);
  add_score(app, score);
  add_benchmark(app, bench);

  std::vector<const char*> argv{"mrfseg"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (app.got_subcommand("train")) {
      run_train(train, out);
    } else if (app.got_subcommand("simulate")) {
      run_simulate(simulate, out);
    } else if (app.got_subcommand("segment")) {
      run_segment(seg, out);
    } else if (app.got_subcommand("score")) {
      run_score(score, out, err);
    } else {
      run_benchmark(bench, out);
    }
  } catch (const std::exception& e) {
    err << "mrfseg: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace mrfseg
