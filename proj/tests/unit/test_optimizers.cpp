#include <doctest.h>

#include <omp.h>

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "mrfseg/energy.hpp"
#include "mrfseg/errors.hpp"
#include "mrfseg/metrics.hpp"
#include "mrfseg/model_io.hpp"
#include "mrfseg/optimizers.hpp"
#include "mrfseg/phantom.hpp"
#include "oracles.hpp"

using namespace mrfseg;

namespace {

// chi-square upper critical values at p = 0.01
double chi2_crit_01(int dof) {
  static const std::array<double, 6> v{6.635, 9.210, 11.345, 13.277, 15.086, 16.812};
  return v.at(static_cast<std::size_t>(dof - 1));
}

TrainingSet mean_training(const TissueMeans& means, std::initializer_list<Tissue> tissues,
                          double spread, std::uint64_t seed) {
  TrainingSet t;
  t.channels = means.channels;
  CounterRng r(seed, 0);
  for (Tissue tis : tissues) {
    for (int k = 0; k < 200; ++k) {
      EchoVector p{};
      for (int c = 0; c < t.channels; ++c) p[c] = means.of(tis)[c] + spread * r.normal();
      t.of(tis).push_back(p);
    }
  }
  return t;
}

struct Phantom {
  Volume volume;
  LabelMap truth;
  TissueModels models;
};

Phantom small_phantom(double noise, double inhom, double smooth, std::uint64_t seed,
                      Dims dims = Dims{32, 32, 4, 1}) {
  PhantomSpec ps;
  ps.labels = shell_template(dims, false);
  ps.noise = noise;
  ps.inhomogeneity = inhom;
  ps.smoothing = smooth;
  ps.seed = seed;
  Volume v = synthesize(ps);
  PhantomSpec train = ps;
  train.inhomogeneity = 0.0;
  train.seed = seed + 1000;
  const TrainingSet t = sample_training(synthesize(train), ps.labels, 300, seed);
  return Phantom{std::move(v), ps.labels, make_tissue_models(fit_model(t), true)};
}

}  // namespace

TEST_CASE("algorithm names") {
  for (Algorithm a : {Algorithm::sa, Algorithm::icm1, Algorithm::icm2, Algorithm::as}) {
    CHECK(parse_algorithm(algorithm_name(a)) == a);
  }
  CHECK_FALSE(parse_algorithm("icm3").has_value());
}

TEST_CASE("annealing schedule") {
  const AnnealSchedule s{1.0, 100};
  CHECK(s.temperature(1) == doctest::Approx(1.0 / std::log(2.0)));
  CHECK(s.temperature(1) == doctest::Approx(1.4427).epsilon(1e-4));
  CHECK(s.temperature(9) == doctest::Approx(0.4343).epsilon(1e-4));
  CHECK(AnnealSchedule{3.0, 10}.temperature(9) == doctest::Approx(3.0 / std::log(10.0)));
  CHECK_THROWS_AS((AnnealSchedule{0.0, 10}.validate()), ConfigError);
}

TEST_CASE("metropolis acceptance") {
  CHECK(metropolis_accept(0.0, 0.999999));
  CHECK(metropolis_accept(3.0, 0.5));
  CHECK_FALSE(metropolis_accept(-1e300, 0.0));
  CHECK_FALSE(metropolis_accept(-std::numeric_limits<double>::infinity(), 0.0));

  CounterRng r(21, 0);
  int accepted = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) accepted += metropolis_accept(-std::log(2.0), r) ? 1 : 0;
  CHECK(static_cast<double>(accepted) / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("initialization takes the per-voxel argmax") {
  // noiseless mean phantom with all four brain tissues and SB
  PhantomSpec ps;
  ps.labels = shell_template(Dims{24, 24, 3, 1}, true);
  const Volume v = synthesize(ps);
  const TrainingSet t =
      mean_training(ps.means, {Tissue::bg, Tissue::wm, Tissue::gm, Tissue::csf, Tissue::sb}, 20.0, 1);
  const FittedModel m = fit_model(t);
  const OptState s = initialize(v, ParzenLikelihood(m.parzen));
  CHECK(s.labels == ps.labels);
  for (double b : s.bias.values) CHECK(b == 0.0);

  SUBCASE("far-out intensity is unclassified with a threshold") {
    Volume w = v;
    w.at(5, 0) = 1e5;
    w.at(5, 1) = 1e5;
    const ParzenLikelihood like(m.parzen);
    const OptState u = initialize(w, like, like.unclassified_log_density());
    CHECK(u.labels[5] == Tissue::unclassified);
    CHECK(u.labels[6] == ps.labels[6]);
    const OptState no = initialize(w, like);
    CHECK(no.labels[5] != Tissue::unclassified);
  }
}

TEST_CASE("initialization breaks ties toward the lower code") {
  TrainingSet t;
  t.channels = 1;
  t.of(Tissue::gm).push_back({100.0, 0.0});
  t.of(Tissue::wm).push_back({100.0, 0.0});
  const ParzenModel m(t, 5.0);
  Volume v(Dims{2, 1, 1, 1}, 100.0);
  const OptState s = initialize(v, ParzenLikelihood(m));
  CHECK(s.labels[0] == Tissue::wm);
  CHECK(s.labels[1] == Tissue::wm);
}

TEST_CASE("sa sweep freezes at a tiny temperature") {
  const auto p = oracle::make_tiny_problem(3, Dims{3, 2, 1, 1});
  RunParams params = oracle::frozen_params(p, Algorithm::sa);
  const auto map = oracle::brute_force_map(p);
  OptState s;
  s.labels = map.labels;
  s.bias = BiasField(p.volume.dims);
  s.seed = 9;
  std::size_t accepted = 0;
  for (int k = 0; k < 50; ++k) accepted += sa_sweep(s, Temperature(1e-9), p.volume, *p.models, params).label_accepts;
  CHECK(accepted == 0);
  CHECK(s.labels == map.labels);
}

TEST_CASE("sa on one voxel samples the two-state gibbs distribution") {
  TrainingSet t;
  t.channels = 1;
  t.of(Tissue::wm).push_back({100.0, 0.0});
  t.of(Tissue::gm).push_back({104.0, 0.0});
  const ParzenModel pm(t, 4.0);
  const TissueModels models{pm, std::nullopt, std::nullopt};
  Volume v(Dims{1, 1, 1, 1}, 101.0);
  RunParams params;
  params.algorithm = Algorithm::sa;
  params.freeze_bias = true;

  // exact: p(WM)/p(GM) = exp(l_wm - l_gm) at T = 1
  const double lw = oracle::kernel_log_density(101.0, {100.0}, 4.0);
  const double lg = oracle::kernel_log_density(101.0, {104.0}, 4.0);
  const double p_wm = 1.0 / (1.0 + std::exp(lg - lw));

  OptState s = initialize(v, ParzenLikelihood(pm));
  s.seed = 77;
  const int n = 100000;
  int wm = 0;
  for (int k = 0; k < n; ++k) {
    sa_sweep(s, Temperature(1.0), v, models, params);
    wm += s.labels[0] == Tissue::wm ? 1 : 0;
  }
  CHECK(std::abs(static_cast<double>(wm) / n - p_wm) < 0.01);
}

TEST_CASE("sa label moves satisfy detailed balance") {
  // one voxel, three tissues: flow i->j must equal flow j->i
  TrainingSet t;
  t.channels = 1;
  t.of(Tissue::wm).push_back({100.0, 0.0});
  t.of(Tissue::gm).push_back({103.0, 0.0});
  t.of(Tissue::csf).push_back({107.0, 0.0});
  const ParzenModel pm(t, 4.0);
  const TissueModels models{pm, std::nullopt, std::nullopt};
  Volume v(Dims{1, 1, 1, 1}, 102.0);
  RunParams params;
  params.algorithm = Algorithm::sa;
  params.freeze_bias = true;

  OptState s = initialize(v, ParzenLikelihood(pm));
  s.seed = 5;
  std::map<std::pair<Tissue, Tissue>, int> flow;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const Tissue before = s.labels[0];
    sa_sweep(s, Temperature(1.0), v, models, params);
    if (s.labels[0] != before) ++flow[{before, s.labels[0]}];
  }
  for (auto [a, b] : {std::pair{Tissue::wm, Tissue::gm}, std::pair{Tissue::wm, Tissue::csf},
                      std::pair{Tissue::gm, Tissue::csf}}) {
    const double f = flow[{a, b}];
    const double g = flow[{b, a}];
    // both are counts of the same expected size; the difference is within 4 sd
    CHECK(std::abs(f - g) < 4.0 * std::sqrt(f + g) + 1.0);
  }
}

TEST_CASE("sa on two voxels matches the joint gibbs distribution") {
  const auto p = oracle::make_tiny_problem(17, Dims{2, 1, 1, 1});
  RunParams params = oracle::frozen_params(p, Algorithm::sa);
  std::array<double, 4> weight{};
  for (int m = 0; m < 4; ++m) {
    double e = 0.0;
    for (int i = 0; i < 2; ++i) {
      const bool gm = (m >> i) & 1;
      e += oracle::kernel_log_density(p.volume.data[i], gm ? p.gm_points : p.wm_points, p.sigma);
    }
    if (((m & 1) != 0) != ((m & 2) != 0)) e -= p.epsilon;
    weight[m] = std::exp(e);
  }
  double z = 0.0;
  for (double w : weight) z += w;

  OptState s = initialize(p.volume, p.models->parzen_likelihood());
  s.seed = 123;
  std::array<double, 4> count{};
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    sa_sweep(s, Temperature(1.0), p.volume, *p.models, params);
    const int m = (s.labels[0] == Tissue::gm ? 1 : 0) + (s.labels[1] == Tissue::gm ? 2 : 0);
    count[m] += 1.0;
  }
  // successive sweeps are correlated; thin the statistic by an
  // effective-sample factor of 4
  double chi2 = 0.0;
  for (int m = 0; m < 4; ++m) {
    const double expected = n * weight[m] / z;
    chi2 += (count[m] - expected) * (count[m] - expected) / expected;
  }
  CHECK(chi2 / 4.0 < chi2_crit_01(3));
}

TEST_CASE("sa finds the brute-force map on a 2x2x1 problem") {
  const auto p = oracle::make_tiny_problem(5, Dims{2, 2, 1, 1});
  const auto map = oracle::brute_force_map(p);
  RunParams params = oracle::frozen_params(p, Algorithm::sa);
  params.schedule.sweeps = 1000;
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    params.seed = seed;
    hits += segment(p.volume, *p.models, params).labels == map.labels ? 1 : 0;
  }
  CHECK(hits >= 95);
}

TEST_CASE("sa reports the best sweep") {
  const auto p = oracle::make_tiny_problem(8, Dims{3, 2, 1, 1});
  RunParams params = oracle::frozen_params(p, Algorithm::sa);
  params.schedule.sweeps = 50;
  const SaResult r = sa_run(p.volume, *p.models, params);
  REQUIRE(r.trace.size() == 50);
  const ParzenLikelihood like = p.models->parzen_likelihood();
  const OptState init = initialize(p.volume, like);
  const double start = log_posterior(init.labels, init.bias, p.volume, like, params.potentials,
                                     params.prior, Temperature(1.0));
  const double best = std::max(start, *std::max_element(r.trace.begin(), r.trace.end()));
  const double reported = r.best_sweep == 0 ? start : r.trace[r.best_sweep - 1];
  CHECK(reported == best);
  CHECK(log_posterior(r.labels, r.bias, p.volume, like, params.potentials, params.prior,
                      Temperature(1.0)) == best);

  params.keep_best = false;
  const SaResult last = sa_run(p.volume, *p.models, params);
  CHECK(last.best_sweep == 50);
}

TEST_CASE("icm1 bias solve") {
  GaussianTissueModel g(1, 1.0);
  g.set(Tissue::wm, {6.0, 0.0}, EchoMatrix::scaled_identity(1, 0.01));
  const Dims d{3, 3, 3, 1};
  const std::size_t c = linear_index({1, 1, 1}, d);
  const BiasField zero(d);
  const double r = 0.134;
  const std::vector<double> z{std::exp(6.0 - r)};

  const EchoVector y = solve_bias_at(zero, c, Tissue::wm, z, g, BiasPrior{100.0, 20.0});
  CHECK(y[0] == doctest::Approx(r / 13.4).epsilon(1e-12));

  const EchoVector free = solve_bias_at(zero, c, Tissue::wm, z, g, BiasPrior{0.0, 0.0});
  CHECK(free[0] == doctest::Approx(r).epsilon(1e-12));

  // corner voxel has 3 neighbors: 1 + (600 + 40) 0.01 = 7.4
  const EchoVector corner = solve_bias_at(zero, 0, Tissue::wm, z, g, BiasPrior{100.0, 20.0});
  CHECK(corner[0] == doctest::Approx(r / 7.4).epsilon(1e-12));
}

TEST_CASE("icm1 bias solve is a stationary point") {
  GaussianTissueModel g(2, 1.0);
  EchoMatrix cov;
  cov(0, 0) = 0.004;
  cov(0, 1) = cov(1, 0) = 0.0015;
  cov(1, 1) = 0.009;
  g.set(Tissue::gm, {6.9, 6.4}, cov);
  const Dims d{3, 3, 2, 2};
  BiasField b(d);
  CounterRng r(4, 0);
  for (auto& v : b.values) v = r.uniform(-0.1, 0.1);
  const BiasPrior prior{100.0, 20.0};
  GaussianLikelihood like(g);

  for (std::size_t i : {0ul, 4ul, 13ul}) {
    const std::vector<double> z{std::exp(6.8), std::exp(6.55)};
    const EchoVector y = solve_bias_at(b, i, Tissue::gm, z, g, prior);
    auto f = [&](double y0, double y1) {
      const std::vector<double> cand{y0, y1};
      return like.log_density(z, Tissue::gm, cand) - local_bias_energy(b, i, cand, prior);
    };
    const double h = 1e-5;
    const double g0 = (f(y[0] + h, y[1]) - f(y[0] - h, y[1])) / (2 * h);
    const double g1 = (f(y[0], y[1] + h) - f(y[0], y[1] - h)) / (2 * h);
    // gradient scale: curvature times offset from the solution
    const double scale = std::abs(f(y[0] + 0.01, y[1]) - f(y[0], y[1])) / 0.01 + 1.0;
    CHECK(std::abs(g0) / scale < 1e-6);
    CHECK(std::abs(g1) / scale < 1e-6);
    // and a maximum
    CHECK(f(y[0], y[1]) > f(y[0] + 1e-3, y[1] - 1e-3));
  }
}

TEST_CASE("icm1 never lowers the gaussian posterior in consistent mode") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Phantom ph = small_phantom(60.0, 0.1, 0.1, seed, Dims{6, 5, 3, 1});
    RunParams params;
    params.algorithm = Algorithm::icm1;
    params.consistent_gaussian = true;
    const GaussianLikelihood like(*ph.models.gaussian);
    OptState s = initialize(ph.volume, like);
    double prev = log_posterior(s.labels, s.bias, ph.volume, like, params.potentials, params.prior,
                                Temperature(1.0));
    for (int it = 0; it < 3; ++it) {
      icm1_iteration(s, ph.volume, ph.models, params);
      const double now = log_posterior(s.labels, s.bias, ph.volume, like, params.potentials,
                                       params.prior, Temperature(1.0));
      CHECK(now >= prev - 1e-9 * std::abs(prev));
      prev = now;
    }
  }
}

TEST_CASE("binomial smoothing preserves constants") {
  const Dims d{5, 4, 3, 1};
  std::vector<double> f(d.voxel_count() * 2);
  for (std::size_t i = 0; i < d.voxel_count(); ++i) {
    f[2 * i] = 2.5;
    f[2 * i + 1] = -1.0;
  }
  smooth_binomial(f, d, 2, 16);
  for (std::size_t i = 0; i < d.voxel_count(); ++i) {
    CHECK(f[2 * i] == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(f[2 * i + 1] == doctest::Approx(-1.0).epsilon(1e-14));
  }

  // one pass along x on an impulse
  const Dims line{5, 1, 1, 1};
  std::vector<double> g{0, 0, 4, 0, 0};
  smooth_binomial(g, line, 1, 1);
  CHECK(g == std::vector<double>{0, 1, 2, 1, 0});
  std::vector<double> edge{3, 0, 0, 0, 0};
  smooth_binomial(edge, line, 1, 1);
  CHECK(edge[0] == doctest::Approx(2.0));
  CHECK(edge[1] == doctest::Approx(0.75));
}

TEST_CASE("icm2 recovers a constant log offset") {
  TrainingSet t;
  t.channels = 2;
  CounterRng r(1, 0);
  for (int k = 0; k < 100; ++k) t.of(Tissue::wm).push_back({800 + 30 * r.normal(), 420 + 30 * r.normal()});
  const TissueModels models = make_tissue_models(fit_model(t), false);
  const auto& mean = models.gaussian->tissue(Tissue::wm).mean;
  RunParams params;
  params.algorithm = Algorithm::icm2;
  params.iterations = 1;

  const Dims d{6, 5, 4, 2};
  Volume exact(d);
  for (std::size_t i = 0; i < d.voxel_count(); ++i) {
    exact.at(i, 0) = std::exp(mean[0]);
    exact.at(i, 1) = std::exp(mean[1]);
  }
  const SegmentResult zero = segment(exact, models, params);
  for (double b : zero.bias.values) CHECK(std::abs(b) < 1e-12);

  const double c = 0.07;
  Volume shifted = exact;
  for (auto& v : shifted.data) v *= std::exp(-c);
  const SegmentResult res = segment(shifted, models, params);
  for (double b : res.bias.values) CHECK(b == doctest::Approx(c).epsilon(1e-10));
  CHECK(res.diagnostics.singular_voxels == 0);
}

TEST_CASE("as baseline equals icm2 without label potentials") {
  Phantom ph = small_phantom(50.0, 0.1, 0.2, 3);
  RunParams as;
  as.algorithm = Algorithm::as;
  RunParams icm2 = as;
  icm2.algorithm = Algorithm::icm2;
  icm2.potentials = PotentialTable::potts(0.0, 0.0);
  const SegmentResult a = segment(ph.volume, ph.models, as);
  const SegmentResult b = segment(ph.volume, ph.models, icm2);
  CHECK(a.labels == b.labels);
  CHECK(a.bias.values == b.bias.values);

  // and potentials do change the icm2 answer on a noisy phantom
  RunParams with = icm2;
  with.potentials = PotentialTable::potts(kDefaultEpsilon, kDefaultSbBrainPotential);
  CHECK_FALSE(segment(ph.volume, ph.models, with).labels == a.labels);
}

TEST_CASE("zero iterations return the initialization") {
  Phantom ph = small_phantom(50.0, 0.0, 0.0, 4);
  for (Algorithm alg : {Algorithm::icm1, Algorithm::icm2, Algorithm::as, Algorithm::sa}) {
    RunParams p;
    p.algorithm = alg;
    p.iterations = 0;
    p.schedule.sweeps = 0;
    const SegmentResult r = segment(ph.volume, ph.models, p);
    const OptState init = initialize(ph.volume, ph.models.parzen_likelihood());
    CHECK(r.labels == init.labels);
    CHECK(r.bias.values == init.bias.values);
  }
}

TEST_CASE("noiseless phantom is segmented exactly") {
  Phantom ph = small_phantom(0.0, 0.0, 0.0, 5);
  for (Algorithm alg : {Algorithm::icm1, Algorithm::icm2, Algorithm::as}) {
    RunParams p;
    p.algorithm = alg;
    CHECK(error_rate(segment(ph.volume, ph.models, p).labels, ph.truth).error == 0.0);
  }
  RunParams sa;
  sa.algorithm = Algorithm::sa;
  sa.schedule.sweeps = 30;
  CHECK(error_rate(segment(ph.volume, ph.models, sa).labels, ph.truth).error == 0.0);
}

TEST_CASE("runs are bit-identical and independent of the thread count") {
  Phantom ph = small_phantom(50.0, 0.1, 0.2, 6);
  for (Algorithm alg : {Algorithm::icm1, Algorithm::icm2, Algorithm::sa}) {
    RunParams p;
    p.algorithm = alg;
    p.schedule.sweeps = 20;
    p.seed = 42;
    const SegmentResult a = segment(ph.volume, ph.models, p);
    const SegmentResult b = segment(ph.volume, ph.models, p);
    CHECK(a.labels == b.labels);
    CHECK(a.bias.values == b.bias.values);
    CHECK(a.diagnostics.energy_trace == b.diagnostics.energy_trace);

    p.parallel = true;
    omp_set_num_threads(1);
    const SegmentResult one = segment(ph.volume, ph.models, p);
    omp_set_num_threads(4);
    const SegmentResult four = segment(ph.volume, ph.models, p);
    omp_set_num_threads(1);
    CHECK(one.labels == four.labels);
    CHECK(one.bias.values == four.bias.values);
  }
}

TEST_CASE("segment validates its inputs") {
  Phantom ph = small_phantom(50.0, 0.0, 0.0, 7);
  const Volume single = ph.volume.channel(0);
  RunParams p;
  CHECK_THROWS_AS(segment(single, ph.models, p), ConfigError);
  TissueModels no_gauss{ph.models.parzen, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(segment(ph.volume, no_gauss, p), ConfigError);
  p.algorithm = Algorithm::sa;
  p.bias_step = 0.0;
  CHECK_THROWS_AS(segment(ph.volume, ph.models, p), ConfigError);
}
