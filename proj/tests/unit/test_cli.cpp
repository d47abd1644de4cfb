#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mrfseg/benchmark.hpp"
#include "mrfseg/cli.hpp"
#include "mrfseg/mvol.hpp"

using namespace mrfseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
  return names;
}

}  // namespace

TEST_CASE("simulate, train, segment, score on a separable phantom") {
  TempDir t("mrfseg_cli_pipeline");
  Run r = cli({"simulate", "--template", "shell", "--dims", "48,48,4", "--noise", "0", "--smooth",
               "0", "--inhom", "0", "--seed", "3", "--out", t / "vol.mvol", "--truth-out",
               t / "truth.mvol", "--training-out", t / "train.tsv"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = cli({"train", "--training", t / "train.tsv", "--out", t / "model.json"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = cli({"segment", "--volume", t / "vol.mvol", "--model", t / "model.json", "--algo", "icm1",
           "--iters", "6", "--labels-out", t / "labels.mvol", "--bias-out", t / "bias.mvol",
           "--diag-out", t / "diag.json"});
  REQUIRE_MESSAGE(r.code == 0, r.err);

  const LabelMap labels = load_labels(t / "labels.mvol");
  for (Tissue x : labels.labels) CHECK(is_valid_label_code(static_cast<std::uint8_t>(x)));
  const BiasField bias = load_bias(t / "bias.mvol");
  CHECK(bias.dims.channels == 2);

  std::ifstream diag_in(t / "diag.json");
  const auto diag = nlohmann::json::parse(diag_in);
  CHECK(diag.at("algorithm") == "icm1");
  CHECK(diag.at("energy_trace").size() == 7);

  r = cli({"score", "--pred", t / "labels.mvol", "--truth", t / "truth.mvol"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto score = nlohmann::json::parse(r.out);
  CHECK(score.at("error").get<double>() == 0.0);
  CHECK(score.at("misclassified") == 0);

  r = cli({"score", "--pred", t / "truth.mvol", "--truth", t / "truth.mvol", "--out",
           t / "s.json"});
  REQUIRE(r.code == 0);
  std::ifstream s_in(t / "s.json");
  CHECK(nlohmann::json::parse(s_in).at("error").get<double>() == 0.0);

  for (const auto& name : listing(t.path)) CHECK(name.find(".partial") == std::string::npos);
}

TEST_CASE("cli failures leave no output files") {
  TempDir t("mrfseg_cli_fail");
  CHECK(cli({"segment", "--bogus"}).code != 0);
  CHECK(cli({}).code != 0);
  CHECK(cli({"frobnicate"}).code != 0);

  REQUIRE(cli({"simulate", "--template", "shell", "--dims", "16,16,2", "--noise", "10", "--out",
               t / "vol.mvol", "--truth-out", t / "truth.mvol", "--training-out",
               t / "train.tsv"})
              .code == 0);
  REQUIRE(cli({"train", "--training", t / "train.tsv", "--out", t / "model.json"}).code == 0);
  const auto before = listing(t.path);

  // mismatched dims in score
  REQUIRE(cli({"simulate", "--template", "shell", "--dims", "8,8,2", "--out", t / "small.mvol",
               "--truth-out", t / "small_truth.mvol"})
              .code == 0);
  Run r = cli({"score", "--pred", t / "small_truth.mvol", "--truth", t / "truth.mvol", "--out",
               t / "score.json"});
  CHECK(r.code != 0);
  CHECK(!fs::exists(t / "score.json"));

  // a label file is not a volume
  r = cli({"segment", "--volume", t / "truth.mvol", "--model", t / "model.json", "--labels-out",
           t / "l.mvol", "--bias-out", t / "b.mvol"});
  CHECK(r.code != 0);
  CHECK(r.err.find("mrfseg:") != std::string::npos);

  // truncated volume
  {
    std::ifstream in(t / "vol.mvol", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(t / "cut.mvol", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  }
  r = cli({"segment", "--volume", t / "cut.mvol", "--model", t / "model.json", "--labels-out",
           t / "l.mvol", "--bias-out", t / "b.mvol"});
  CHECK(r.code != 0);

  // single-echo model against a double-echo volume
  {
    std::ofstream(t / "se.tsv") << "WM\t820\nWM\t830\nGM\t1050\nGM\t1070\n";
  }
  REQUIRE(cli({"train", "--training", t / "se.tsv", "--out", t / "se.json"}).code == 0);
  r = cli({"segment", "--volume", t / "vol.mvol", "--model", t / "se.json", "--labels-out",
           t / "l.mvol", "--bias-out", t / "b.mvol"});
  CHECK(r.code != 0);

  CHECK(cli({"segment", "--volume", t / "vol.mvol", "--model", t / "model.json", "--algo",
             "gibbs", "--labels-out", t / "l.mvol", "--bias-out", t / "b.mvol"})
            .code != 0);
  CHECK(cli({"simulate", "--template", "shell", "--inhom", "1.5", "--out", t / "x.mvol"}).code !=
        0);

  for (const auto& name : listing(t.path)) {
    CHECK(name.find(".partial") == std::string::npos);
    CHECK(name != "l.mvol");
    CHECK(name != "b.mvol");
    CHECK(name != "x.mvol");
  }
  CHECK(before.size() + 5 == listing(t.path).size());
}

TEST_CASE("cli binary exit status") {
  TempDir t("mrfseg_cli_exec");
  const std::string exe = MRFSEG_CLI_PATH;
  CHECK(std::system((exe + " score --pred nowhere.mvol --truth nowhere.mvol 2>/dev/null").c_str()) !=
        0);
  CHECK(std::system((exe + " --help >/dev/null").c_str()) == 0);
}

TEST_CASE("benchmark with an empty sweep writes only the header") {
  TempDir t("mrfseg_cli_bench");
  Run r = cli({"benchmark", "--figure", "4", "--values", "", "--out", t / "b.csv"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::ifstream in(t / "b.csv");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  CHECK(all == "figure,param_name,param_value,algorithm,echo_mode,seed,error,iterations,wall_ms\n");
}

TEST_CASE("benchmark cells are isolated and deterministic") {
  BenchmarkSpec spec = BenchmarkSpec::defaults_for(5);
  spec.values = {0.0, 0.1};
  spec.algorithms = {{Algorithm::icm1, EchoMode::dual}, {Algorithm::as, EchoMode::single}};
  spec.dims = Dims{32, 32, 4, 1};
  spec.seeds = {1, 2};
  spec.record_timing = false;
  const auto rows = benchmark_sweep(spec, 2);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].param_value == 0.0);
  CHECK(rows[0].algorithm == "icm1");
  CHECK(rows[1].seed == 2);
  CHECK(rows[2].echo_mode == "SE");
  CHECK(rows[7].param_value == 0.1);

  const RunRecord solo = run_cell(spec, 0.1, spec.algorithms[1], 2);
  CHECK(solo.error == rows[7].error);

  std::ostringstream a, b;
  write_csv(a, rows);
  write_csv(b, benchmark_sweep(spec, 1));
  CHECK(a.str() == b.str());

  CHECK(mean_error(rows, 0.0, spec.algorithms[0]) ==
        doctest::Approx((rows[0].error + rows[1].error) / 2.0));

  BenchmarkSpec bad = spec;
  bad.values = {1.2};
  CHECK_THROWS_AS(benchmark_sweep(bad), ConfigError);
  CHECK_THROWS_AS(figure_setup(9), ConfigError);
  CHECK(parse_algorithm_choice("icm2-se") == AlgorithmChoice{Algorithm::icm2, EchoMode::single});
  CHECK(!parse_algorithm_choice("icm2"));
  CHECK(!parse_algorithm_choice("xx-de"));
}

TEST_CASE("figure 8 rows name the parameter set") {
  BenchmarkSpec spec = BenchmarkSpec::defaults_for(8);
  spec.dims = Dims{16, 16, 2, 1};
  spec.seeds = {1};
  spec.algorithms = {{Algorithm::icm1, EchoMode::single}};
  spec.record_timing = false;
  std::ostringstream out;
  write_csv(out, benchmark_sweep(spec));
  CHECK(out.str().find("\n8,set,A,icm1,SE,1,") != std::string::npos);
  CHECK(out.str().find("\n8,set,B,icm1,SE,1,") != std::string::npos);
}
