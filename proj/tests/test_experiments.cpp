#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "rlo/experiments.hpp"

using namespace rlo;
namespace fs = std::filesystem;

namespace {

const fs::path kDataDir = RLO_DATA_DIR;
const std::string kCli = RLO_CLI_PATH;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rlo_test_" + name);
  fs::remove_all(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("commands parse and print") {
  for (Command c : {Command::Regress, Command::TrainMlp, Command::Diagnose, Command::GanToy, Command::SpiralGen}) {
    CHECK(parse_command(to_string(c)) == c);
  }
  CHECK_THROWS_AS(parse_command("fit"), std::invalid_argument);
}

TEST_CASE("config defaults depend on the command") {
  ExperimentConfig reg;
  reg.command = Command::Regress;
  reg.data = "spectf-like";
  const ExperimentConfig r = reg.resolved();
  CHECK(r.losses == std::vector<std::string>{"logistic", "rlo"});
  CHECK(r.k_grid.size() == 18);
  CHECK(r.k_grid.front() == 3.0);
  CHECK(r.k_grid.back() == 20.0);
  CHECK(r.lambdas == std::vector<double>{0.0, 1e-3});
  CHECK(r.standardize == std::optional<bool>(true));

  ExperimentConfig mlp;
  mlp.command = Command::TrainMlp;
  const ExperimentConfig m = mlp.resolved();
  CHECK(m.losses == std::vector<std::string>{"ce", "rooted_ce"});
  CHECK(m.k_grid == std::vector<double>{3.0});
  CHECK(m.standardize == std::optional<bool>(false));

  CHECK(mlp_iteration_budget(2) == 1000);
  CHECK(mlp_iteration_budget(3) == 100);
  CHECK(mlp_iteration_budget(4) == 50);
  CHECK(regress_iteration_budget("SPECTF") == 1000);
  CHECK(regress_iteration_budget("spectf-like") == 1000);
  CHECK(regress_iteration_budget("wine") == 200);

  ExperimentConfig bad = reg;
  bad.k_grid = {0.5};
  CHECK_THROWS_AS(bad.resolved(), std::invalid_argument);
  bad = reg;
  bad.data = "/no/such/file.csv";
  CHECK_THROWS_AS(bad.resolved(), std::invalid_argument);
  bad = reg;
  bad.losses = {"ce"};
  CHECK_THROWS_AS(bad.resolved(), std::invalid_argument);
}

TEST_CASE("config json round trip") {
  ExperimentConfig c;
  c.command = Command::GanToy;
  c.k_grid = {2.5, 4.0};
  c.m = 1.5;
  c.seeds = {3, 7};
  c.target_mean = {1.0, -1.0};
  c.mixture_mean = {-1.0, 1.0};
  c.standardize = false;
  c.iterations = 17;
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.m == std::optional<double>(1.5));
  CHECK(back.iterations == std::optional<std::size_t>(17));
  CHECK(back.command == Command::GanToy);
}

TEST_CASE("regress grid is complete") {
  ExperimentConfig c;
  c.command = Command::Regress;
  c.data = (kDataDir / "ionosphere.csv").string();
  c.k_grid = {3, 4, 5};
  c.lambdas = {0.0};
  c.iterations = 20;
  c.threads = 2;
  const ExperimentOutput out = run_regress(c);
  CHECK(out.results.rows.size() == (1 + 3) * 5);
  std::set<std::string> cells;
  for (std::size_t i = 0; i < out.results.rows.size(); ++i) {
    const auto& loss = std::get<std::string>(out.results.at(i, "loss"));
    const std::string k = loss == "rlo" ? std::to_string(out.results.number(i, "k")) : "-";
    cells.insert(loss + k + std::to_string(std::get<std::int64_t>(out.results.at(i, "fold"))));
    CHECK(out.results.number(i, "test_acc") >= 0.0);
    CHECK(out.results.number(i, "test_acc") <= 1.0);
  }
  CHECK(cells.size() == 20);
  CHECK(out.summary.rows.size() == 4);
  CHECK_FALSE(out.diverged);

  // thread count does not change results
  c.threads = 1;
  std::ostringstream a;
  std::ostringstream b;
  out.results.write_csv(a);
  run_regress(c).results.write_csv(b);
  CHECK(a.str() == b.str());
}

TEST_CASE("multiclass regress averages one-vs-all tasks") {
  ExperimentConfig c;
  c.command = Command::Regress;
  c.data = (kDataDir / "wine.csv").string();
  c.label_column = 0;
  c.k_grid = {3};
  c.lambdas = {0.0};
  c.iterations = 5;
  c.folds = 3;
  const ExperimentOutput out = run_regress(c);
  CHECK(out.results.rows.size() == 2 * 3);
  // accuracies are averages over three binary tasks, so multiples of 1/(3 n_val)
  CHECK(out.results.number(0, "test_acc") > 0.5);
}

TEST_CASE("diagnose witnesses at w = 0") {
  ExperimentConfig c;
  c.command = Command::Diagnose;
  c.data = "spectf-like";
  c.k_grid = {2, 3};
  c.bias = false;
  const ExperimentOutput out = run_diagnose(c);
  bool saw2 = false;
  bool saw3 = false;
  for (std::size_t i = 0; i < out.results.rows.size(); ++i) {
    if (std::get<std::string>(out.results.at(i, "loss")) != "rlo") continue;
    if (out.results.number(i, "k") == 2.0) {
      saw2 = true;
      CHECK(out.results.number(i, "fraction_ratio_above_one") == 1.0);
      CHECK(out.results.number(i, "fraction_sufficient") == 1.0);
    } else {
      saw3 = true;
      CHECK(out.results.number(i, "fraction_ratio_above_one") == 0.0);
    }
  }
  CHECK((saw2 && saw3));

  ExperimentConfig multi = c;
  multi.data = (kDataDir / "wine.csv").string();
  multi.label_column = 0;
  CHECK_THROWS_AS(run_diagnose(multi), std::invalid_argument);
  multi.one_vs_all = true;
  CHECK(run_diagnose(multi).results.rows.size() == 3 * (1 + 2));
}

TEST_CASE("network runs") {
  ExperimentConfig c;
  c.command = Command::TrainMlp;
  c.samples = 200;
  c.hidden = 8;
  c.iterations = 0;
  c.grid_resolution = 4;
  const ExperimentOutput none = run_train_mlp(c);
  REQUIRE(none.results.rows.size() == 2);
  // no training: both heads share the initial network
  CHECK(none.results.number(0, "test_acc") == none.results.number(1, "test_acc"));
  std::size_t grids = 0;
  for (const auto& f : none.files) grids += f.name.rfind("grid_", 0) == 0 ? 1 : 0;
  CHECK(grids == 2);

  c.iterations = 30;
  c.depths = {2, 3};
  const ExperimentOutput out = run_train_mlp(c);
  CHECK(out.results.rows.size() == 4);
  CHECK(out.summary.rows.size() == 4);
}

TEST_CASE("gan and spiral runs") {
  ExperimentConfig g;
  g.command = Command::GanToy;
  g.rounds = 50;
  g.seeds = {1, 2};
  const ExperimentOutput go = run_gan_toy(g);
  CHECK(go.results.rows.size() == 2);
  CHECK(go.summary.rows.size() == 1);

  ExperimentConfig s;
  s.command = Command::SpiralGen;
  s.samples = 40;
  const fs::path dir = scratch("spiral");
  const ExperimentOutput so = run_spiral_gen(s);
  emit_results(so, dir);
  CHECK(fs::exists(dir / "spiral_s1.csv"));
  CHECK(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(cli("--version") == 0);
  CHECK(cli("regress --data spectf-like --k 0.5 --out " + dir.string()) == 2);
  CHECK(cli("regress --data spectf-like --bogus 1") == 2);
  CHECK(cli("regress --data /no/such.csv --out " + dir.string()) == 2);
  CHECK(cli("") == 2);
  CHECK(cli("spiral-gen --samples 21 --out " + dir.string()) == 2);
  CHECK(cli("spiral-gen --samples 20 --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "spiral_s1.csv"));

  // a step size this large overflows the objective
  CHECK(cli("regress --data spectf-like --k 3 --lambda 0 --lr 1e300 --iters 5 --no-bias --standardize no --folds 2 --out " +
            (dir / "div").string()) == 3);
  CHECK(fs::exists(dir / "div" / "results.csv"));
  fs::remove_all(dir);
}

TEST_CASE("replay reproduces results byte for byte") {
  const fs::path a = scratch("replay_a");
  const fs::path b = scratch("replay_b");
  REQUIRE(cli("regress --data " + (kDataDir / "ionosphere.csv").string() +
              " --k 3 --k 6 --iters 30 --threads 1 --out " + a.string()) == 0);
  REQUIRE(cli("replay --manifest " + (a / "manifest.json").string() + " --threads 3 --out " + b.string()) == 0);
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  CHECK(slurp(a / "summary.csv") == slurp(b / "summary.csv"));
  CHECK_FALSE(slurp(a / "results.csv").empty());

  const ExperimentConfig cfg = config_from_manifest(a / "manifest.json");
  CHECK(cfg.k_grid == std::vector<double>{3, 6});
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("ini config files") {
  const fs::path dir = scratch("ini");
  fs::create_directories(dir);
  {
    std::ofstream ini(dir / "run.ini");
    ini << "[spiral-gen]\nsamples = 30\nnoise = 0.2\n";
  }
  REQUIRE(cli("--config " + (dir / "run.ini").string() + " spiral-gen --out " + (dir / "out").string()) == 0);
  const ExperimentConfig cfg = config_from_manifest(dir / "out" / "manifest.json");
  CHECK(cfg.samples == 30);
  CHECK(cfg.noise == 0.2);
  fs::remove_all(dir);
}
