#include "rlo/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "rlo/calculus.hpp"
#include "rlo/losses.hpp"
#include "rlo/models.hpp"
#include "rlo/optim.hpp"
#include "rlo/rng.hpp"

namespace rlo {

using nlohmann::json;

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Regress: return "regress";
    case Command::TrainMlp: return "train-mlp";
    case Command::Diagnose: return "diagnose";
    case Command::GanToy: return "gan-toy";
    case Command::SpiralGen: return "spiral-gen";
  }
  return "unknown";
}

Command parse_command(std::string_view name) {
  for (Command c : {Command::Regress, Command::TrainMlp, Command::Diagnose, Command::GanToy,
                    Command::SpiralGen}) {
    if (to_string(c) == name) return c;
  }
  throw std::invalid_argument(fmt::format("unknown command '{}'", name));
}

std::vector<double> default_k_grid() {
  std::vector<double> ks;
  for (int k = 3; k <= 20; ++k) ks.push_back(k);
  return ks;
}

std::size_t mlp_iteration_budget(std::size_t depth) {
  switch (depth) {
    case 2: return 1000;
    case 3: return 100;
    case 4: return 50;
    default: return 1000;
  }
}

std::size_t regress_iteration_budget(const std::string& dataset_name) {
  std::string lower = dataset_name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  const bool spectf = lower.find("spectf") != std::string::npos || lower.find("heart") != std::string::npos;
  return spectf ? 1000 : 200;
}

namespace {

bool is_builtin(const std::string& source) {
  return source == "spiral" || source == "spectf-like" || source == "madelon-like";
}

}  // namespace

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  const bool mlp = command == Command::TrainMlp;
  if (c.losses.empty()) {
    c.losses = mlp ? std::vector<std::string>{"ce", "rooted_ce"} : std::vector<std::string>{"logistic", "rlo"};
  }
  for (auto& name : c.losses) {
    const LossFamily f = parse_loss_family(name);
    name = std::string(to_string(f));
    const bool binary = f == LossFamily::Logistic || f == LossFamily::RLO;
    if ((command == Command::Regress || command == Command::Diagnose) && !binary) {
      throw std::invalid_argument(fmt::format("{} needs logistic or rlo losses, got '{}'", to_string(command), name));
    }
    if (mlp && binary) {
      throw std::invalid_argument(fmt::format("train-mlp needs ce, rooted_ce or focal heads, got '{}'", name));
    }
  }
  if (c.k_grid.empty()) {
    if (mlp) {
      c.k_grid = {3.0};
    } else if (command == Command::GanToy) {
      c.k_grid = {4.0};
    } else {
      c.k_grid = default_k_grid();
    }
  }
  for (double k : c.k_grid) {
    if (!(k > 1.0) || !std::isfinite(k)) throw std::invalid_argument(fmt::format("k must be > 1, got {}", k));
  }
  if (c.m && !(*c.m > 0.0)) throw std::invalid_argument("m must be positive");
  if (!(c.gamma >= 0.0)) throw std::invalid_argument("gamma must be nonnegative");
  if (c.lambdas.empty()) {
    c.lambdas = command == Command::Regress ? std::vector<double>{0.0, kDefaultL2Lambda} : std::vector<double>{0.0};
  }
  for (double l : c.lambdas) {
    if (!(l >= 0.0)) throw std::invalid_argument(fmt::format("lambda must be >= 0, got {}", l));
  }
  if (!c.standardize) c.standardize = !(mlp && c.data == "spiral");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (c.iterations && *c.iterations == 0 && !mlp) {
    throw std::invalid_argument("iterations must be at least 1");
  }
  if (c.record_every < 1) throw std::invalid_argument("record_every must be at least 1");
  if (c.folds < 2) throw std::invalid_argument("need at least 2 folds");
  if (c.seeds.empty()) throw std::invalid_argument("need at least one seed");
  if (c.depths.empty()) throw std::invalid_argument("need at least one depth");
  for (std::size_t d : c.depths) {
    if (d < 1) throw std::invalid_argument("network depth must be at least 1");
  }
  if (c.hidden < 1) throw std::invalid_argument("hidden width must be positive");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
  if (c.header != "auto" && c.header != "yes" && c.header != "no") {
    throw std::invalid_argument("header must be auto, yes or no");
  }
  if (!is_builtin(c.data) && !std::filesystem::exists(c.data)) {
    throw std::invalid_argument(fmt::format("data file '{}' does not exist", c.data));
  }
  if (!c.weights.empty() && !std::filesystem::exists(c.weights)) {
    throw std::invalid_argument(fmt::format("weights file '{}' does not exist", c.weights));
  }
  if (c.target_mean.empty() || c.target_mean.size() > 2) {
    throw std::invalid_argument("GAN target mean needs 1 or 2 coordinates");
  }
  if (!c.mixture_mean.empty() && c.mixture_mean.size() != c.target_mean.size()) {
    throw std::invalid_argument("mixture mean must match the target dimension");
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["command"] = std::string(to_string(command));
  j["data"] = data;
  j["label_column"] = label_column;
  j["header"] = header;
  j["standardize"] = standardize ? json(*standardize) : json(nullptr);
  j["bias"] = bias;
  j["regularize_bias"] = regularize_bias;
  j["one_vs_all"] = one_vs_all;
  j["losses"] = losses;
  j["k_grid"] = k_grid;
  j["m"] = m ? json(*m) : json(nullptr);
  j["gamma"] = gamma;
  j["lambdas"] = lambdas;
  j["learning_rate"] = learning_rate;
  j["iterations"] = iterations ? json(*iterations) : json(nullptr);
  j["batch_size"] = batch_size;
  j["record_every"] = record_every;
  j["threshold"] = threshold;
  j["folds"] = folds;
  j["seeds"] = seeds;
  j["threads"] = threads;
  j["depths"] = depths;
  j["hidden"] = hidden;
  j["samples"] = samples;
  j["noise"] = noise;
  j["train_fraction"] = train_fraction;
  j["grid_resolution"] = grid_resolution;
  j["weights"] = weights;
  j["rounds"] = rounds;
  j["eta_g"] = eta_g;
  j["eta_d"] = eta_d;
  j["gan_batch"] = gan_batch;
  j["target_mean"] = target_mean;
  j["target_std"] = target_std;
  j["mixture_mean"] = mixture_mean;
  j["mixture_std"] = mixture_std;
  j["mixture_weight"] = mixture_weight;
  j["disc_hidden"] = disc_hidden;
  j["out"] = out;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.command = parse_command(j.at("command").get<std::string>());
  c.data = j.at("data").get<std::string>();
  c.label_column = j.at("label_column").get<int>();
  c.header = j.at("header").get<std::string>();
  if (!j.at("standardize").is_null()) c.standardize = j.at("standardize").get<bool>();
  c.bias = j.at("bias").get<bool>();
  c.regularize_bias = j.at("regularize_bias").get<bool>();
  c.one_vs_all = j.at("one_vs_all").get<bool>();
  c.losses = j.at("losses").get<std::vector<std::string>>();
  c.k_grid = j.at("k_grid").get<std::vector<double>>();
  if (!j.at("m").is_null()) c.m = j.at("m").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.lambdas = j.at("lambdas").get<std::vector<double>>();
  c.learning_rate = j.at("learning_rate").get<double>();
  if (!j.at("iterations").is_null()) c.iterations = j.at("iterations").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.record_every = j.at("record_every").get<std::size_t>();
  c.threshold = j.at("threshold").get<double>();
  c.folds = j.at("folds").get<std::size_t>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.threads = j.at("threads").get<std::size_t>();
  c.depths = j.at("depths").get<std::vector<std::size_t>>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.samples = j.at("samples").get<std::size_t>();
  c.noise = j.at("noise").get<double>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.grid_resolution = j.at("grid_resolution").get<std::size_t>();
  c.weights = j.at("weights").get<std::string>();
  c.rounds = j.at("rounds").get<std::size_t>();
  c.eta_g = j.at("eta_g").get<double>();
  c.eta_d = j.at("eta_d").get<double>();
  c.gan_batch = j.at("gan_batch").get<std::size_t>();
  c.target_mean = j.at("target_mean").get<std::vector<double>>();
  c.target_std = j.at("target_std").get<double>();
  c.mixture_mean = j.at("mixture_mean").get<std::vector<double>>();
  c.mixture_std = j.at("mixture_std").get<double>();
  c.mixture_weight = j.at("mixture_weight").get<double>();
  c.disc_hidden = j.at("disc_hidden").get<std::vector<std::size_t>>();
  c.out = j.at("out").get<std::string>();
  return c;
}

// ---- data ------------------------------------------------------------------

namespace {

bool parses_as_number(const std::string& token) {
  const char* begin = token.c_str();
  char* end = nullptr;
  std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

// A first line whose feature fields do not all parse is a header.
bool first_line_is_header(const std::filesystem::path& path, const DelimitedSchema& schema) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) return false;
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, schema.delimiter)) fields.push_back(field);
  const int n = static_cast<int>(fields.size());
  const int label = schema.label_column < 0 ? n + schema.label_column : schema.label_column;
  for (int i = 0; i < n; ++i) {
    if (i != label && !parses_as_number(fields[static_cast<std::size_t>(i)])) return true;
  }
  return false;
}

}  // namespace

Dataset load_source(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.data == "spiral") return make_spiral(cfg.samples, cfg.noise, seed);
  if (cfg.data == "spectf-like") return make_hypercube_clusters(spectf_like_spec(), seed);
  if (cfg.data == "madelon-like") return make_hypercube_clusters(madelon_like_spec(), seed);
  DelimitedSchema schema;
  schema.label_column = cfg.label_column;
  schema.header = cfg.header == "yes" || (cfg.header == "auto" && first_line_is_header(cfg.data, schema));
  return load_delimited(cfg.data, schema);
}

// ---- tables ----------------------------------------------------------------

void ResultTable::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw std::logic_error(fmt::format("row has {} cells for {} columns", row.size(), columns.size()));
  }
  rows.push_back(std::move(row));
}

std::size_t ResultTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw std::out_of_range(fmt::format("no column '{}'", name));
}

const Cell& ResultTable::at(std::size_t row, std::string_view name) const {
  return rows.at(row).at(column(name));
}

double ResultTable::number(std::size_t row, std::string_view name) const {
  const Cell& c = at(row, name);
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  return std::numeric_limits<double>::quiet_NaN();
}

namespace {

std::string cell_text(const Cell& c) {
  return std::visit([](const auto& v) { return fmt::format("{}", v); }, c);
}

json cell_json(const Cell& c) {
  return std::visit([](const auto& v) -> json { return v; }, c);
}

}  // namespace

void ResultTable::write_csv(std::ostream& out) const {
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell_text(row[i]);
    out << '\n';
  }
}

json ResultTable::to_json() const {
  json arr = json::array();
  for (const auto& row : rows) {
    json obj = json::object();
    for (std::size_t i = 0; i < columns.size(); ++i) obj[columns[i]] = cell_json(row[i]);
    arr.push_back(std::move(obj));
  }
  return arr;
}

// ---- shared machinery --------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

std::size_t worker_count(std::size_t requested, std::size_t tasks) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, tasks));
}

// Runs fn(i) for i in [0, count) on a pool; results land in caller-owned slots
// indexed by i, so assembly order never depends on completion order.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = worker_count(threads, count);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string trace_csv(const TrainTrace& trace) {
  std::ostringstream os;
  trace.write_csv(os);
  return os.str();
}

Cell opt_k(const LossSpec& spec) {
  if (spec.is_rooted()) return spec.k;
  return std::string();
}

Cell opt_m(const LossSpec& spec) {
  if (spec.is_rooted()) return spec.m;
  return std::string();
}

std::vector<LossSpec> expand_losses(const ExperimentConfig& cfg) {
  std::vector<LossSpec> specs;
  for (const auto& name : cfg.losses) {
    switch (parse_loss_family(name)) {
      case LossFamily::Logistic: specs.push_back(LossSpec::logistic()); break;
      case LossFamily::CrossEntropy: specs.push_back(LossSpec::cross_entropy()); break;
      case LossFamily::Focal: specs.push_back(LossSpec::focal(cfg.gamma)); break;
      case LossFamily::RLO:
        for (double k : cfg.k_grid) specs.push_back(LossSpec::rlo(k, cfg.m));
        break;
      case LossFamily::RootedCE:
        for (double k : cfg.k_grid) specs.push_back(LossSpec::rooted_ce(k, cfg.m));
        break;
    }
  }
  return specs;
}

std::string spec_id(const LossSpec& spec) {
  switch (spec.family) {
    case LossFamily::RLO:
    case LossFamily::RootedCE:
      return spec.m == spec.k ? fmt::format("{}_k{}", to_string(spec.family), spec.k)
                             : fmt::format("{}_k{}_m{}", to_string(spec.family), spec.k, spec.m);
    case LossFamily::Focal: return fmt::format("focal_g{}", spec.gamma);
    default: return std::string(to_string(spec.family));
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population standard deviation.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Sums objectives of per-task traces recorded at the same iterations.
TrainTrace combine_traces(const std::vector<TrainTrace>& traces) {
  if (traces.size() == 1) return traces.front();
  std::size_t len = traces.front().records.size();
  for (const auto& t : traces) len = std::min(len, t.records.size());
  TrainTrace out;
  for (std::size_t r = 0; r < len; ++r) {
    TraceRecord rec;
    rec.iteration = traces.front().records[r].iteration;
    double g2 = 0.0;
    for (const auto& t : traces) {
      const auto& x = t.records[r];
      rec.objective += x.objective;
      rec.train_acc += x.train_acc / static_cast<double>(traces.size());
      rec.test_acc += x.test_acc / static_cast<double>(traces.size());
      g2 += x.grad_norm * x.grad_norm;
      rec.seconds += x.seconds;
    }
    rec.grad_norm = std::sqrt(g2);
    out.records.push_back(rec);
  }
  return out;
}

std::int64_t threshold_iteration(const TrainTrace& trace, double threshold) {
  if (trace.empty()) return -1;
  const auto it = iterations_to_threshold(normalized_trace(trace), threshold);
  return it ? static_cast<std::int64_t>(*it) : -1;
}

}  // namespace


// ---- regress -----------------------------------------------------------------

namespace {

struct PreparedFold {
  std::vector<Dataset> train;  // one per binary task
  std::vector<Dataset> test;
};

PreparedFold prepare_fold(const Dataset& data, const FoldPlan& plan, std::size_t fold,
                          const ExperimentConfig& cfg) {
  Dataset train = subset(data, plan.train[fold]);
  Dataset test = subset(data, plan.validation[fold]);
  if (*cfg.standardize) {
    const Dataset others[1] = {test};
    StandardizeResult s = standardize(train, others);
    train = std::move(s.train);
    test = std::move(s.others[0]);
  }
  if (cfg.bias) {
    train = with_bias_column(train);
    test = with_bias_column(test);
  }
  PreparedFold p;
  if (data.is_binary()) {
    p.train.push_back(std::move(train));
    p.test.push_back(std::move(test));
  } else {
    p.train = one_vs_all(train);
    p.test = one_vs_all(test);
  }
  return p;
}

struct LinearCellResult {
  double train_acc = 0.0;
  double test_acc = 0.0;
  double final_objective = 0.0;
  std::int64_t threshold_iter = -1;
  bool diverged = false;
  TrainTrace trace;
  double seconds = 0.0;
};

LinearCellResult run_linear_cell(const PreparedFold& fold, const LossSpec& spec, double lambda,
                                 std::size_t iterations, std::uint64_t seed,
                                 const ExperimentConfig& cfg) {
  const auto start = Clock::now();
  LinearCellResult out;
  std::vector<TrainTrace> traces;
  for (std::size_t t = 0; t < fold.train.size(); ++t) {
    const Dataset& train = fold.train[t];
    const Dataset& test = fold.test[t];
    LinearObjective objective(train, spec);
    if (cfg.bias && !cfg.regularize_bias) objective.exclude_from_l2(train.dim() - 1);
    OptimizerConfig oc;
    oc.learning_rate = cfg.learning_rate;
    oc.iterations = iterations;
    oc.l2_lambda = lambda;
    oc.record_every = cfg.record_every;
    oc.seed = Rng::derive_seed(seed, t);
    if (cfg.batch_size) oc.batch_size = std::min<std::size_t>(cfg.batch_size, train.size());
    const EvalHook hook = [&](const Vector& w) {
      return std::pair{evaluate_linear(w, train), evaluate_linear(w, test)};
    };
    RunResult r = oc.batch_size ? sgd_run(objective, Vector::Zero(objective.dimension()), oc, hook)
                                : gd_run(objective, Vector::Zero(objective.dimension()), oc, hook);
    out.diverged = out.diverged || r.status == RunStatus::Diverged;
    out.train_acc += evaluate_linear(r.params, train) / static_cast<double>(fold.train.size());
    out.test_acc += evaluate_linear(r.params, test) / static_cast<double>(fold.train.size());
    traces.push_back(std::move(r.trace));
  }
  out.trace = combine_traces(traces);
  out.final_objective = out.trace.empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : out.trace.records.back().objective;
  out.threshold_iter = threshold_iteration(out.trace, cfg.threshold);
  out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

struct GroupKey {
  std::uint64_t seed;
  std::string loss;
  double k;
  double m;
  double lambda;
  auto operator<=>(const GroupKey&) const = default;
};

}  // namespace

ExperimentOutput run_regress(const ExperimentConfig& input) {
  const ExperimentConfig cfg = input.resolved();
  if (cfg.command != Command::Regress) throw std::invalid_argument("config is not a regress run");
  ExperimentOutput out;
  out.config = cfg;
  out.results.columns = {"seed", "dataset", "loss", "k", "m", "lambda", "fold", "iterations",
                         "train_acc", "test_acc", "final_objective", "iters_to_threshold", "status"};
  out.timings.columns = {"id", "seconds"};
  const std::vector<LossSpec> specs = expand_losses(cfg);

  struct CellSpec {
    std::size_t seed_slot;
    LossSpec spec;
    double lambda;
    std::size_t fold;
  };
  std::vector<Dataset> datasets;
  std::vector<std::vector<PreparedFold>> folds;
  std::vector<CellSpec> cells;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    datasets.push_back(load_source(cfg, cfg.seeds[s]));
    const FoldPlan plan = kfold(static_cast<std::size_t>(datasets.back().size()), cfg.folds,
                                Rng::derive_seed(cfg.seeds[s], 0));
    folds.emplace_back();
    for (std::size_t f = 0; f < cfg.folds; ++f) folds.back().push_back(prepare_fold(datasets.back(), plan, f, cfg));
    for (const auto& spec : specs) {
      for (double lambda : cfg.lambdas) {
        for (std::size_t f = 0; f < cfg.folds; ++f) cells.push_back({s, spec, lambda, f});
      }
    }
  }

  std::vector<LinearCellResult> results(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const CellSpec& c = cells[i];
    const std::size_t iters = cfg.iterations.value_or(regress_iteration_budget(datasets[c.seed_slot].name));
    results[i] = run_linear_cell(folds[c.seed_slot][c.fold], c.spec, c.lambda, iters,
                                 Rng::derive_seed(cfg.seeds[c.seed_slot], 1 + c.fold), cfg);
  });

  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const LinearCellResult& r = results[i];
    const std::uint64_t seed = cfg.seeds[c.seed_slot];
    const Dataset& data = datasets[c.seed_slot];
    const std::size_t iters = cfg.iterations.value_or(regress_iteration_budget(data.name));
    out.results.add({static_cast<std::int64_t>(seed), data.name, std::string(to_string(c.spec.family)),
                     opt_k(c.spec), opt_m(c.spec), c.lambda, static_cast<std::int64_t>(c.fold),
                     static_cast<std::int64_t>(iters), r.train_acc, r.test_acc, r.final_objective,
                     r.threshold_iter, std::string(r.diverged ? "diverged" : "completed")});
    out.diverged = out.diverged || r.diverged;
    const std::string id = fmt::format("s{}_{}_l{}_f{}", seed, spec_id(c.spec), c.lambda, c.fold);
    out.files.push_back({fmt::format("trace_{}.csv", id), trace_csv(r.trace)});
    out.timings.add({id, r.seconds});
    const bool rooted = c.spec.is_rooted();
    groups[{seed, std::string(to_string(c.spec.family)), rooted ? c.spec.k : 0.0, rooted ? c.spec.m : 0.0,
            c.lambda}]
        .push_back(i);
  }

  // mean ± std per grid cell, and the top three k per (seed, λ)
  out.summary.columns = {"seed", "dataset", "loss", "k", "m", "lambda", "folds", "mean_test_acc",
                         "std_test_acc", "mean_train_acc", "mean_iters_to_threshold", "diverged_folds",
                         "top_k_rank"};
  std::map<std::pair<std::uint64_t, double>, std::vector<std::pair<double, double>>> rooted_scores;
  std::map<GroupKey, std::pair<double, double>> stats;
  for (const auto& [key, idx] : groups) {
    std::vector<double> test;
    for (std::size_t i : idx) test.push_back(results[i].test_acc);
    if (key.loss == "rlo") rooted_scores[{key.seed, key.lambda}].push_back({mean_of(test), key.k});
  }
  std::map<std::tuple<std::uint64_t, double, double>, int> ranks;
  for (auto& [key, scores] : rooted_scores) {
    std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t r = 0; r < scores.size() && r < 3; ++r) {
      ranks[{key.first, key.second, scores[r].second}] = static_cast<int>(r + 1);
    }
  }
  for (const auto& [key, idx] : groups) {
    std::vector<double> test;
    std::vector<double> train;
    std::vector<double> iters;
    std::int64_t diverged = 0;
    for (std::size_t i : idx) {
      test.push_back(results[i].test_acc);
      train.push_back(results[i].train_acc);
      if (results[i].threshold_iter >= 0) iters.push_back(static_cast<double>(results[i].threshold_iter));
      diverged += results[i].diverged ? 1 : 0;
    }
    const bool rooted = key.loss == "rlo";
    const auto rank = ranks.find({key.seed, key.lambda, key.k});
    const CellSpec& first = cells[idx.front()];
    out.summary.add({static_cast<std::int64_t>(key.seed), datasets[first.seed_slot].name, key.loss,
                     rooted ? Cell{key.k} : Cell{std::string()}, rooted ? Cell{key.m} : Cell{std::string()},
                     key.lambda, static_cast<std::int64_t>(idx.size()), mean_of(test), std_of(test),
                     mean_of(train), iters.empty() ? Cell{std::string()} : Cell{mean_of(iters)}, diverged,
                     rooted && rank != ranks.end() ? Cell{static_cast<std::int64_t>(rank->second)}
                                                   : Cell{std::string()}});
  }
  return out;
}

// ---- train-mlp ---------------------------------------------------------------

ExperimentOutput run_train_mlp(const ExperimentConfig& input) {
  const ExperimentConfig cfg = input.resolved();
  if (cfg.command != Command::TrainMlp) throw std::invalid_argument("config is not a train-mlp run");
  ExperimentOutput out;
  out.config = cfg;
  out.results.columns = {"seed", "dataset", "loss", "k", "m", "gamma", "lambda", "depth", "hidden",
                         "iterations", "train_acc", "test_acc", "final_objective", "iters_to_threshold",
                         "status"};
  out.timings.columns = {"id", "seconds"};
  const std::vector<LossSpec> specs = expand_losses(cfg);

  struct Split {
    Dataset train;
    Dataset test;
    GridBounds bounds;
  };
  std::vector<Split> splits;
  for (std::uint64_t seed : cfg.seeds) {
    Dataset data = load_source(cfg, seed);
    auto [train, test] = train_test_split(data, cfg.train_fraction, Rng::derive_seed(seed, 1));
    if (*cfg.standardize) {
      const Dataset others[1] = {test};
      StandardizeResult s = standardize(train, others);
      train = std::move(s.train);
      test = std::move(s.others[0]);
      data = s.stats.apply(data);
    }
    const GridBounds b = data.dim() == 2 ? bounds_of(data) : GridBounds{};
    splits.push_back({std::move(train), std::move(test), b});
  }

  struct CellSpec {
    std::size_t seed_slot;
    std::size_t depth;
    LossSpec spec;
    double lambda;
  };
  std::vector<CellSpec> cells;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    for (std::size_t depth : cfg.depths) {
      for (const auto& spec : specs) {
        for (double lambda : cfg.lambdas) cells.push_back({s, depth, spec, lambda});
      }
    }
  }

  struct CellResult {
    double train_acc = 0.0;
    double test_acc = 0.0;
    double final_objective = 0.0;
    std::int64_t threshold_iter = -1;
    bool diverged = false;
    TrainTrace trace;
    std::string grid;
    double seconds = 0.0;
  };
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const auto start = Clock::now();
    const CellSpec& c = cells[i];
    const Split& split = splits[c.seed_slot];
    std::vector<Index> sizes{split.train.dim()};
    for (std::size_t l = 1; l < c.depth; ++l) sizes.push_back(static_cast<Index>(cfg.hidden));
    sizes.push_back(class_count(split.train));
    // Same initial network for every loss at a given (seed, depth).
    const MlpParams init = init_params(sizes, InitScheme::UniformScaled,
                                       Rng::derive_seed(cfg.seeds[c.seed_slot], 100 + c.depth));
    MlpObjective objective(split.train, sizes, c.spec);
    const EvalHook hook = [&](const Vector& p) {
      const MlpParams net = objective.unflatten(p);
      return std::pair{evaluate_mlp(net, split.train), evaluate_mlp(net, split.test)};
    };
    const std::size_t iters = cfg.iterations.value_or(mlp_iteration_budget(c.depth));
    CellResult& r = results[i];
    Vector params = init.flatten();
    if (iters == 0) {
      TraceRecord rec;
      rec.objective = objective.value(params);
      std::tie(rec.train_acc, rec.test_acc) = hook(params);
      r.trace.records.push_back(rec);
    } else {
      OptimizerConfig oc;
      oc.learning_rate = cfg.learning_rate;
      oc.iterations = iters;
      oc.l2_lambda = c.lambda;
      oc.record_every = cfg.record_every;
      oc.seed = Rng::derive_seed(cfg.seeds[c.seed_slot], 200 + c.depth);
      if (cfg.batch_size) oc.batch_size = std::min<std::size_t>(cfg.batch_size, split.train.size());
      RunResult run = oc.batch_size ? sgd_run(objective, params, oc, hook) : gd_run(objective, params, oc, hook);
      r.diverged = run.status == RunStatus::Diverged;
      params = std::move(run.params);
      r.trace = std::move(run.trace);
    }
    const MlpParams net = objective.unflatten(params);
    r.train_acc = evaluate_mlp(net, split.train);
    r.test_acc = evaluate_mlp(net, split.test);
    r.final_objective = r.trace.records.back().objective;
    r.threshold_iter = threshold_iteration(r.trace, cfg.threshold);
    if (split.train.dim() == 2 && cfg.grid_resolution >= 2) {
      std::ostringstream os;
      decision_grid(net, split.bounds, cfg.grid_resolution).write_csv(os);
      r.grid = os.str();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  });

  std::map<std::tuple<std::size_t, std::string, double, double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const CellResult& r = results[i];
    const std::uint64_t seed = cfg.seeds[c.seed_slot];
    const std::size_t iters = cfg.iterations.value_or(mlp_iteration_budget(c.depth));
    out.results.add({static_cast<std::int64_t>(seed), splits[c.seed_slot].train.name,
                     std::string(to_string(c.spec.family)), opt_k(c.spec), opt_m(c.spec),
                     c.spec.family == LossFamily::Focal ? Cell{c.spec.gamma} : Cell{std::string()}, c.lambda,
                     static_cast<std::int64_t>(c.depth), static_cast<std::int64_t>(cfg.hidden),
                     static_cast<std::int64_t>(iters), r.train_acc, r.test_acc, r.final_objective,
                     r.threshold_iter, std::string(r.diverged ? "diverged" : "completed")});
    out.diverged = out.diverged || r.diverged;
    const std::string id = fmt::format("s{}_d{}_{}_l{}", seed, c.depth, spec_id(c.spec), c.lambda);
    out.files.push_back({fmt::format("trace_{}.csv", id), trace_csv(r.trace)});
    if (!r.grid.empty()) out.files.push_back({fmt::format("grid_{}.csv", id), r.grid});
    out.timings.add({id, r.seconds});
    groups[{c.depth, spec_id(c.spec), c.lambda, c.spec.k}].push_back(i);
  }

  out.summary.columns = {"depth", "loss", "k", "lambda", "seeds", "mean_test_acc", "std_test_acc",
                         "mean_train_acc", "gain_vs_ce"};
  std::map<std::pair<std::size_t, double>, double> ce_mean;
  for (const auto& [key, idx] : groups) {
    if (cells[idx.front()].spec.family != LossFamily::CrossEntropy) continue;
    std::vector<double> test;
    for (std::size_t i : idx) test.push_back(results[i].test_acc);
    ce_mean[{std::get<0>(key), std::get<2>(key)}] = mean_of(test);
  }
  for (const auto& [key, idx] : groups) {
    std::vector<double> test;
    std::vector<double> train;
    for (std::size_t i : idx) {
      test.push_back(results[i].test_acc);
      train.push_back(results[i].train_acc);
    }
    const LossSpec& spec = cells[idx.front()].spec;
    const auto ce = ce_mean.find({std::get<0>(key), std::get<2>(key)});
    out.summary.add({static_cast<std::int64_t>(std::get<0>(key)), std::string(to_string(spec.family)),
                     opt_k(spec), std::get<2>(key), static_cast<std::int64_t>(idx.size()), mean_of(test),
                     std_of(test), mean_of(train),
                     ce == ce_mean.end() ? Cell{std::string()} : Cell{mean_of(test) - ce->second}});
  }
  return out;
}

// ---- diagnose ----------------------------------------------------------------

namespace {

Vector read_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(fmt::format("cannot open weights file '{}'", path));
  std::vector<double> values;
  std::string token;
  std::string line;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    while (ls >> token) {
      if (!parses_as_number(token)) throw std::invalid_argument(fmt::format("bad weight '{}' in '{}'", token, path));
      values.push_back(std::strtod(token.c_str(), nullptr));
    }
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

ExperimentOutput run_diagnose(const ExperimentConfig& input) {
  const ExperimentConfig cfg = input.resolved();
  if (cfg.command != Command::Diagnose) throw std::invalid_argument("config is not a diagnose run");
  ExperimentOutput out;
  out.config = cfg;
  out.results.columns = {"seed", "dataset", "task", "loss", "k", "m", "lambda", "eig_min", "eig_max",
                         "condition_number", "fraction_ratio_above_one", "fraction_sufficient"};
  out.timings.columns = {"id", "seconds"};

  struct Task {
    std::uint64_t seed;
    Dataset data;
    Vector w;
  };
  std::vector<Task> tasks;
  for (std::uint64_t seed : cfg.seeds) {
    Dataset data = load_source(cfg, seed);
    if (!data.is_binary() && !cfg.one_vs_all) {
      throw std::invalid_argument(fmt::format(
          "'{}' has {} classes; pass --one-vs-all to diagnose each class against the rest", data.name,
          data.num_classes));
    }
    if (*cfg.standardize) data = standardize(data).train;
    if (cfg.bias) data = with_bias_column(data);
    std::vector<Dataset> parts = data.is_binary() ? std::vector<Dataset>{data} : one_vs_all(data);
    const Vector w = cfg.weights.empty() ? Vector::Zero(data.dim()) : read_weights(cfg.weights);
    if (w.size() != data.dim()) {
      throw std::invalid_argument(fmt::format("weights have {} entries but the model needs {}{}", w.size(),
                                              data.dim(), cfg.bias ? " (bias included)" : ""));
    }
    for (auto& p : parts) tasks.push_back({seed, std::move(p), w});
  }

  struct CellSpec {
    std::size_t task;
    LossSpec spec;
    double lambda;
  };
  std::vector<CellSpec> cells;
  std::vector<LossSpec> specs = expand_losses(cfg);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (const auto& spec : specs) {
      for (double lambda : cfg.lambdas) cells.push_back({t, spec, lambda});
    }
  }
  struct CellResult {
    double eig_min = 0.0;
    double eig_max = 0.0;
    double condition = 0.0;
    double above_one = 0.0;
    double sufficient = 0.0;
    std::string report;
    double seconds = 0.0;
  };
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const auto start = Clock::now();
    const CellSpec& c = cells[i];
    const Task& task = tasks[c.task];
    CellResult& r = results[i];
    const HessianMatrix h = assemble_hessian(task.w, task.data, c.spec, c.lambda);
    const Vector ev = symmetric_eigenvalues(h.values);
    r.eig_min = ev(0);
    r.eig_max = ev(ev.size() - 1);
    r.condition = condition_number(h.values);
    if (c.spec.family == LossFamily::RLO) {
      const ConditioningReport rep = conditioning_report(task.w, task.data, c.spec.k);
      r.above_one = rep.fraction_ratio_above_one();
      std::size_t holds = 0;
      for (const auto& rec : rep.records) holds += rec.sufficient_holds ? 1 : 0;
      r.sufficient = static_cast<double>(holds) / static_cast<double>(rep.records.size());
      if (c.lambda == cfg.lambdas.front()) {
        std::ostringstream os;
        rep.write_csv(os);
        r.report = os.str();
      }
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  });

  std::map<std::tuple<std::uint64_t, double, double>, std::pair<std::vector<double>, std::vector<double>>> by_k;
  std::map<std::pair<std::size_t, double>, double> lr_condition;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const CellResult& r = results[i];
    const Task& task = tasks[c.task];
    const bool rooted = c.spec.family == LossFamily::RLO;
    out.results.add({static_cast<std::int64_t>(task.seed), task.data.name, static_cast<std::int64_t>(c.task),
                     std::string(to_string(c.spec.family)), opt_k(c.spec), opt_m(c.spec), c.lambda, r.eig_min,
                     r.eig_max, r.condition, rooted ? Cell{r.above_one} : Cell{std::string()},
                     rooted ? Cell{r.sufficient} : Cell{std::string()}});
    const std::string id = fmt::format("s{}_t{}_{}_l{}", task.seed, c.task, spec_id(c.spec), c.lambda);
    if (!r.report.empty()) {
      out.files.push_back({fmt::format("conditioning_s{}_t{}_k{}.csv", task.seed, c.task, c.spec.k), r.report});
    }
    out.timings.add({id, r.seconds});
    if (!rooted) lr_condition[{c.task, c.lambda}] = r.condition;
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    if (c.spec.family != LossFamily::RLO) continue;
    auto& slot = by_k[{tasks[c.task].seed, c.lambda, c.spec.k}];
    slot.second.push_back(results[i].condition);
    const auto lr = lr_condition.find({c.task, c.lambda});
    slot.first.push_back(lr == lr_condition.end() ? std::numeric_limits<double>::quiet_NaN() : lr->second);
  }
  out.summary.columns = {"seed", "lambda", "k", "tasks", "mean_condition_lr", "mean_condition_rlo",
                         "tasks_rlo_better"};
  for (const auto& [key, conds] : by_k) {
    std::int64_t better = 0;
    for (std::size_t t = 0; t < conds.first.size(); ++t) better += conds.second[t] < conds.first[t] ? 1 : 0;
    out.summary.add({static_cast<std::int64_t>(std::get<0>(key)), std::get<1>(key), std::get<2>(key),
                     static_cast<std::int64_t>(conds.first.size()), mean_of(conds.first), mean_of(conds.second),
                     better});
  }
  return out;
}

// ---- gan-toy -----------------------------------------------------------------

ExperimentOutput run_gan_toy(const ExperimentConfig& input) {
  const ExperimentConfig cfg = input.resolved();
  if (cfg.command != Command::GanToy) throw std::invalid_argument("config is not a gan-toy run");
  ExperimentOutput out;
  out.config = cfg;
  out.results.columns = {"seed", "k", "rounds", "value", "disc_acc_real", "disc_acc_fake", "disc_acc",
                         "fake_mean_0", "fake_var_0", "mean_gap", "cov_gap", "status"};
  out.timings.columns = {"id", "seconds"};

  const Vector mean0 = Eigen::Map<const Vector>(cfg.target_mean.data(), static_cast<Index>(cfg.target_mean.size()));
  const GanTarget target =
      cfg.mixture_mean.empty()
          ? GanTarget::gaussian(mean0, cfg.target_std)
          : GanTarget::mixture(mean0, cfg.target_std,
                               Eigen::Map<const Vector>(cfg.mixture_mean.data(),
                                                        static_cast<Index>(cfg.mixture_mean.size())),
                               cfg.mixture_std, cfg.mixture_weight);
  struct CellSpec {
    double k;
    std::uint64_t seed;
  };
  std::vector<CellSpec> cells;
  for (double k : cfg.k_grid) {
    for (std::uint64_t seed : cfg.seeds) cells.push_back({k, seed});
  }
  struct CellResult {
    GanResult run;
    GanReport report;
    double seconds = 0.0;
  };
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const auto start = Clock::now();
    GanConfig gc;
    gc.k = cells[i].k;
    gc.seed = cells[i].seed;
    gc.target = target;
    gc.latent_dim = target.dim();
    gc.disc_hidden.assign(cfg.disc_hidden.begin(), cfg.disc_hidden.end());
    gc.eta_g = cfg.eta_g;
    gc.eta_d = cfg.eta_d;
    gc.rounds = cfg.rounds;
    gc.batch = cfg.gan_batch;
    gc.record_every = std::max<std::size_t>(cfg.record_every, 10);
    results[i].run = alternate_train(gc);
    results[i].report = gan_diagnostics(results[i].run.trace, target, 20);
    results[i].seconds = std::chrono::duration<double>(Clock::now() - start).count();
  });

  std::map<double, std::vector<std::size_t>> by_k;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const GanReport& rep = results[i].report;
    const bool diverged = results[i].run.status == RunStatus::Diverged;
    out.results.add({static_cast<std::int64_t>(cells[i].seed), cells[i].k, static_cast<std::int64_t>(cfg.rounds),
                     rep.value, rep.disc_acc_real, rep.disc_acc_fake, rep.disc_acc, rep.fake_mean(0),
                     rep.fake_cov(0, 0), rep.mean_gap, rep.cov_gap,
                     std::string(diverged ? "diverged" : "completed")});
    out.diverged = out.diverged || diverged;
    const std::string id = fmt::format("s{}_k{}", cells[i].seed, cells[i].k);
    std::ostringstream os;
    results[i].run.trace.write_csv(os);
    out.files.push_back({fmt::format("trace_gan_{}.csv", id), os.str()});
    out.timings.add({id, results[i].seconds});
    by_k[cells[i].k].push_back(i);
  }
  out.summary.columns = {"k", "seeds", "mean_mean_gap", "max_mean_gap", "mean_disc_acc", "min_disc_acc",
                         "max_disc_acc"};
  for (const auto& [k, idx] : by_k) {
    std::vector<double> gaps;
    std::vector<double> accs;
    for (std::size_t i : idx) {
      gaps.push_back(results[i].report.mean_gap);
      accs.push_back(results[i].report.disc_acc);
    }
    out.summary.add({k, static_cast<std::int64_t>(idx.size()), mean_of(gaps),
                     *std::max_element(gaps.begin(), gaps.end()), mean_of(accs),
                     *std::min_element(accs.begin(), accs.end()), *std::max_element(accs.begin(), accs.end())});
  }
  return out;
}

// ---- spiral-gen --------------------------------------------------------------

ExperimentOutput run_spiral_gen(const ExperimentConfig& input) {
  const ExperimentConfig cfg = input.resolved();
  if (cfg.command != Command::SpiralGen) throw std::invalid_argument("config is not a spiral-gen run");
  ExperimentOutput out;
  out.config = cfg;
  out.results.columns = {"seed", "samples", "noise", "file", "positives", "negatives"};
  out.timings.columns = {"id", "seconds"};
  out.summary.columns = {"files"};
  for (std::uint64_t seed : cfg.seeds) {
    const auto start = Clock::now();
    const Dataset d = make_spiral(cfg.samples, cfg.noise, seed);
    DelimitedSchema schema;
    schema.header = true;
    std::ostringstream os;
    write_delimited(os, d, schema);
    const std::string name = fmt::format("spiral_s{}.csv", seed);
    out.files.push_back({name, os.str()});
    const auto pos = std::count(d.labels.begin(), d.labels.end(), 1);
    out.results.add({static_cast<std::int64_t>(seed), static_cast<std::int64_t>(d.size()), cfg.noise, name,
                     static_cast<std::int64_t>(pos), static_cast<std::int64_t>(d.size() - pos)});
    out.timings.add({fmt::format("s{}", seed), std::chrono::duration<double>(Clock::now() - start).count()});
  }
  out.summary.add({static_cast<std::int64_t>(cfg.seeds.size())});
  return out;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.command) {
    case Command::Regress: return run_regress(cfg);
    case Command::TrainMlp: return run_train_mlp(cfg);
    case Command::Diagnose: return run_diagnose(cfg);
    case Command::GanToy: return run_gan_toy(cfg);
    case Command::SpiralGen: return run_spiral_gen(cfg);
  }
  throw std::invalid_argument("unknown command");
}

// ---- output ------------------------------------------------------------------

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  f << content;
  if (!f) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

std::string table_csv(const ResultTable& t) {
  std::ostringstream os;
  t.write_csv(os);
  return os.str();
}

}  // namespace

void emit_results(const ExperimentOutput& output, const std::filesystem::path& dir,
                  const std::vector<std::string>& argv) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  write_file(dir / "results.csv", table_csv(output.results));
  write_file(dir / "results.json", output.results.to_json().dump(2) + "\n");
  write_file(dir / "summary.csv", table_csv(output.summary));
  write_file(dir / "timings.csv", table_csv(output.timings));
  for (const auto& f : output.files) write_file(dir / f.name, f.content);

  json manifest;
  manifest["tool"] = "rlo";
  manifest["version"] = std::string(kVersion);
  manifest["command"] = std::string(to_string(output.config.command));
  manifest["config"] = output.config.to_json();
  manifest["argv"] = argv;
  manifest["diverged"] = output.diverged;
  manifest["rows"] = output.results.rows.size();
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  manifest["timestamps"] = {{"written_unix_seconds", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ExperimentConfig config_from_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::invalid_argument(fmt::format("cannot open manifest '{}'", manifest.string()));
  json j;
  try {
    in >> j;
    return ExperimentConfig::from_json(j.at("config"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(fmt::format("malformed manifest '{}': {}", manifest.string(), e.what()));
  }
}

}  // namespace rlo
