// regunc command-line front end.
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "regunc/regunc.hpp"

namespace fs = std::filesystem;
using namespace regunc;
using io::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitVerification = 2;
constexpr int kExitConvergence = 3;

struct Options {
  std::string input;
  std::string rules;
  std::string estimators;
  std::uint64_t seed = 0;
  bool oracle_fallback = false;
  std::string output_dir = ".";
  std::size_t trials = 100;
  std::size_t members = 0;  // 0: command default
  std::size_t iterations = 5;
  std::size_t batch = 20;
  std::string kind = "all";
  std::size_t replicates = 100000;
  std::size_t n_train = 1200;
  std::size_t epochs = 100;
  std::size_t grid_points = 281;
  std::size_t pool_size = 1000;
  std::size_t test_size = 1000;
  std::size_t min_steps = 3800;
};

json options_json(const Options& o) {
  return {{"input", o.input},
          {"rules", o.rules},
          {"estimators", o.estimators},
          {"seed", o.seed},
          {"oracle_fallback", o.oracle_fallback},
          {"output_dir", o.output_dir},
          {"trials", o.trials},
          {"members", o.members},
          {"iterations", o.iterations},
          {"batch", o.batch},
          {"kind", o.kind},
          {"replicates", o.replicates},
          {"n_train", o.n_train},
          {"epochs", o.epochs},
          {"grid_points", o.grid_points},
          {"pool_size", o.pool_size},
          {"test_size", o.test_size},
          {"min_steps", o.min_steps}};
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<ScoringRule> rules_or(const Options& o, std::vector<ScoringRule> fallback) {
  if (o.rules.empty()) return fallback;
  std::vector<ScoringRule> out;
  for (const auto& s : split(o.rules)) out.push_back(parse_rule(s));
  if (out.empty()) throw UsageError("--rules is empty");
  return out;
}

std::vector<EstimatorId> estimators_or(const Options& o, std::vector<EstimatorId> fallback) {
  if (o.estimators.empty()) return fallback;
  std::vector<EstimatorId> out;
  for (const auto& s : split(o.estimators)) out.push_back(parse_estimator(s));
  if (out.empty()) throw UsageError("--estimators is empty");
  return out;
}

EvalOptions eval_options(const Options& o) {
  EvalOptions e;
  e.oracle_fallback = o.oracle_fallback;
  return e;
}

class Output {
 public:
  Output(const Options& o, std::string command) : dir_(o.output_dir), command_(std::move(command)), opts_(o) {}

  void csv(const std::string& name, const io::CsvTable& t) { file(name, t.str()); }

  void file(const std::string& name, const std::string& content) {
    io::write_file_atomic(dir_ / name, content);
    artifacts_.push_back(name);
  }

  void manifest(json extra = json::object()) {
    json m;
    m["command"] = command_;
    m["config"] = options_json(opts_);
    m["seed"] = opts_.seed;
    m["version"] = REGUNC_VERSION;
    m["artifacts"] = artifacts_;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    io::write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::string command_;
  Options opts_;
  std::vector<std::string> artifacts_;
};

PredictionSet load_input(const Options& o) {
  if (o.input.empty()) throw UsageError("--input is required");
  auto ps = io::load_prediction_set(o.input);
  if (ps.empty()) throw UsageError("input has no points");
  return ps;
}

void require_targets(const PredictionSet& ps) {
  for (const auto& p : ps)
    if (!p.target) throw ParseError("schema error: point '" + p.id + "' is missing required field 'target'", 0, 0);
}

void require_groups(const PredictionSet& ps) {
  for (const auto& p : ps)
    if (!p.group) throw ParseError("schema error: point '" + p.id + "' is missing required field 'group'", 0, 0);
}

/// Column values with NA cells kept as std::nullopt.
std::vector<double> dense(const std::vector<std::optional<double>>& col, bool& complete) {
  std::vector<double> out;
  complete = true;
  for (const auto& v : col) {
    if (!v) {
      complete = false;
      return {};
    }
    out.push_back(*v);
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_measures(const Options& o) {
  const auto ps = load_input(o);
  const auto rules = rules_or(o, {kAllRules.begin(), kAllRules.end()});
  const auto ids = estimators_or(o, all_estimators());
  const auto mm = measure_matrix(rules, ps, eval_options(o), ids);
  io::CsvTable t;
  t.header.push_back("id");
  for (const auto& c : mm.columns) t.header.push_back(c.name());
  for (std::size_t i = 0; i < mm.rows.size(); ++i) {
    std::vector<std::string> row{mm.point_ids[i]};
    for (const auto& v : mm.rows[i]) row.push_back(io::format_cell(v));
    t.rows.push_back(std::move(row));
  }
  Output out(o, "measures");
  out.csv("measures.csv", t);
  out.manifest();
  return 0;
}

int cmd_oracle_check(const Options& o) {
  const auto rep = experiments::oracle_check(o.trials, o.seed);
  io::CsvTable t{{"rule", "estimator", "cases", "max_abs_error", "max_rel_error", "failures", "convergence_failures"},
                 {}};
  double worst = 0.0;
  std::size_t failures = 0;
  for (const auto& r : rep.rows) {
    t.rows.push_back({std::string(to_string(r.rule)), r.estimator.name(), std::to_string(r.cases),
                      io::format_double(r.max_abs_error), io::format_double(r.max_rel_error),
                      std::to_string(r.failures), std::to_string(r.convergence_failures)});
    worst = std::max(worst, r.max_rel_error);
    failures += r.failures + r.convergence_failures;
  }
  Output out(o, "oracle-check");
  out.csv("oracle_check.csv", t);
  out.manifest({{"passed", rep.passed()}, {"failures", failures}, {"max_rel_error", worst}});
  std::cout << "oracle-check: " << rep.trials << " trials, max relative error " << io::format_double(worst) << ", "
            << failures << " failing cases\n";
  return rep.passed() ? 0 : kExitVerification;
}

int cmd_shift(const Options& o) {
  std::vector<synthetic::ShiftKind> kinds;
  if (o.kind == "all")
    kinds.assign(synthetic::kAllShifts.begin(), synthetic::kAllShifts.end());
  else
    kinds.push_back(synthetic::parse_shift(o.kind));
  synthetic::UniformPosteriorSpec base;
  base.replicates = o.replicates;
  base.seed = o.seed;
  if (o.members) base.members = o.members;
  base.validate();
  const auto rules = rules_or(o, {kAllRules.begin(), kAllRules.end()});
  io::CsvTable t{{"shift", "rule", "estimator", "base_mean", "shifted_mean", "direction"}, {}};
  for (auto k : kinds)
    for (const auto& r : synthetic::shift_report(rules, base, k, 0.01, eval_options(o))) {
      const bool na = r.direction == synthetic::Direction::Unavailable;
      t.rows.push_back({std::string(to_string(k)), std::string(to_string(r.rule)), r.estimator.name(),
                        na ? "NA" : io::format_double(r.base_mean), na ? "NA" : io::format_double(r.shifted_mean),
                        std::string(to_string(r.direction))});
    }
  Output out(o, "shift");
  out.csv("shift.csv", t);
  out.manifest();
  return 0;
}

experiments::TwoCurveSetup two_curve_setup(const Options& o) {
  experiments::TwoCurveSetup s;
  s.n_train = o.n_train;
  s.train.epochs = o.epochs;
  if (o.members) s.members = o.members;
  return s;
}

io::CsvTable training_table(const std::vector<synthetic::TwoCurveSample>& train) {
  io::CsvTable t{{"x", "y", "component"}, {}};
  for (const auto& s : train)
    t.rows.push_back({io::format_double(s.x), io::format_double(s.y), std::to_string(s.component)});
  return t;
}

int cmd_synth_demo(const Options& o) {
  const auto setup = two_curve_setup(o);
  const auto model = experiments::train_two_curve(setup, o.seed);
  const auto xs = experiments::linspace(-7.0, 7.0, o.grid_points);
  const auto ps = experiments::predict_grid(model.predictor, xs);

  std::vector<ScoringRule> rules{ScoringRule::LOG};
  for (auto r : rules_or(o, {}))
    if (r != ScoringRule::LOG) rules.push_back(r);
  const ApproxPair p11{ApproximationId::BA, ApproximationId::BA};
  const auto ids = estimators_or(
      o, {EstimatorId::total(p11), EstimatorId::bayes(ApproximationId::BA), EstimatorId::excess(p11)});
  const auto mm = measure_matrix(rules, ps, eval_options(o), ids);

  io::CsvTable t{{"x", "mean"}, {}};
  for (const auto& c : mm.columns) t.header.push_back(c.name());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::vector<std::string> row{io::format_double(xs[i]), io::format_double(ps[i].ensemble.mean())};
    for (const auto& v : mm.rows[i]) row.push_back(io::format_cell(v));
    t.rows.push_back(std::move(row));
  }
  Output out(o, "synth-demo");
  out.csv("synth_demo.csv", t);
  out.csv("train_data.csv", training_table(model.train));
  out.manifest();
  return 0;
}

int cmd_train(const Options& o) {
  const auto setup = two_curve_setup(o);
  const auto model = experiments::train_two_curve(setup, o.seed);
  const auto ps = experiments::id_ood_set(model, setup, o.seed);
  Output out(o, "train");
  out.file("checkpoint.json", io::checkpoint_json(model.predictor).dump(1) + "\n");
  out.csv("train_data.csv", training_table(model.train));
  out.file("predictions.json", io::serialize_prediction_set(ps));
  out.manifest();
  return 0;
}

int cmd_selective(const Options& o) {
  const auto ps = load_input(o);
  require_targets(ps);
  std::vector<double> err;
  for (const auto& p : ps) err.push_back(std::pow(*p.target - p.ensemble.mean(), 2));
  const auto rules = rules_or(o, {kAllRules.begin(), kAllRules.end()});
  const auto mm = measure_matrix(rules, ps, eval_options(o), estimators_or(o, all_estimators()));
  io::CsvTable t{{"rule", "estimator", "prr"}, {}};
  for (std::size_t c = 0; c < mm.columns.size(); ++c) {
    bool complete = false;
    const auto unc = dense(mm.column(c), complete);
    std::optional<double> v;
    if (complete) {
      try {
        v = metrics::prr(err, unc);
      } catch (const UndefinedError&) {
      }
    }
    t.rows.push_back({std::string(to_string(mm.columns[c].rule)), mm.columns[c].estimator.name(), io::format_cell(v)});
  }
  Output out(o, "selective");
  out.csv("prr.csv", t);
  out.manifest();
  return 0;
}

int cmd_ood(const Options& o) {
  const auto ps = load_input(o);
  require_groups(ps);
  std::size_t n_in = 0;
  for (const auto& p : ps) n_in += *p.group == "id";
  if (n_in == 0 || n_in == ps.size()) throw UsageError("ood needs points in group 'id' and in at least one other group");
  const auto rules = rules_or(o, {kAllRules.begin(), kAllRules.end()});
  const auto mm = measure_matrix(rules, ps, eval_options(o), estimators_or(o, all_estimators()));
  io::CsvTable t{{"rule", "estimator", "auroc"}, {}};
  for (std::size_t c = 0; c < mm.columns.size(); ++c) {
    std::vector<double> in, out_scores;
    bool complete = true;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& v = mm.rows[i][c];
      if (!v) {
        complete = false;
        break;
      }
      (*ps[i].group == "id" ? in : out_scores).push_back(*v);
    }
    std::optional<double> a;
    if (complete) a = metrics::auroc(in, out_scores);
    t.rows.push_back({std::string(to_string(mm.columns[c].rule)), mm.columns[c].estimator.name(), io::format_cell(a)});
  }
  Output out(o, "ood");
  out.csv("auroc.csv", t);
  out.manifest();
  return 0;
}

std::optional<double> tau_or_na(const std::vector<std::optional<double>>& a,
                                const std::vector<std::optional<double>>& b) {
  bool ca = false, cb = false;
  const auto da = dense(a, ca);
  const auto db = dense(b, cb);
  if (!ca || !cb) return std::nullopt;
  try {
    return metrics::kendall_tau_b(da, db);
  } catch (const UndefinedError&) {
    return std::nullopt;
  }
}

int cmd_correlate(const Options& o) {
  const auto ps = load_input(o);
  const auto rules = rules_or(o, {kAllRules.begin(), kAllRules.end()});
  const auto ids = estimators_or(o, all_estimators());
  const auto mm = measure_matrix(rules, ps, eval_options(o), ids);
  io::CsvTable by_rule{{"rule", "a", "b", "tau_b"}, {}};
  for (auto r : rules)
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const auto v = tau_or_na(mm.column(mm.column_index(r, ids[i])), mm.column(mm.column_index(r, ids[j])));
        by_rule.rows.push_back({std::string(to_string(r)), ids[i].name(), ids[j].name(), io::format_cell(v)});
      }
  io::CsvTable by_est{{"estimator", "a", "b", "tau_b"}, {}};
  for (const auto& id : ids)
    for (std::size_t i = 0; i < rules.size(); ++i)
      for (std::size_t j = i + 1; j < rules.size(); ++j) {
        const auto v = tau_or_na(mm.column(mm.column_index(rules[i], id)), mm.column(mm.column_index(rules[j], id)));
        by_est.rows.push_back(
            {id.name(), std::string(to_string(rules[i])), std::string(to_string(rules[j])), io::format_cell(v)});
      }
  Output out(o, "correlate");
  out.csv("tau_estimators.csv", by_rule);
  out.csv("tau_rules.csv", by_est);
  out.manifest();
  return 0;
}

int cmd_active(const Options& o) {
  experiments::ActiveSetup s;
  s.pool_size = o.pool_size;
  s.test_size = o.test_size;
  s.loop.iterations = o.iterations;
  s.loop.batch = o.batch;
  if (o.members) s.loop.members = o.members;
  s.loop.train.epochs = o.epochs;
  s.loop.train.min_steps = o.min_steps;
  if (s.initial >= s.pool_size) throw UsageError("--pool-size must exceed the initial labelled set");

  const auto rules = rules_or(o, {ScoringRule::LOG});
  const auto ids = estimators_or(o, {EstimatorId::excess({ApproximationId::BA, ApproximationId::BA})});
  std::vector<std::string> names;
  std::vector<trainer::ActiveLearningResult> runs;
  for (auto r : rules)
    for (const auto& id : ids) {
      names.push_back(std::string(to_string(r)) + "_" + id.name());
      runs.push_back(experiments::run_active(s, trainer::Acquisition::measure(r, id), o.seed));
    }
  names.push_back("Random");
  runs.push_back(experiments::run_active(s, trainer::Acquisition::random(), o.seed));

  io::CsvTable t{{"iteration", "labelled"}, {}};
  for (const auto& n : names) t.header.push_back(n);
  std::size_t rounds = 0;
  for (const auto& r : runs) rounds = std::max(rounds, r.nll.size());
  for (std::size_t it = 0; it < rounds; ++it) {
    std::vector<std::string> row{std::to_string(it), std::to_string(std::min(s.pool_size, s.initial + it * s.loop.batch))};
    for (const auto& r : runs) row.push_back(it < r.nll.size() ? io::format_double(r.nll[it]) : "NA");
    t.rows.push_back(std::move(row));
  }
  bool truncated = false;
  for (const auto& r : runs) truncated = truncated || r.truncated;
  Output out(o, "active");
  out.csv("active_nll.csv", t);
  out.manifest({{"truncated", truncated}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty measures for Gaussian ensemble regression"};
  app.set_version_flag("--version", REGUNC_VERSION);
  app.require_subcommand(1);
  Options o;

  app.add_option("--input", o.input, "Prediction set (JSON)");
  app.add_option("--rules", o.rules, "Comma-separated scoring rules: CRPS,LOG,QUADRATIC,SE");
  app.add_option("--estimators", o.estimators, "Comma-separated estimator names, e.g. Bayes_1,Exc_3a_2");
  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_flag("--oracle-fallback", o.oracle_fallback, "Fill cells without a closed form by quadrature");
  app.add_option("--output-dir", o.output_dir, "Directory for outputs")->capture_default_str();
  app.add_option("--trials", o.trials, "oracle-check: random ensembles")->capture_default_str();
  app.add_option("--members", o.members, "Ensemble size");
  app.add_option("--iterations", o.iterations, "active: acquisition rounds")->capture_default_str();
  app.add_option("--batch", o.batch, "active: points acquired per round")->capture_default_str();
  app.add_option("--kind", o.kind, "shift: kind or 'all'")->capture_default_str();
  app.add_option("--replicates", o.replicates, "shift: posterior replicates")->capture_default_str();
  app.add_option("--n-train", o.n_train, "Training points")->capture_default_str();
  app.add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  app.add_option("--grid-points", o.grid_points, "synth-demo: grid size on [-7, 7]")->capture_default_str();
  app.add_option("--pool-size", o.pool_size, "active: unlabelled pool size")->capture_default_str();
  app.add_option("--test-size", o.test_size, "active: held-out set size")->capture_default_str();
  app.add_option("--min-steps", o.min_steps, "active: optimizer steps per round")->capture_default_str();

  std::map<std::string, std::function<int(const Options&)>> commands = {
      {"measures", cmd_measures},   {"oracle-check", cmd_oracle_check}, {"shift", cmd_shift},
      {"synth-demo", cmd_synth_demo}, {"train", cmd_train},           {"selective", cmd_selective},
      {"ood", cmd_ood},             {"correlate", cmd_correlate},     {"active", cmd_active}};
  const std::map<std::string, std::string> help = {
      {"measures", "Per-point risk estimates"},
      {"oracle-check", "Compare closed forms against the quadrature oracle"},
      {"shift", "Direction table under location and scale shifts"},
      {"synth-demo", "Train on the two-curve problem and emit measures on a grid"},
      {"train", "Train an ensemble and write a checkpoint and predictions"},
      {"selective", "Prediction-reject ratios"},
      {"ood", "AUROC between group 'id' and other groups"},
      {"correlate", "Kendall tau_b between measures"},
      {"active", "Active learning NLL trajectories"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name))->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return commands.at(name)(o);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const TrainingError& e) {
    std::cerr << "training failure (member " << e.member() << "): " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
