#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "regunc/estimators.hpp"
#include "regunc/metrics.hpp"
#include "regunc/oracle.hpp"
#include "regunc/synthetic.hpp"
#include "regunc/trainer.hpp"

// Experiment protocols shared by the command-line tool and the acceptance
// runner.

namespace regunc::experiments {

/// Ranges for random test ensembles.
struct EnsembleSampler {
  std::size_t min_members = 2;
  std::size_t max_members = 8;
  double mean_low = -5.0;
  double mean_high = 5.0;
  double var_low = 0.01;
  double var_high = 9.0;

  GaussianEnsemble operator()(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> m(min_members, max_members);
    std::uniform_real_distribution<double> mu(mean_low, mean_high);
    std::uniform_real_distribution<double> s2(var_low, var_high);
    const std::size_t n = m(rng);
    std::vector<GaussianComponent> c;
    c.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = mu(rng);
      c.emplace_back(a, s2(rng));
    }
    return GaussianEnsemble(std::move(c));
  }
};

/// Every estimator the library can evaluate: the 16 reported ones plus the
/// (1,2) pair.
inline std::vector<EstimatorId> extended_estimators() {
  auto ids = all_estimators();
  ids.push_back(EstimatorId::excess(kReversePair));
  ids.push_back(EstimatorId::total(kReversePair));
  return ids;
}

// ---------------------------------------------------------------------------
// Oracle equivalence

struct OracleCheckRow {
  ScoringRule rule;
  EstimatorId estimator;
  std::size_t cases = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t failures = 0;
  std::size_t convergence_failures = 0;
};

struct OracleCheckReport {
  std::vector<OracleCheckRow> rows;
  std::size_t trials = 0;
  double rel_tol = 1e-6;
  double abs_floor = 1e-10;

  bool passed() const {
    for (const auto& r : rows)
      if (r.failures || r.convergence_failures) return false;
    return true;
  }
};

/// Compares every closed-form estimator against the quadrature oracle on
/// `trials` random ensembles. A case passes when
/// |closed - oracle| <= max(abs_floor, rel_tol * |closed|).
inline OracleCheckReport oracle_check(std::size_t trials, std::uint64_t seed,
                                      const oracle::QuadratureConfig& qcfg = {}, double rel_tol = 1e-6,
                                      double abs_floor = 1e-10) {
  if (trials == 0) throw UsageError("oracle_check: trials must be >= 1");
  const EnsembleSampler sampler{1, 6, -3.0, 3.0, 0.05, 4.0};
  const auto ids = extended_estimators();
  OracleCheckReport rep;
  rep.trials = trials;
  rep.rel_tol = rel_tol;
  rep.abs_floor = abs_floor;
  for (auto r : kAllRules)
    for (const auto& id : ids) rep.rows.push_back({r, id});

  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto ens = sampler(rng);
    std::size_t row = 0;
    for (auto rule : kAllRules) {
      RiskEvaluator ev(rule, ens);
      for (const auto& id : ids) {
        auto& out = rep.rows[row++];
        const auto av = availability(rule, id);
        if (av == Availability::QuadratureRequired) continue;
        ++out.cases;
        try {
          const double closed = *ev.evaluate(id);
          const double ref = oracle::oracle_estimate(rule, ens, id, qcfg).value;
          const double err = std::abs(closed - ref);
          out.max_abs_error = std::max(out.max_abs_error, err);
          if (std::abs(closed) > abs_floor) out.max_rel_error = std::max(out.max_rel_error, err / std::abs(closed));
          if (!(err <= std::max(abs_floor, rel_tol * std::abs(closed)))) ++out.failures;
        } catch (const ConvergenceError&) {
          ++out.convergence_failures;
        }
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Two-curve regression

struct TwoCurveSetup {
  double x_low = -4.0;
  double x_high = 4.0;
  std::size_t n_train = 1200;
  std::size_t members = 10;
  trainer::MlpSpec spec{};
  trainer::TrainConfig train{};
};

inline trainer::Dataset to_dataset(const std::vector<synthetic::TwoCurveSample>& s) {
  trainer::Dataset d;
  for (const auto& p : s) {
    const double x[1] = {p.x};
    d.push_back(x, p.y);
  }
  return d;
}

// Separate generator streams for the data and the network initializations.
inline std::uint64_t data_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed * 0x9E3779B97F4A7C15ULL + stream * 0xBF58476D1CE4E5B9ULL + 1;
}

struct TwoCurveModel {
  std::vector<synthetic::TwoCurveSample> train;
  trainer::EnsemblePredictor predictor;
};

inline TwoCurveModel train_two_curve(const TwoCurveSetup& setup, std::uint64_t seed) {
  TwoCurveModel m;
  m.train = synthetic::gen_two_curve_mixture(setup.n_train, setup.x_low, setup.x_high, data_seed(seed, 0));
  auto tc = setup.train;
  tc.seed = seed;
  m.predictor = trainer::train_ensemble(to_dataset(m.train), setup.members, setup.spec, tc);
  return m;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

/// Predictions on an evenly spaced grid, labelled by x.
inline PredictionSet predict_grid(const trainer::EnsemblePredictor& pred, const std::vector<double>& xs) {
  auto ps = trainer::predict(pred, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) ps[i].id = "x" + std::to_string(i);
  return ps;
}

struct ExtrapolationContrast {
  double in_support = 0.0;     // mean over |x| < in_support_radius
  double extrapolation = 0.0;  // mean over |x| > training max + margin
};

inline ExtrapolationContrast extrapolation_contrast(const TwoCurveModel& m, ScoringRule rule, const EstimatorId& id,
                                                    const std::vector<double>& grid, double in_support_radius = 2.0,
                                                    double margin = 1.0, const EvalOptions& opts = {}) {
  double train_max = 0.0;
  for (const auto& s : m.train) train_max = std::max(train_max, std::abs(s.x));
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_n = 0, out_n = 0;
  for (double x : grid) {
    const double xv[1] = {x};
    const auto ens = m.predictor.predict_one(xv);
    const auto v = evaluate_risk(rule, ens, id, opts);
    if (!v) throw UsageError("extrapolation_contrast: measure not available");
    if (std::abs(x) < in_support_radius) {
      in_sum += *v;
      ++in_n;
    } else if (std::abs(x) > train_max + margin) {
      out_sum += *v;
      ++out_n;
    }
  }
  if (in_n == 0 || out_n == 0) throw UsageError("extrapolation_contrast: grid misses a region");
  return {in_sum / static_cast<double>(in_n), out_sum / static_cast<double>(out_n)};
}

/// Held-out in-distribution points (group "id") drawn like the training data
/// and a shifted block (group "ood"), both with targets.
inline PredictionSet id_ood_set(const TwoCurveModel& m, const TwoCurveSetup& setup, std::uint64_t seed,
                                std::size_t n_id = 200, std::size_t n_ood = 200, double ood_low = 8.0,
                                double ood_high = 12.0) {
  PredictionSet out;
  auto add = [&](const std::vector<synthetic::TwoCurveSample>& s, const char* group) {
    for (const auto& p : s) {
      const double xv[1] = {p.x};
      out.push_back({std::string(group) + std::to_string(out.size()), m.predictor.predict_one(xv), p.y,
                     std::string(group)});
    }
  };
  add(synthetic::gen_two_curve_mixture(n_id, setup.x_low, setup.x_high, data_seed(seed, 1)), "id");
  add(synthetic::gen_two_curve_mixture(n_ood, ood_low, ood_high, data_seed(seed, 2)), "ood");
  return out;
}

/// AUROC of one measure separating group "id" (negative) from every other
/// group (positive).
inline double ood_auroc(const PredictionSet& ps, ScoringRule rule, const EstimatorId& id,
                        const EvalOptions& opts = {}) {
  std::vector<double> in, out;
  for (const auto& p : ps) {
    if (!p.group) throw UsageError("ood: point '" + p.id + "' is missing required field 'group'");
    const auto v = evaluate_risk(rule, p.ensemble, id, opts);
    if (!v) throw UsageError("ood: measure not available");
    (*p.group == "id" ? in : out).push_back(*v);
  }
  return metrics::auroc(in, out);
}

// ---------------------------------------------------------------------------
// Active learning

struct ActiveSetup {
  double x_low = -6.0;
  double x_high = 6.0;
  std::size_t pool_size = 1000;
  std::size_t initial = 20;
  std::size_t test_size = 1000;
  trainer::ActiveLearningConfig loop = default_loop();

  // Every round gets the optimizer budget of a 1200-point, 100-epoch run
  // (38 batches x 100 epochs), however few points are labelled.
  static trainer::ActiveLearningConfig default_loop() {
    trainer::ActiveLearningConfig c;
    c.train.min_steps = 3800;
    return c;
  }
};

struct ActiveRun {
  trainer::Dataset pool;
  trainer::Dataset test;
  std::vector<std::size_t> initial;
};

/// Pool, held-out test set and initial labelled indices for one seed. The
/// same seed gives the same split for every acquisition function.
inline ActiveRun make_active_run(const ActiveSetup& s, std::uint64_t seed) {
  ActiveRun r;
  r.pool = to_dataset(synthetic::gen_two_curve_mixture(s.pool_size, s.x_low, s.x_high, data_seed(seed, 3)));
  r.test = to_dataset(synthetic::gen_two_curve_mixture(s.test_size, s.x_low, s.x_high, data_seed(seed, 4)));
  std::vector<std::size_t> all(s.pool_size);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::mt19937_64 rng(data_seed(seed, 5));
  std::shuffle(all.begin(), all.end(), rng);
  r.initial.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(s.initial, all.size())));
  return r;
}

inline trainer::ActiveLearningResult run_active(const ActiveSetup& s, const trainer::Acquisition& acq,
                                                std::uint64_t seed) {
  const auto run = make_active_run(s, seed);
  auto cfg = s.loop;
  cfg.seed = data_seed(seed, 6);
  cfg.train.seed = seed;
  return trainer::active_learning_loop(run.pool, run.initial, run.test, acq, cfg);
}

}  // namespace regunc::experiments
