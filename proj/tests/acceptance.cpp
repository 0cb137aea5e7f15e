// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "regunc/regunc.hpp"

using namespace regunc;
using A = ApproximationId;

namespace {

constexpr ApproxPair P11{A::BA, A::BA};
constexpr ApproxPair P21{A::ENS, A::BA};
constexpr ApproxPair P12{A::BA, A::ENS};
constexpr ApproxPair P3a2{A::MM, A::ENS};
constexpr ApproxPair P3b2{A::AV, A::ENS};

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

EvalOptions with_fallback() {
  EvalOptions o;
  o.oracle_fallback = true;
  return o;
}

std::vector<GaussianEnsemble> random_ensembles(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const experiments::EnsembleSampler sampler;
  std::vector<GaussianEnsemble> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler(rng));
  return out;
}

double rel_slack(double v, double tol) { return tol * std::max(1.0, std::abs(v)); }

// 1 ----------------------------------------------------------------------
Outcome oracle_equivalence() {
  const auto rep = experiments::oracle_check(200, 0);
  double worst_rel = 0.0, worst_abs = 0.0;
  std::size_t cases = 0, failures = 0;
  for (const auto& r : rep.rows) {
    worst_rel = std::max(worst_rel, r.max_rel_error);
    worst_abs = std::max(worst_abs, r.max_abs_error);
    cases += r.cases;
    failures += r.failures + r.convergence_failures;
  }
  return {rep.passed(), fmt("%zu cells checked, %zu failures, max rel err %.2e, max abs err %.2e", cases, failures,
                            worst_rel, worst_abs)};
}

// 2 ----------------------------------------------------------------------
Outcome identity_suite() {
  const auto ens = random_ensembles(500, 2);
  const auto opts = with_fallback();
  std::size_t va = 0, vb = 0, vc = 0, vd = 0, ve = 0;
  double wa = 0, wb = 0, wc = 0, we = 0;
  for (const auto& e : ens) {
    for (auto r : {ScoringRule::CRPS, ScoringRule::QUADRATIC}) {
      RiskEvaluator ev(r, e);
      const double lhs = *ev.excess(P11), rhs = 2.0 * *ev.excess(P21);
      wa = std::max(wa, std::abs(lhs - rhs));
      va += std::abs(lhs - rhs) > rel_slack(lhs, 1e-12);
    }
    for (auto r : kAllRules) {
      RiskEvaluator ev(r, e, opts);
      const double lhs = *ev.excess(P11), rhs = *ev.excess(P21) + *ev.excess(P12);
      wb = std::max(wb, std::abs(lhs - rhs));
      vb += std::abs(lhs - rhs) > rel_slack(lhs, 1e-8);
      const double gap = *ev.bayes(A::ENS) - *ev.bayes(A::BA);
      const double e21 = *ev.excess(P21);
      wc = std::max(wc, std::abs(e21 - gap));
      vc += std::abs(e21 - gap) > rel_slack(gap, 1e-8) || e21 < -1e-10;
    }
    RiskEvaluator se(ScoringRule::SE, e);
    vd += *se.excess(P3a2) != 0.0 || *se.excess(P3b2) != 0.0;
    const double lhs = moment_surrogate(e).variance;
    const double rhs = averaged_surrogate(e).variance + e.means_variance();
    we = std::max(we, std::abs(lhs - rhs));
    ve += std::abs(lhs - rhs) > rel_slack(lhs, 1e-12);
  }
  const std::size_t total = va + vb + vc + vd + ve;
  return {total == 0, fmt("violations a=%zu b=%zu c=%zu d=%zu e=%zu; max dev a=%.1e b=%.1e c=%.1e e=%.1e", va, vb, vc,
                          vd, ve, wa, wb, wc, we)};
}

// 3 ----------------------------------------------------------------------
Outcome entropy_orderings() {
  const auto ens = random_ensembles(1000, 3);
  const auto opts = with_fallback();
  std::size_t log_v = 0, other_v = 0;
  for (const auto& e : ens) {
    RiskEvaluator lg(ScoringRule::LOG, e, opts);
    const double b1 = *lg.bayes(A::BA), b2 = *lg.bayes(A::ENS), b3 = *lg.bayes(A::MM);
    log_v += !(b1 <= b2 + 1e-8 && b2 <= b3 + 1e-8);
    for (auto r : {ScoringRule::CRPS, ScoringRule::QUADRATIC, ScoringRule::SE}) {
      const double mm = *bayes_risk(r, e, A::MM), ba = *bayes_risk(r, e, A::BA);
      other_v += mm < ba - rel_slack(ba, 1e-12);
    }
  }
  return {log_v + other_v == 0, fmt("1000 ensembles: LOG violations %zu, CRPS/QUADRATIC/SE violations %zu", log_v,
                                    other_v)};
}

// 4 ----------------------------------------------------------------------
Outcome shift_rows() {
  synthetic::UniformPosteriorSpec base;
  base.replicates = 100000;
  std::size_t ml_avail = 0, ml_flat = 0, vl_bayes = 0, vl_up = 0;
  for (const auto& r : synthetic::shift_report(kAllRules, base, synthetic::ShiftKind::MeanLocation)) {
    if (r.direction == synthetic::Direction::Unavailable) continue;
    ++ml_avail;
    ml_flat += r.direction == synthetic::Direction::Flat;
  }
  for (const auto& r : synthetic::shift_report(kAllRules, base, synthetic::ShiftKind::VarianceLocation)) {
    if (r.direction == synthetic::Direction::Unavailable || r.estimator.kind != RiskKind::Bayes) continue;
    ++vl_bayes;
    vl_up += r.direction == synthetic::Direction::Up;
  }
  const ScoringRule se[] = {ScoringRule::SE};
  std::string vs = "?";
  for (const auto& r : synthetic::shift_report(se, base, synthetic::ShiftKind::VarianceScale))
    if (r.estimator == EstimatorId::bayes(A::BA)) vs = std::string(to_string(r.direction));
  const bool ok = ml_avail > 0 && ml_flat == ml_avail && vl_bayes > 0 && vl_up == vl_bayes && vs == "flat";
  return {ok, fmt("mean-location flat %zu/%zu; variance-location Bayes up %zu/%zu; variance-scale SE Bayes_1 %s",
                  ml_flat, ml_avail, vl_up, vl_bayes, vs.c_str())};
}

// 5 ----------------------------------------------------------------------
std::vector<double> column(const PredictionSet& ps, ScoringRule r, const EstimatorId& id) {
  std::vector<double> out;
  for (const auto& p : ps) out.push_back(*evaluate_risk(r, p.ensemble, id));
  return out;
}

Outcome rank_facts() {
  experiments::TwoCurveSetup setup;
  setup.members = 5;
  setup.n_train = 400;
  setup.train.epochs = 30;
  const auto model = experiments::train_two_curve(setup, 5);
  const auto ps = experiments::predict_grid(model.predictor, experiments::linspace(-8.0, 8.0, 200));
  std::size_t checks = 0, ones = 0;
  double worst = 1.0;
  auto check = [&](const std::vector<double>& a, const std::vector<double>& b) {
    const double t = metrics::kendall_tau_b(a, b);
    ++checks;
    ones += t == 1.0;
    worst = std::min(worst, t);
  };
  for (auto r : {ScoringRule::CRPS, ScoringRule::QUADRATIC, ScoringRule::SE}) {
    check(column(ps, r, EstimatorId::total(P11)), column(ps, r, EstimatorId::total(P21)));
    check(column(ps, r, EstimatorId::excess(P11)), column(ps, r, EstimatorId::excess(P21)));
  }
  for (auto a : {A::MM, A::AV})
    for (std::size_t i = 0; i < kAllRules.size(); ++i)
      for (std::size_t j = i + 1; j < kAllRules.size(); ++j)
        check(column(ps, kAllRules[i], EstimatorId::bayes(a)), column(ps, kAllRules[j], EstimatorId::bayes(a)));
  return {ones == checks, fmt("%zu points from a trained ensemble: %zu/%zu pairs with tau_b = 1 (min %.6f)",
                              ps.size(), ones, checks, worst)};
}

// 6 ----------------------------------------------------------------------
Outcome gradients() {
  using namespace trainer;
  const auto data = experiments::to_dataset(synthetic::gen_two_curve_mixture(32, -4.0, 4.0, 6));
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    Mlp net(MlpSpec{});
    std::mt19937_64 rng(600 + point);
    net.initialize(rng);
    std::normal_distribution<double> jitter(0.0, 0.3);
    for (double& p : net.params()) p += jitter(rng);
    std::vector<double> grad(net.params().size(), 0.0);
    net.loss_and_gradient(data, idx, grad);
    const double h = 1e-5;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double keep = net.params()[k];
      net.params()[k] = keep + h;
      const double up = net.loss_and_gradient(data, idx, {});
      net.params()[k] = keep - h;
      const double down = net.loss_and_gradient(data, idx, {});
      net.params()[k] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(grad[k] - fd) / std::max(1e-3, std::abs(fd)));
    }
  }
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> mu(-5.0, 5.0), s2(0.05, 5.0), y(-8.0, 8.0);
  double nll_dev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double m = mu(rng), v = s2(rng), t = y(rng);
    nll_dev = std::max(nll_dev, std::abs(nll_natural(m / v, -0.5 / v, t) - nll_standard(m, v, t)));
  }
  return {worst < 1e-4 && nll_dev < 1e-12,
          fmt("max rel gradient error %.2e over 10 parameter points; max nll reparameterization gap %.1e", worst,
              nll_dev)};
}

// Criterion 7 trains these; 9 reuses them.
struct SeedModels {
  experiments::TwoCurveSetup setup;
  std::vector<experiments::TwoCurveModel> models;
};

SeedModels& fig2_models() {
  static SeedModels s = [] {
    SeedModels out;
    for (std::uint64_t seed = 0; seed < 5; ++seed) out.models.push_back(experiments::train_two_curve(out.setup, seed));
    return out;
  }();
  return s;
}

Outcome extrapolation() {
  auto& s = fig2_models();
  const auto grid = experiments::linspace(-7.0, 7.0, 281);
  int wins = 0;
  std::ostringstream d;
  for (const auto& m : s.models) {
    const auto c = experiments::extrapolation_contrast(m, ScoringRule::LOG, EstimatorId::excess(P11), grid);
    wins += c.extrapolation > c.in_support;
    d << fmt(" %.3g/%.3g", c.in_support, c.extrapolation);
  }
  return {wins >= 4, fmt("%d/5 seeds with extrapolation > in-support (in/out:", wins) + d.str() + ")"};
}

// 8 ----------------------------------------------------------------------
double brute_auroc(const std::vector<double>& in, const std::vector<double>& out) {
  double s = 0.0;
  for (double o : out)
    for (double i : in) s += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  return s / static_cast<double>(in.size() * out.size());
}

double brute_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  double c = 0, d = 0, ta = 0, tb = 0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double x = (a[i] - a[j]) * (b[i] - b[j]);
      ta += a[i] == a[j];
      tb += b[i] == b[j];
      c += x > 0;
      d += x < 0;
    }
  const double n0 = n * (n - 1) / 2.0;
  return (c - d) / std::sqrt((n0 - ta) * (n0 - tb));
}

Outcome metric_oracles() {
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> ex(1.0);
  std::uniform_int_distribution<int> small(0, 9), len(5, 80);
  double prr_self = 0.0, prr_const = 0.0, auroc_dev = 0.0, tau_dev = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> err(len(rng));
    for (auto& v : err) v = ex(rng);
    prr_self = std::max(prr_self, std::abs(metrics::prr(err, err)));
    const std::vector<double> flat(err.size(), 1.0);
    prr_const = std::max(prr_const, std::abs(metrics::prr(err, flat) - 1.0));

    std::vector<double> in(len(rng)), out(len(rng));
    for (auto& v : in) v = small(rng);
    for (auto& v : out) v = small(rng) + 0.5 * (t % 4);
    auroc_dev = std::max(auroc_dev, std::abs(metrics::auroc(in, out) - brute_auroc(in, out)));

    std::vector<double> a(len(rng) + 2), b;
    for (auto& v : a) v = small(rng);
    for (double v : a) b.push_back((t % 2 ? v : 0.0) + small(rng));
    a[0] = 0.0;
    a[1] = 9.0;
    b[0] = -1.0;
    b[1] = 20.0;
    tau_dev = std::max(tau_dev, std::abs(metrics::kendall_tau_b(a, b) - brute_tau_b(a, b)));
  }
  const bool ok = prr_self < 1e-12 && prr_const < 1e-12 && auroc_dev < 1e-12 && tau_dev < 1e-12;
  return {ok, fmt("50 instances: |PRR(e,e)| %.1e, |PRR(e,c)-1| %.1e, AUROC dev %.1e, tau_b dev %.1e", prr_self,
                  prr_const, auroc_dev, tau_dev)};
}

// 9 ----------------------------------------------------------------------
Outcome ood() {
  auto& s = fig2_models();
  int good = 0;
  std::ostringstream d;
  for (std::size_t seed = 0; seed < s.models.size(); ++seed) {
    const auto ps = experiments::id_ood_set(s.models[seed], s.setup, seed);
    bool all = true;
    d << " [";
    for (auto r : {ScoringRule::CRPS, ScoringRule::LOG, ScoringRule::SE}) {
      const double a = experiments::ood_auroc(ps, r, EstimatorId::excess(P11));
      all = all && a > 0.9;
      d << fmt("%s%.3f", r == ScoringRule::CRPS ? "" : " ", a);
    }
    d << "]";
    good += all;
  }
  return {good >= 4, fmt("%d/5 seeds with Exc_1_1 AUROC > 0.9 for CRPS, LOG, SE:", good) + d.str()};
}

// 10 ---------------------------------------------------------------------
Outcome active_learning() {
  const experiments::ActiveSetup setup;
  const auto acq = trainer::Acquisition::measure(ScoringRule::LOG, EstimatorId::excess(P11));
  double ex = 0.0, rnd = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ex += experiments::run_active(setup, acq, seed).nll.back();
    rnd += experiments::run_active(setup, trainer::Acquisition::random(), seed).nll.back();
  }
  ex /= 5.0;
  rnd /= 5.0;
  return {ex <= rnd, fmt("mean final held-out NLL: LOG Exc_1_1 %.4f, Random %.4f", ex, rnd)};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
  double limit_seconds;  // 0: no runtime requirement
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "oracle equivalence (200 trials)", oracle_equivalence, 120.0},
      {2, "identity suite (500 ensembles)", identity_suite, 0.0},
      {3, "entropy orderings (1000 ensembles)", entropy_orderings, 0.0},
      {4, "shift rows (1e5 replicates)", shift_rows, 60.0},
      {5, "structural rank equalities", rank_facts, 0.0},
      {6, "gradient correctness", gradients, 0.0},
      {7, "extrapolation contrast (5 seeds)", extrapolation, 180.0},
      {8, "metric oracles", metric_oracles, 0.0},
      {9, "OOD AUROC (5 seeds)", ood, 0.0},
      {10, "active learning vs random (5 seeds)", active_learning, 600.0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0.0 && secs > c.limit_seconds) {
      o.pass = false;
      o.detail += fmt("; runtime %.1fs exceeds %.0fs", secs, c.limit_seconds);
    }
    std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.number, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
