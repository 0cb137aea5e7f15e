#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "regunc/estimator_ids.hpp"
#include "regunc/oracle.hpp"
#include "regunc/prediction_set.hpp"
#include "regunc/scores.hpp"

// Closed-form risk estimators for a Gaussian ensemble.
//
// Notation: an approximation pair (a, b) puts approximation `a` in the
// prediction slot and `b` in the label slot of the divergence, and
//   Bayes^a     = H(label approximated by a)
//   Exc^{a,b}   = average of d(pred_a, label_b)
//   Tot^{a,b}   = Bayes^a + Exc^{a,b}.
// Bayesian averaging (1) expands a slot to every member and averages.

namespace regunc {

struct EvalOptions {
  /// Fill cells that need the Shannon entropy of the mixture by quadrature.
  bool oracle_fallback = false;
  oracle::QuadratureConfig quadrature{};
};

/// Static availability table for the risk matrix.
inline Availability availability(ScoringRule rule, const EstimatorId& id) {
  if (rule == ScoringRule::SE && id.kind == RiskKind::Excess && id.second == ApproximationId::ENS &&
      (id.first == ApproximationId::MM || id.first == ApproximationId::AV))
    return Availability::IdenticallyZero;
  if (rule == ScoringRule::LOG) {
    // Anything touching the mixture in a slot other than as an averaged
    // label needs its Shannon entropy or log density.
    if (id.kind == RiskKind::Bayes) {
      return id.first == ApproximationId::ENS ? Availability::QuadratureRequired : Availability::ClosedForm;
    }
    if (id.first == ApproximationId::ENS || id.second == ApproximationId::ENS)
      return Availability::QuadratureRequired;
  }
  return Availability::ClosedForm;
}

/// Evaluates risks for one ensemble under one rule. The mixture entropy and
/// every Bayes/excess value are memoized, so a full row costs O(M^2) and,
/// for LOG with the fallback on, a single quadrature.
class RiskEvaluator {
 public:
  RiskEvaluator(ScoringRule rule, const GaussianEnsemble& ens, EvalOptions opts = {})
      : rule_(rule), ens_(ens), opts_(std::move(opts)) {}

  ClosedForm bayes(ApproximationId a) const {
    auto& slot = bayes_cache_[static_cast<std::size_t>(a)];
    if (!slot) slot = compute_bayes(a);
    return *slot;
  }

  ClosedForm excess(ApproxPair p) const {
    if (!is_supported_pair(p)) throw UsageError("excess_risk: unsupported approximation pair");
    auto& slot = excess_cache_[pair_slot(p)];
    if (!slot) slot = compute_excess(p);
    return *slot;
  }

  ClosedForm total(ApproxPair p) const {
    const auto e = excess(p);
    const auto b = bayes(p.pred);
    if (!b || !e) return std::nullopt;
    return *b + *e;
  }

  ClosedForm evaluate(const EstimatorId& id) const {
    switch (id.kind) {
      case RiskKind::Bayes: return bayes(id.first);
      case RiskKind::Excess: return excess(id.pair());
      case RiskKind::Total: return total(id.pair());
    }
    return std::nullopt;
  }

 private:
  using A = ApproximationId;

  double m() const { return static_cast<double>(ens_.size()); }

  static std::size_t pair_slot(ApproxPair p) {
    for (std::size_t i = 0; i < kReportedPairs.size(); ++i)
      if (kReportedPairs[i] == p) return i;
    return kReportedPairs.size();  // the reverse pair (1,2)
  }

  ClosedForm mixture_entropy() const {
    if (!mixture_entropy_) {
      ClosedForm h = entropy(rule_, Distribution(ens_));
      if (!h && opts_.oracle_fallback)
        h = oracle::oracle_entropy(rule_, Distribution(ens_), opts_.quadrature).value;
      mixture_entropy_ = h;
    }
    return *mixture_entropy_;
  }

  Distribution surrogate(A a) const {
    return a == A::MM ? Distribution(moment_surrogate(ens_).component())
                      : Distribution(averaged_surrogate(ens_).component());
  }

  // S(P_ens, Q) for a Gaussian label Q, reusing the cached mixture entropy.
  // Not used for LOG (log of a mixture density has no closed form).
  double mixture_pred_score(const GaussianComponent& q) const {
    const auto mix = ens_.components();
    const std::span<const GaussianComponent> label(&q, 1);
    switch (rule_) {
      case ScoringRule::CRPS: return detail::mean_abs_difference(mix, label) - *mixture_entropy();
      case ScoringRule::QUADRATIC:
        // integral p^2 = -H(P_ens)
        return -2.0 * detail::density_overlap(mix, label) - *mixture_entropy();
      default: return *expected_score(rule_, Distribution(ens_), Distribution(q));
    }
  }

  ClosedForm compute_bayes(A a) const {
    switch (a) {
      case A::BA: {
        double s = 0.0;
        for (const auto& c : ens_) s += *entropy(rule_, Distribution(c));
        return s / m();
      }
      case A::ENS: return mixture_entropy();
      case A::MM:
      case A::AV: return entropy(rule_, surrogate(a));
    }
    return std::nullopt;
  }

  ClosedForm compute_excess(ApproxPair p) const {
    const Distribution mix(ens_);
    if (p.pred == A::BA && p.label == A::BA) {
      double s = 0.0;
      for (const auto& a : ens_)
        for (const auto& b : ens_) s += *divergence(rule_, Distribution(a), Distribution(b));
      return s / (m() * m());
    }
    if (p.pred == A::ENS && p.label == A::BA) {
      if (rule_ == ScoringRule::LOG) {
        // (1/M) sum KL(P_i || P_ens) = H(P_ens) - (1/M) sum H(P_i)
        const auto h = mixture_entropy();
        if (!h) return std::nullopt;
        return *h - *bayes(A::BA);
      }
      if (rule_ == ScoringRule::SE) {
        double s = 0.0;
        for (const auto& b : ens_) s += *divergence(rule_, mix, Distribution(b));
        return s / m();
      }
      double s = 0.0;
      for (const auto& b : ens_) s += mixture_pred_score(b) - *entropy(rule_, Distribution(b));
      return s / m();
    }
    // Remaining pairs put a single Gaussian in the prediction slot.
    const bool reverse = p.pred == A::BA;
    if (p.label == A::ENS && rule_ == ScoringRule::SE && !reverse) return 0.0;
    if (p.label == A::ENS) {
      const auto h = mixture_entropy();
      if (!h) return std::nullopt;
      double s = 0.0;
      if (reverse) {
        for (const auto& a : ens_) s += *expected_score(rule_, Distribution(a), mix);
        s /= m();
      } else {
        s = *expected_score(rule_, surrogate(p.pred), mix);
      }
      return s - *h;
    }
    // surrogate vs Bayesian-averaged label
    const Distribution sur = surrogate(p.pred);
    double s = 0.0;
    for (const auto& b : ens_) s += *divergence(rule_, sur, Distribution(b));
    return s / m();
  }

  ScoringRule rule_;
  const GaussianEnsemble& ens_;
  EvalOptions opts_;
  mutable std::optional<ClosedForm> mixture_entropy_;
  mutable std::array<std::optional<ClosedForm>, 4> bayes_cache_;
  mutable std::array<std::optional<ClosedForm>, kReportedPairs.size() + 1> excess_cache_;
};

inline ClosedForm bayes_risk(ScoringRule rule, const GaussianEnsemble& ens, ApproximationId a,
                             const EvalOptions& opts = {}) {
  return RiskEvaluator(rule, ens, opts).bayes(a);
}

inline ClosedForm excess_risk(ScoringRule rule, const GaussianEnsemble& ens, ApproxPair p,
                              const EvalOptions& opts = {}) {
  return RiskEvaluator(rule, ens, opts).excess(p);
}

inline ClosedForm total_risk(ScoringRule rule, const GaussianEnsemble& ens, ApproxPair p,
                             const EvalOptions& opts = {}) {
  return RiskEvaluator(rule, ens, opts).total(p);
}

inline ClosedForm evaluate_risk(ScoringRule rule, const GaussianEnsemble& ens, const EstimatorId& id,
                                const EvalOptions& opts = {}) {
  return RiskEvaluator(rule, ens, opts).evaluate(id);
}

struct MeasureColumn {
  ScoringRule rule;
  EstimatorId estimator;
  Availability availability;

  /// e.g. "CRPS_Exc_1_1"
  std::string name() const { return std::string(to_string(rule)) + "_" + estimator.name(); }
};

/// Per-point evaluation of every requested (rule, estimator). A cell is
/// empty when it needs quadrature and the fallback is off.
struct MeasureMatrix {
  std::vector<MeasureColumn> columns;
  std::vector<std::string> point_ids;
  std::vector<std::vector<std::optional<double>>> rows;

  std::size_t column_index(ScoringRule rule, const EstimatorId& id) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].rule == rule && columns[i].estimator == id) return i;
    throw UsageError("measure column not present");
  }

  /// Values of one column; std::nullopt entries are left in place.
  std::vector<std::optional<double>> column(std::size_t c) const {
    std::vector<std::optional<double>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline MeasureMatrix measure_matrix(std::span<const ScoringRule> rules, const PredictionSet& points,
                                    const EvalOptions& opts = {},
                                    std::span<const EstimatorId> estimators = {}) {
  if (points.empty()) throw UsageError("measure_matrix: empty prediction set");
  if (rules.empty()) throw UsageError("measure_matrix: no scoring rules requested");
  std::vector<EstimatorId> ids(estimators.begin(), estimators.end());
  if (ids.empty()) ids = all_estimators();

  MeasureMatrix mm;
  for (auto r : rules)
    for (const auto& id : ids) mm.columns.push_back({r, id, availability(r, id)});

  mm.rows.reserve(points.size());
  for (const auto& pt : points) {
    mm.point_ids.push_back(pt.id);
    std::vector<std::optional<double>> row;
    row.reserve(mm.columns.size());
    for (auto r : rules) {
      RiskEvaluator ev(r, pt.ensemble, opts);
      for (const auto& id : ids) {
        const auto av = availability(r, id);
        if (av == Availability::QuadratureRequired && !opts.oracle_fallback) {
          row.push_back(std::nullopt);
        } else if (av == Availability::IdenticallyZero) {
          row.push_back(0.0);
        } else {
          row.push_back(ev.evaluate(id));
        }
      }
    }
    mm.rows.push_back(std::move(row));
  }
  return mm;
}

}  // namespace regunc
