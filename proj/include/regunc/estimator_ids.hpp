#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regunc/errors.hpp"

namespace regunc {

/// How a distribution slot is approximated from the ensemble.
///   BA  (1)  Bayesian averaging over the members
///   ENS (2)  the posterior predictive mixture
///   MM  (3a) moment-matched Gaussian surrogate
///   AV  (3b) averaged-variance Gaussian surrogate
enum class ApproximationId { BA, ENS, MM, AV };

inline constexpr std::array<ApproximationId, 4> kAllApproximations = {
    ApproximationId::BA, ApproximationId::ENS, ApproximationId::MM, ApproximationId::AV};

inline std::string_view label(ApproximationId a) {
  switch (a) {
    case ApproximationId::BA: return "1";
    case ApproximationId::ENS: return "2";
    case ApproximationId::MM: return "3a";
    case ApproximationId::AV: return "3b";
  }
  return "?";
}

enum class RiskKind { Total, Bayes, Excess };

inline std::string_view label(RiskKind k) {
  switch (k) {
    case RiskKind::Total: return "Tot";
    case RiskKind::Bayes: return "Bayes";
    case RiskKind::Excess: return "Exc";
  }
  return "?";
}

/// (prediction-side approximation, label-side approximation).
struct ApproxPair {
  ApproximationId pred;
  ApproximationId label;
  friend bool operator==(const ApproxPair&, const ApproxPair&) = default;
};

/// Pairs reported for total and excess risk.
inline constexpr std::array<ApproxPair, 6> kReportedPairs = {{
    {ApproximationId::BA, ApproximationId::BA},
    {ApproximationId::ENS, ApproximationId::BA},
    {ApproximationId::MM, ApproximationId::BA},
    {ApproximationId::AV, ApproximationId::BA},
    {ApproximationId::MM, ApproximationId::ENS},
    {ApproximationId::AV, ApproximationId::ENS},
}};

/// (1,2) is not reported but is needed for the excess-risk identity
/// Exc(1,1) = Exc(2,1) + Exc(1,2).
inline constexpr ApproxPair kReversePair = {ApproximationId::BA, ApproximationId::ENS};

inline bool is_supported_pair(ApproxPair p) {
  if (p == kReversePair) return true;
  for (const auto& q : kReportedPairs)
    if (q == p) return true;
  return false;
}

/// One cell of the risk matrix. Bayes risks carry only `first`.
struct EstimatorId {
  RiskKind kind;
  ApproximationId first;
  std::optional<ApproximationId> second;

  static EstimatorId bayes(ApproximationId a) { return {RiskKind::Bayes, a, std::nullopt}; }
  static EstimatorId excess(ApproxPair p) { return checked(RiskKind::Excess, p); }
  static EstimatorId total(ApproxPair p) { return checked(RiskKind::Total, p); }

  ApproxPair pair() const {
    if (!second) throw UsageError("Bayes estimator has no approximation pair");
    return {first, *second};
  }

  /// e.g. "Bayes_3a", "Exc_1_1", "Tot_3b_2".
  std::string name() const {
    std::string s(label(kind));
    s += '_';
    s += label(first);
    if (second) {
      s += '_';
      s += label(*second);
    }
    return s;
  }

  friend bool operator==(const EstimatorId&, const EstimatorId&) = default;

 private:
  static EstimatorId checked(RiskKind k, ApproxPair p) {
    if (!is_supported_pair(p)) throw UsageError("unsupported approximation pair");
    return {k, p.pred, p.label};
  }
};

/// The 16 reported estimators in canonical column order: 4 Bayes, 6 excess,
/// 6 total.
inline std::vector<EstimatorId> all_estimators() {
  std::vector<EstimatorId> out;
  for (auto a : kAllApproximations) out.push_back(EstimatorId::bayes(a));
  for (auto p : kReportedPairs) out.push_back(EstimatorId::excess(p));
  for (auto p : kReportedPairs) out.push_back(EstimatorId::total(p));
  return out;
}

inline EstimatorId parse_estimator(std::string_view s) {
  for (const auto& e : all_estimators())
    if (e.name() == s) return e;
  if (s == "Exc_1_2") return EstimatorId::excess(kReversePair);
  if (s == "Tot_1_2") return EstimatorId::total(kReversePair);
  throw UsageError("unknown estimator '" + std::string(s) + "'");
}

enum class Availability { ClosedForm, QuadratureRequired, IdenticallyZero };

inline std::string_view to_string(Availability a) {
  switch (a) {
    case Availability::ClosedForm: return "ClosedForm";
    case Availability::QuadratureRequired: return "QuadratureRequired";
    case Availability::IdenticallyZero: return "IdenticallyZero";
  }
  return "?";
}

}  // namespace regunc
