#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "regunc/estimator_ids.hpp"
#include "regunc/quadrature.hpp"
#include "regunc/scores.hpp"

// Numerical reference values for everything the closed forms compute. The
// integrands below are written from the definitions of the scores, not from
// the closed-form algebra in scores.hpp.

namespace regunc::oracle {

struct QuadratureConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  std::size_t max_subdivisions = 2000;
  double tail_width = 10.0;  // integration window, in component standard deviations

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw UsageError("QuadratureConfig: tolerances must be > 0");
    if (!(tail_width >= 8.0)) throw UsageError("QuadratureConfig: tail_width must be >= 8");
  }
};

struct McConfig {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    if (samples < 1000) throw UsageError("McConfig: need at least 1000 samples");
  }
};

struct Estimate {
  double value;
  double error;  // quadrature error estimate or Monte-Carlo standard error
};

namespace detail {

using regunc::detail::parts;

// Breakpoints covering [min(mu - w s), max(mu + w s)] with extra nodes around
// every component so narrow members are never stepped over.
inline std::vector<double> breakpoints(std::initializer_list<const Distribution*> dists, double width) {
  std::vector<double> bp;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* d : dists) {
    for (const auto& c : parts(*d)) {
      const double s = c.stddev();
      lo = std::min(lo, c.mean() - width * s);
      hi = std::max(hi, c.mean() + width * s);
      for (double k : {0.0, 0.5, 1.0, 2.0, 3.0, 4.5, 6.0}) {
        bp.push_back(c.mean() - k * s);
        bp.push_back(c.mean() + k * s);
      }
    }
  }
  bp.push_back(lo);
  bp.push_back(hi);
  std::erase_if(bp, [&](double x) { return x < lo || x > hi; });
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  return bp;
}

template <class F>
Estimate integrate(F&& f, const std::vector<double>& bp, const QuadratureConfig& cfg, const char* what) {
  const auto r = quad::integrate(f, bp, cfg.abs_tol, cfg.rel_tol, cfg.max_subdivisions);
  if (!r.converged)
    throw ConvergenceError(std::string(what) + ": quadrature did not converge", r.value, r.error);
  return {r.value, r.error};
}

inline double density(const Distribution& d, double y) {
  double s = 0.0;
  const auto p = parts(d);
  for (const auto& c : p) s += normal_density(y, c.mean(), c.variance());
  return s / static_cast<double>(p.size());
}

inline double cdf(const Distribution& d, double y) {
  double s = 0.0;
  const auto p = parts(d);
  for (const auto& c : p) s += std_normal_cdf((y - c.mean()) / c.stddev());
  return s / static_cast<double>(p.size());
}

inline constexpr double kDensityFloor = 1e-300;

/// -log p(y) via log-sum-exp, finite far into the tails.
inline double neg_log_density(const Distribution& d, double y) {
  const auto p = parts(d);
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  logs.reserve(p.size());
  for (const auto& c : p) {
    const double z = (y - c.mean()) / c.stddev();
    logs.push_back(-0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi * c.variance()));
    mx = std::max(mx, logs.back());
  }
  double s = 0.0;
  for (double l : logs) s += std::exp(l - mx);
  return -(mx + std::log(s / static_cast<double>(p.size())));
}

inline Estimate mean_of(const Distribution& d, const QuadratureConfig& cfg) {
  const auto bp = breakpoints({&d}, cfg.tail_width);
  return integrate([&](double y) { return y * density(d, y); }, bp, cfg, "mean");
}

}  // namespace detail

/// H(P) by quadrature. CRPS: integral of F(1-F); LOG: Shannon entropy;
/// QUADRATIC: -integral p^2; SE: variance.
inline Estimate oracle_entropy(ScoringRule rule, const Distribution& p, const QuadratureConfig& cfg = {}) {
  cfg.validate();
  const auto bp = detail::breakpoints({&p}, cfg.tail_width);
  switch (rule) {
    case ScoringRule::CRPS:
      return detail::integrate(
          [&](double t) {
            const double F = detail::cdf(p, t);
            return F * (1.0 - F);
          },
          bp, cfg, "CRPS entropy");
    case ScoringRule::LOG:
      return detail::integrate(
          [&](double y) {
            const double d = detail::density(p, y);
            return d < detail::kDensityFloor ? 0.0 : -d * std::log(d);
          },
          bp, cfg, "Shannon entropy");
    case ScoringRule::QUADRATIC: {
      auto e = detail::integrate(
          [&](double y) {
            const double d = detail::density(p, y);
            return d * d;
          },
          bp, cfg, "quadratic entropy");
      e.value = -e.value;
      return e;
    }
    case ScoringRule::SE: {
      const auto m = detail::mean_of(p, cfg);
      auto e = detail::integrate([&](double y) { return (y - m.value) * (y - m.value) * detail::density(p, y); },
                                 bp, cfg, "variance");
      return e;
    }
  }
  return {0.0, 0.0};
}

/// d(P, Q) by quadrature of the divergence integrand itself:
/// CRPS integral (F_P - F_Q)^2, LOG KL(Q||P), QUADRATIC integral (p - q)^2,
/// SE squared difference of the means.
inline Estimate oracle_divergence(ScoringRule rule, const Distribution& pred, const Distribution& label,
                                  const QuadratureConfig& cfg = {}) {
  cfg.validate();
  const auto bp = detail::breakpoints({&pred, &label}, cfg.tail_width);
  switch (rule) {
    case ScoringRule::CRPS:
      return detail::integrate(
          [&](double t) {
            const double d = detail::cdf(pred, t) - detail::cdf(label, t);
            return d * d;
          },
          bp, cfg, "CRPS divergence");
    case ScoringRule::LOG:
      return detail::integrate(
          [&](double y) {
            const double q = detail::density(label, y);
            if (q < detail::kDensityFloor) return 0.0;
            return q * (std::log(q) + detail::neg_log_density(pred, y));
          },
          bp, cfg, "KL divergence");
    case ScoringRule::QUADRATIC:
      return detail::integrate(
          [&](double y) {
            const double d = detail::density(pred, y) - detail::density(label, y);
            return d * d;
          },
          bp, cfg, "quadratic divergence");
    case ScoringRule::SE: {
      const auto mp = detail::mean_of(pred, cfg);
      const auto mq = detail::mean_of(label, cfg);
      const double d = mp.value - mq.value;
      return {d * d, 2.0 * std::abs(d) * (mp.error + mq.error)};
    }
  }
  return {0.0, 0.0};
}

/// S(P, Q) = E_{Y~Q} S(P, Y) by quadrature. The CRPS route is
/// integral (F_P - F_Q)^2 + integral F_Q (1 - F_Q), which avoids the kinked
/// indicator integrand.
inline Estimate oracle_expected_score(ScoringRule rule, const Distribution& pred, const Distribution& label,
                                      const QuadratureConfig& cfg = {}) {
  cfg.validate();
  const auto bp = detail::breakpoints({&pred, &label}, cfg.tail_width);
  switch (rule) {
    case ScoringRule::CRPS: {
      const auto d = oracle_divergence(rule, pred, label, cfg);
      const auto h = oracle_entropy(rule, label, cfg);
      return {d.value + h.value, d.error + h.error};
    }
    case ScoringRule::LOG:
      return detail::integrate(
          [&](double y) {
            const double q = detail::density(label, y);
            return q < detail::kDensityFloor ? 0.0 : q * detail::neg_log_density(pred, y);
          },
          bp, cfg, "log expected score");
    case ScoringRule::QUADRATIC: {
      const auto cross = detail::integrate(
          [&](double y) { return detail::density(pred, y) * detail::density(label, y); }, bp, cfg,
          "density overlap");
      const auto self = detail::integrate(
          [&](double y) {
            const double d = detail::density(pred, y);
            return d * d;
          },
          bp, cfg, "density overlap");
      return {-2.0 * cross.value + self.value, 2.0 * cross.error + self.error};
    }
    case ScoringRule::SE: {
      const auto mp = detail::mean_of(pred, cfg);
      return detail::integrate(
          [&](double y) { return (y - mp.value) * (y - mp.value) * detail::density(label, y); }, bp, cfg,
          "SE expected score");
    }
  }
  return {0.0, 0.0};
}

/// Monte-Carlo estimate of E_{Y~label} S(pred, Y): samples the label, scores
/// with the closed point-score formula. Deterministic for a fixed seed.
inline Estimate mc_expected_score(ScoringRule rule, const Distribution& pred, const Distribution& label,
                                  const McConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto q = detail::parts(label);
  std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
  // Welford running mean / variance.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= cfg.samples; ++n) {
    const auto& c = q[q.size() == 1 ? 0 : pick(rng)];
    const double y = c.mean() + c.stddev() * normal(rng);
    const double s = point_score(rule, pred, y);
    const double delta = s - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (s - mean);
  }
  const double n = static_cast<double>(cfg.samples);
  return {mean, std::sqrt(m2 / (n - 1.0) / n)};
}

namespace detail {

// The distributions an approximation puts into a slot; BA expands to every
// member and the estimate averages over them.
inline std::vector<Distribution> slot(const GaussianEnsemble& ens, ApproximationId a) {
  switch (a) {
    case ApproximationId::BA: return {ens.begin(), ens.end()};
    case ApproximationId::ENS: return {Distribution(ens)};
    case ApproximationId::MM: return {Distribution(moment_surrogate(ens).component())};
    case ApproximationId::AV: return {Distribution(averaged_surrogate(ens).component())};
  }
  return {};
}

}  // namespace detail

/// Reference value of one risk estimator, assembled from quadrature
/// entropies and divergences by the estimator's definition.
inline Estimate oracle_estimate(ScoringRule rule, const GaussianEnsemble& ens, const EstimatorId& id,
                                const QuadratureConfig& cfg = {}) {
  auto bayes = [&](ApproximationId a) {
    const auto dists = detail::slot(ens, a);
    Estimate acc{0.0, 0.0};
    for (const auto& d : dists) {
      const auto e = oracle_entropy(rule, d, cfg);
      acc.value += e.value;
      acc.error += e.error;
    }
    const double n = static_cast<double>(dists.size());
    return Estimate{acc.value / n, acc.error / n};
  };
  auto excess = [&](ApproxPair p) {
    if (rule == ScoringRule::SE && p.label == ApproximationId::ENS &&
        (p.pred == ApproximationId::MM || p.pred == ApproximationId::AV))
      return Estimate{0.0, 0.0};
    const auto preds = detail::slot(ens, p.pred);
    const auto labels = detail::slot(ens, p.label);
    Estimate acc{0.0, 0.0};
    for (const auto& a : preds)
      for (const auto& b : labels) {
        const auto e = oracle_divergence(rule, a, b, cfg);
        acc.value += e.value;
        acc.error += e.error;
      }
    const double n = static_cast<double>(preds.size() * labels.size());
    return Estimate{acc.value / n, acc.error / n};
  };
  switch (id.kind) {
    case RiskKind::Bayes: return bayes(id.first);
    case RiskKind::Excess: return excess(id.pair());
    case RiskKind::Total: {
      const auto b = bayes(id.first);
      const auto e = excess(id.pair());
      return {b.value + e.value, b.error + e.error};
    }
  }
  return {0.0, 0.0};
}

}  // namespace regunc::oracle
