#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "regunc/gaussian.hpp"

namespace regunc {

/// The four regression scoring rules. SE is proper but not strictly proper.
enum class ScoringRule { CRPS, LOG, QUADRATIC, SE };

inline constexpr std::array<ScoringRule, 4> kAllRules = {ScoringRule::CRPS, ScoringRule::LOG,
                                                         ScoringRule::QUADRATIC, ScoringRule::SE};

inline std::string_view to_string(ScoringRule r) {
  switch (r) {
    case ScoringRule::CRPS: return "CRPS";
    case ScoringRule::LOG: return "LOG";
    case ScoringRule::QUADRATIC: return "QUADRATIC";
    case ScoringRule::SE: return "SE";
  }
  return "?";
}

inline ScoringRule parse_rule(std::string_view s) {
  for (auto r : kAllRules)
    if (s == to_string(r)) return r;
  if (s == "QUAD" || s == "quadratic") return ScoringRule::QUADRATIC;
  if (s == "crps") return ScoringRule::CRPS;
  if (s == "log") return ScoringRule::LOG;
  if (s == "se") return ScoringRule::SE;
  throw UsageError("unknown scoring rule '" + std::string(s) + "'");
}

/// A single Gaussian or a uniform Gaussian mixture. Surrogates convert to
/// GaussianComponent.
using Distribution = std::variant<GaussianComponent, GaussianEnsemble>;

/// std::nullopt marks a quantity with no closed form (route to the oracle).
using ClosedForm = std::optional<double>;

namespace detail {

// Uniform-weight mixture seen as a span of components; a lone Gaussian is a
// one-element span.
inline std::span<const GaussianComponent> parts(const Distribution& d) {
  if (const auto* g = std::get_if<GaussianComponent>(&d)) return {g, 1};
  return std::get<GaussianEnsemble>(d).components();
}

inline bool is_single_gaussian(const Distribution& d) {
  if (std::holds_alternative<GaussianComponent>(d)) return true;
  return std::get<GaussianEnsemble>(d).is_degenerate();
}

inline const GaussianComponent& first_part(const Distribution& d) { return parts(d).front(); }

inline double mixture_mean(std::span<const GaussianComponent> p) {
  double s = 0.0;
  for (const auto& c : p) s += c.mean();
  return s / static_cast<double>(p.size());
}

inline double mixture_variance(std::span<const GaussianComponent> p) {
  const double m = mixture_mean(p);
  double s = 0.0;
  for (const auto& c : p) s += c.variance() + (c.mean() - m) * (c.mean() - m);
  return s / static_cast<double>(p.size());
}

// (1/(|p||q|)) sum_ij E|X_i - Y_j| with X_i ~ p_i, Y_j ~ q_j independent.
inline double mean_abs_difference(std::span<const GaussianComponent> p,
                                  std::span<const GaussianComponent> q) {
  double s = 0.0;
  for (const auto& a : p)
    for (const auto& b : q) s += abs_moment(a.mean() - b.mean(), std::sqrt(a.variance() + b.variance()));
  return s / static_cast<double>(p.size() * q.size());
}

// (1/(|p||q|)) sum_ij N(mu_i | mu_j, s_i^2 + s_j^2) = integral of p*q.
inline double density_overlap(std::span<const GaussianComponent> p,
                              std::span<const GaussianComponent> q) {
  double s = 0.0;
  for (const auto& a : p)
    for (const auto& b : q) s += normal_density(a.mean(), b.mean(), a.variance() + b.variance());
  return s / static_cast<double>(p.size() * q.size());
}

// E_{Y~q}[-log p(Y)] for Gaussian p, averaged over the label components.
inline double log_cross_entropy(const GaussianComponent& p, std::span<const GaussianComponent> q) {
  double s = 0.0;
  for (const auto& b : q) {
    const double d = b.mean() - p.mean();
    s += 0.5 * (kLog2Pi + std::log(p.variance())) + (b.variance() + d * d) / (2.0 * p.variance());
  }
  return s / static_cast<double>(q.size());
}

}  // namespace detail

/// S(P, y) for one observed target.
///
/// Mixture predictions are accepted as well: CRPS uses
/// (1/M) sum E|X_i - y| - H(P), LOG is -log of the mixture density, and
/// QUADRATIC is -2 p(y) + integral p^2.
inline double point_score(ScoringRule rule, const Distribution& pred, double y) {
  detail::require_finite(y, "point_score");
  const auto p = detail::parts(pred);
  switch (rule) {
    case ScoringRule::CRPS: {
      if (p.size() == 1) {
        const double s = p[0].stddev();
        const double z = (y - p[0].mean()) / s;
        return s * (2.0 * std_normal_pdf(z) + z * (2.0 * std_normal_cdf(z) - 1.0) - kInvSqrtPi);
      }
      double s = 0.0;
      for (const auto& c : p) s += abs_moment(c.mean() - y, c.stddev());
      return s / static_cast<double>(p.size()) - 0.5 * detail::mean_abs_difference(p, p);
    }
    case ScoringRule::LOG: {
      if (p.size() == 1) {
        const double d = y - p[0].mean();
        return 0.5 * (kLog2Pi + std::log(p[0].variance())) + d * d / (2.0 * p[0].variance());
      }
      return -std::log(std::get<GaussianEnsemble>(pred).pdf(y));
    }
    case ScoringRule::QUADRATIC: {
      double dens = 0.0;
      for (const auto& c : p) dens += c.pdf(y);
      dens /= static_cast<double>(p.size());
      return -2.0 * dens + detail::density_overlap(p, p);
    }
    case ScoringRule::SE: {
      const double d = y - detail::mixture_mean(p);
      return d * d;
    }
  }
  return 0.0;
}

/// Entropy H(P) = S(P, P). LOG on a genuine mixture has no closed form.
inline ClosedForm entropy(ScoringRule rule, const Distribution& dist) {
  const auto p = detail::parts(dist);
  const bool single = detail::is_single_gaussian(dist);
  switch (rule) {
    case ScoringRule::CRPS:
      if (single) return p[0].stddev() * kInvSqrtPi;
      return 0.5 * detail::mean_abs_difference(p, p);
    case ScoringRule::LOG:
      if (single) return 0.5 * (kLog2Pi + 1.0 + std::log(p[0].variance()));
      return std::nullopt;
    case ScoringRule::QUADRATIC:
      if (single) return -0.5 * kInvSqrtPi / p[0].stddev();
      return -detail::density_overlap(p, p);
    case ScoringRule::SE:
      return detail::mixture_variance(p);
  }
  return std::nullopt;
}

/// Expected score S(P, Q) = E_{Y~Q} S(P, Y). Linear in the label slot, so
/// mixture labels expand over their components. LOG with a mixture
/// prediction has no closed form.
inline ClosedForm expected_score(ScoringRule rule, const Distribution& pred, const Distribution& label) {
  const auto p = detail::parts(pred);
  const auto q = detail::parts(label);
  switch (rule) {
    case ScoringRule::CRPS: {
      const double hp = *entropy(rule, pred);
      return detail::mean_abs_difference(p, q) - hp;
    }
    case ScoringRule::LOG:
      if (!detail::is_single_gaussian(pred)) return std::nullopt;
      return detail::log_cross_entropy(p[0], q);
    case ScoringRule::QUADRATIC:
      return -2.0 * detail::density_overlap(p, q) + detail::density_overlap(p, p);
    case ScoringRule::SE: {
      const double d = detail::mixture_mean(p) - detail::mixture_mean(q);
      return d * d + detail::mixture_variance(q);
    }
  }
  return std::nullopt;
}

/// Divergence d(P, Q) = S(P, Q) - H(Q) >= 0, with P the prediction and Q the
/// label. Uses the direct pair forms where they exist.
inline ClosedForm divergence(ScoringRule rule, const Distribution& pred, const Distribution& label) {
  const bool p1 = detail::is_single_gaussian(pred);
  const bool q1 = detail::is_single_gaussian(label);
  if (p1 && q1) {
    const auto& a = detail::first_part(pred);
    const auto& b = detail::first_part(label);
    const double dm = a.mean() - b.mean();
    switch (rule) {
      case ScoringRule::CRPS:
        return abs_moment(dm, std::sqrt(a.variance() + b.variance())) -
               (a.stddev() + b.stddev()) * kInvSqrtPi;
      case ScoringRule::LOG:
        // KL(label || pred)
        return 0.5 * (std::log(a.variance() / b.variance()) + (b.variance() + dm * dm) / a.variance() - 1.0);
      case ScoringRule::QUADRATIC:
        return 0.5 * kInvSqrtPi / a.stddev() + 0.5 * kInvSqrtPi / b.stddev() -
               2.0 * normal_density(a.mean(), b.mean(), a.variance() + b.variance());
      case ScoringRule::SE:
        return dm * dm;
    }
  }
  if (rule == ScoringRule::SE) {
    const double dm = detail::mixture_mean(detail::parts(pred)) - detail::mixture_mean(detail::parts(label));
    return dm * dm;
  }
  const ClosedForm s = expected_score(rule, pred, label);
  const ClosedForm h = entropy(rule, label);
  if (!s || !h) return std::nullopt;
  return *s - *h;
}

}  // namespace regunc
