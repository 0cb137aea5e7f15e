#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regunc/estimators.hpp"

namespace regunc::synthetic {

/// Closed-form posterior over member parameters: mu ~ U(mean_low, mean_high),
/// sigma^2 ~ U(var_low, var_high), independently per member.
struct UniformPosteriorSpec {
  double mean_low = -1.0;
  double mean_high = 1.0;
  double var_low = 1.0;
  double var_high = 2.0;
  std::size_t members = 10;
  std::size_t replicates = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    // Collapsed ranges (low == high) are allowed and give point masses.
    if (!(mean_low <= mean_high)) throw UsageError("UniformPosteriorSpec: mean_low > mean_high");
    if (!(var_low > 0.0 && var_low <= var_high)) throw UsageError("UniformPosteriorSpec: need 0 < var_low <= var_high");
    if (members == 0) throw UsageError("UniformPosteriorSpec: members must be >= 1");
  }
};

enum class ShiftKind { MeanLocation, VarianceLocation, MeanScale, VarianceScale };

inline constexpr std::array<ShiftKind, 4> kAllShifts = {ShiftKind::MeanLocation, ShiftKind::VarianceLocation,
                                                        ShiftKind::MeanScale, ShiftKind::VarianceScale};

inline std::string_view to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::MeanLocation: return "mean-location";
    case ShiftKind::VarianceLocation: return "variance-location";
    case ShiftKind::MeanScale: return "mean-scale";
    case ShiftKind::VarianceScale: return "variance-scale";
  }
  return "?";
}

inline ShiftKind parse_shift(std::string_view s) {
  for (auto k : kAllShifts)
    if (s == to_string(k)) return k;
  throw UsageError("unknown shift kind '" + std::string(s) + "'");
}

/// Replaces (not offsets) the affected range:
///   MeanLocation mu ~ U(1,3), VarianceLocation s2 ~ U(2,3),
///   MeanScale mu ~ U(-2,2), VarianceScale s2 ~ U(0.5,2.5).
inline UniformPosteriorSpec apply_shift(UniformPosteriorSpec spec, ShiftKind kind) {
  switch (kind) {
    case ShiftKind::MeanLocation: spec.mean_low = 1.0; spec.mean_high = 3.0; break;
    case ShiftKind::VarianceLocation: spec.var_low = 2.0; spec.var_high = 3.0; break;
    case ShiftKind::MeanScale: spec.mean_low = -2.0; spec.mean_high = 2.0; break;
    case ShiftKind::VarianceScale: spec.var_low = 0.5; spec.var_high = 2.5; break;
  }
  return spec;
}

/// Calls fn(ensemble) for every replicate. The draws are an affine map of
/// a uniform stream that depends only on (seed, members, replicates), so two
/// specs with the same seed see common random numbers.
template <class Fn>
void for_each_posterior_sample(const UniformPosteriorSpec& spec, Fn&& fn) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<GaussianComponent> members;
  members.reserve(spec.members);
  for (std::size_t r = 0; r < spec.replicates; ++r) {
    members.clear();
    for (std::size_t i = 0; i < spec.members; ++i) {
      const double u_mean = unit(rng);
      const double u_var = unit(rng);
      members.emplace_back(spec.mean_low + (spec.mean_high - spec.mean_low) * u_mean,
                           spec.var_low + (spec.var_high - spec.var_low) * u_var);
    }
    fn(GaussianEnsemble(members));
  }
}

inline std::vector<GaussianEnsemble> sample_uniform_posterior(const UniformPosteriorSpec& spec) {
  std::vector<GaussianEnsemble> out;
  out.reserve(spec.replicates);
  for_each_posterior_sample(spec, [&](GaussianEnsemble e) { out.push_back(std::move(e)); });
  return out;
}

enum class Direction { Up, Down, Flat, Unavailable };

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Up: return "up";
    case Direction::Down: return "down";
    case Direction::Flat: return "flat";
    case Direction::Unavailable: return "NA";
  }
  return "?";
}

struct ShiftRow {
  ScoringRule rule;
  EstimatorId estimator;
  double base_mean;     // NaN when unavailable
  double shifted_mean;  // NaN when unavailable
  Direction direction;
};

/// Classifies a change in the replicate mean: flat when
/// |shifted - base| < threshold * |base| (absolute 1e-12 guard near zero).
inline Direction classify_change(double base, double shifted, double flat_threshold) {
  const double delta = shifted - base;
  const double scale = std::abs(base);
  if (std::abs(delta) < flat_threshold * scale || std::abs(delta) < 1e-12) return Direction::Flat;
  return delta > 0.0 ? Direction::Up : Direction::Down;
}

/// Mean of every estimator over posterior replicates before and after a
/// shift, and the resulting direction per (rule, estimator).
inline std::vector<ShiftRow> shift_report(std::span<const ScoringRule> rules, const UniformPosteriorSpec& base,
                                          ShiftKind kind, double flat_threshold = 0.01,
                                          const EvalOptions& opts = {}) {
  const auto ids = all_estimators();
  const auto shifted = apply_shift(base, kind);

  auto means = [&](const UniformPosteriorSpec& spec) {
    std::vector<double> sums(rules.size() * ids.size(), 0.0);
    for_each_posterior_sample(spec, [&](const GaussianEnsemble& ens) {
      for (std::size_t r = 0; r < rules.size(); ++r) {
        RiskEvaluator ev(rules[r], ens, opts);
        for (std::size_t e = 0; e < ids.size(); ++e) {
          const auto av = availability(rules[r], ids[e]);
          if (av == Availability::QuadratureRequired && !opts.oracle_fallback) continue;
          if (const auto v = ev.evaluate(ids[e])) sums[r * ids.size() + e] += *v;
        }
      }
    });
    for (double& s : sums) s /= static_cast<double>(spec.replicates);
    return sums;
  };

  const auto before = means(base);
  const auto after = means(shifted);
  std::vector<ShiftRow> rows;
  for (std::size_t r = 0; r < rules.size(); ++r)
    for (std::size_t e = 0; e < ids.size(); ++e) {
      const auto av = availability(rules[r], ids[e]);
      if (av == Availability::QuadratureRequired && !opts.oracle_fallback) {
        rows.push_back({rules[r], ids[e], std::nan(""), std::nan(""), Direction::Unavailable});
        continue;
      }
      const double b = before[r * ids.size() + e];
      const double a = after[r * ids.size() + e];
      rows.push_back({rules[r], ids[e], b, a, classify_change(b, a, flat_threshold)});
    }
  return rows;
}

// Two-curve heteroscedastic regression problem.

/// Probability of drawing from the first curve.
inline double mixing_weight(double x) { return 1.0 / (1.0 + std::exp(1.2 * x)); }
inline double curve_mean1(double x) { return x / 3.0 + 1.2 * std::sin(0.8 * x); }
inline double curve_mean2(double x) { return x / 3.0 - 1.2 * std::cos(0.8 * x); }
inline double noise_scale(double x) {
  const double s = 0.5 + 0.5 * std::sin(0.7 * x);
  return 0.12 + 0.28 * s * s;
}

struct TwoCurveSample {
  double x;
  double y;
  int component;  // 1 or 2
};

/// y = mu_k(x) + eps * sigma(x), k = 1 with probability pi(x).
template <class Rng>
TwoCurveSample sample_two_curve_at(double x, Rng& rng) {
  std::bernoulli_distribution first(mixing_weight(x));
  std::normal_distribution<double> eps(0.0, 1.0);
  const int k = first(rng) ? 1 : 2;
  const double mu = k == 1 ? curve_mean1(x) : curve_mean2(x);
  return {x, mu + eps(rng) * noise_scale(x), k};
}

inline std::vector<TwoCurveSample> gen_two_curve_mixture(std::size_t n, double x_low, double x_high,
                                                         std::uint64_t seed) {
  if (n == 0) throw UsageError("gen_two_curve_mixture: n must be >= 1");
  if (!(x_low < x_high)) throw UsageError("gen_two_curve_mixture: need x_low < x_high");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x_low, x_high);
  std::vector<TwoCurveSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_two_curve_at(ux(rng), rng));
  return out;
}

}  // namespace regunc::synthetic
