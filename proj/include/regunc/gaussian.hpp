#pragma once

#include <cmath>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "regunc/errors.hpp"

namespace regunc {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2 pi)
inline constexpr double kInvSqrtPi = 0.56418958354775628695;   // 1/sqrt(pi)
inline constexpr double kSqrt2 = std::numbers::sqrt2;
inline constexpr double kLog2Pi = 1.8378770664093454836;       // log(2 pi)

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite input");
}

}  // namespace detail

/// Standard normal density phi(z).
inline double std_normal_pdf(double z) {
  detail::require_finite(z, "std_normal_pdf");
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

/// Standard normal CDF Phi(z) = erfc(-z/sqrt 2)/2.
///
/// Going through erfc rather than 1 + erf keeps full relative precision in
/// the lower tail; glibc's erfc is a piecewise rational minimax fit with
/// < 1 ulp error, so Phi inherits ~1e-16 relative accuracy everywhere.
inline double std_normal_cdf(double z) {
  detail::require_finite(z, "std_normal_cdf");
  return 0.5 * std::erfc(-z / kSqrt2);
}

/// N(x | mean, variance) density.
inline double normal_density(double x, double mean, double variance) {
  const double z = (x - mean) / std::sqrt(variance);
  // exp underflows to 0 for |z| > ~38; that is the correctly rounded value.
  return kInvSqrt2Pi * std::exp(-0.5 * z * z) / std::sqrt(variance);
}

inline constexpr double kDegenerateSigma = 1e-300;

/// A(mu, sigma) = E|X| for X ~ N(mu, sigma^2)
///              = 2 sigma phi(mu/sigma) + mu (2 Phi(mu/sigma) - 1).
/// sigma <= 1e-300 is treated as a point mass at mu.
inline double abs_moment(double mu, double sigma) {
  detail::require_finite(mu, "abs_moment");
  detail::require_finite(sigma, "abs_moment");
  if (sigma < 0.0) throw DomainError("abs_moment: negative sigma");
  if (sigma <= kDegenerateSigma) return std::abs(mu);
  const double z = mu / sigma;
  // 2 Phi(z) - 1 = erf(z / sqrt 2), which avoids cancellation near z = 0.
  return 2.0 * sigma * kInvSqrt2Pi * std::exp(-0.5 * z * z) + mu * std::erf(z / kSqrt2);
}

/// One ensemble member N(mean, variance).
class GaussianComponent {
 public:
  GaussianComponent(double mean, double variance) : mean_(mean), variance_(variance) {
    detail::require_finite(mean, "GaussianComponent mean");
    detail::require_finite(variance, "GaussianComponent variance");
    if (!(variance > 0.0)) throw DomainError("GaussianComponent: variance must be > 0");
  }

  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return variance_; }
  double stddev() const noexcept { return std::sqrt(variance_); }

  double pdf(double y) const { return normal_density(y, mean_, variance_); }
  double cdf(double y) const { return std_normal_cdf((y - mean_) / stddev()); }

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;

 private:
  double mean_;
  double variance_;
};

/// Equally weighted mixture of M >= 1 Gaussians (the ensemble posterior
/// predictive).
class GaussianEnsemble {
 public:
  explicit GaussianEnsemble(std::vector<GaussianComponent> components)
      : components_(std::move(components)) {
    if (components_.empty()) throw DomainError("GaussianEnsemble: needs at least one component");
  }
  GaussianEnsemble(std::initializer_list<GaussianComponent> components)
      : GaussianEnsemble(std::vector<GaussianComponent>(components)) {}

  std::size_t size() const noexcept { return components_.size(); }
  const GaussianComponent& operator[](std::size_t i) const { return components_[i]; }
  std::span<const GaussianComponent> components() const noexcept { return components_; }
  auto begin() const noexcept { return components_.begin(); }
  auto end() const noexcept { return components_.end(); }

  /// mu* = (1/M) sum mu_i
  double mean() const noexcept {
    double s = 0.0;
    for (const auto& c : components_) s += c.mean();
    return s / static_cast<double>(size());
  }

  /// (1/M) sum sigma_i^2
  double mean_member_variance() const noexcept {
    double s = 0.0;
    for (const auto& c : components_) s += c.variance();
    return s / static_cast<double>(size());
  }

  /// Population variance of the member means, (1/M) sum (mu_i - mu*)^2.
  double means_variance() const noexcept {
    const double m = mean();
    double s = 0.0;
    for (const auto& c : components_) s += (c.mean() - m) * (c.mean() - m);
    return s / static_cast<double>(size());
  }

  /// Mixture variance sigma*^2, evaluated as mean member variance plus the
  /// spread of the means (same value as (1/M) sum (s_i^2 + mu_i^2) - mu*^2
  /// without the cancellation).
  double variance() const noexcept { return mean_member_variance() + means_variance(); }

  double pdf(double y) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.pdf(y);
    return s / static_cast<double>(size());
  }

  double cdf(double y) const {
    double s = 0.0;
    for (const auto& c : components_) s += c.cdf(y);
    return s / static_cast<double>(size());
  }

  /// True when every member is the same Gaussian, so the mixture is that
  /// Gaussian.
  bool is_degenerate() const noexcept {
    for (const auto& c : components_)
      if (!(c == components_.front())) return false;
    return true;
  }

 private:
  std::vector<GaussianComponent> components_;
};

/// Moment-matched surrogate N(mu*, sigma*^2): same mean and variance as the
/// mixture.
struct MomentSurrogate {
  double mean;
  double variance;

  GaussianComponent component() const { return {mean, variance}; }
  operator GaussianComponent() const { return component(); }
};

/// Averaged-variance surrogate N(mu*, mean member variance).
struct AveragedSurrogate {
  double mean;
  double variance;

  GaussianComponent component() const { return {mean, variance}; }
  operator GaussianComponent() const { return component(); }
};

inline MomentSurrogate moment_surrogate(const GaussianEnsemble& ens) {
  return {ens.mean(), ens.variance()};
}

inline AveragedSurrogate averaged_surrogate(const GaussianEnsemble& ens) {
  return {ens.mean(), ens.mean_member_variance()};
}

}  // namespace regunc
