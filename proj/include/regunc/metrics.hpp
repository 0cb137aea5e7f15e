#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "regunc/errors.hpp"

namespace regunc::metrics {

struct RetentionCurve {
  std::vector<double> retention;  // ascending, within [0.5, 1]
  std::vector<double> mse;
};

/// n evenly spaced retention fractions from 0.5 to 1.
inline std::vector<double> default_retention_grid(std::size_t n = 51) {
  if (n < 2) throw UsageError("retention grid needs at least two points");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = 0.5 + 0.5 * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

namespace detail {

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite entry");
}

// Number of points kept at retention r: ceil(r n), guarded against r n landing
// a rounding error above an integer.
inline std::size_t kept(double r, std::size_t n) {
  const double k = std::ceil(r * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, n);
}

// Sum of the k smallest-key errors. Points whose keys tie with the cut-off are
// taken fractionally at their group mean, i.e. the expectation over random
// tie-breaking.
class SortedErrors {
 public:
  SortedErrors(std::span<const double> errors, std::span<const double> keys) {
    const std::size_t n = errors.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    prefix_.assign(n + 1, 0.0);
    group_start_.resize(n);
    group_end_.resize(n);
    for (std::size_t i = 0; i < n; ++i) prefix_[i + 1] = prefix_[i] + errors[order[i]];
    std::size_t start = 0;
    for (std::size_t i = 1; i <= n; ++i) {
      if (i == n || keys[order[i]] != keys[order[start]]) {
        for (std::size_t j = start; j < i; ++j) {
          group_start_[j] = start;
          group_end_[j] = i;
        }
        start = i;
      }
    }
  }

  double sum_of_first(std::size_t k) const {
    if (k == 0) return 0.0;
    const std::size_t last = k - 1;
    const std::size_t gs = group_start_[last];
    const std::size_t ge = group_end_[last];
    if (ge == k) return prefix_[k];
    const double group_sum = prefix_[ge] - prefix_[gs];
    const double taken = static_cast<double>(k - gs);
    return prefix_[gs] + group_sum * taken / static_cast<double>(ge - gs);
  }

 private:
  std::vector<double> prefix_;
  std::vector<std::size_t> group_start_;
  std::vector<std::size_t> group_end_;
};

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

}  // namespace detail

/// MSE over the ceil(r n) lowest-uncertainty points at each retention r.
inline RetentionCurve retention_curve(std::span<const double> squared_errors, std::span<const double> uncertainty,
                                      std::span<const double> grid) {
  if (squared_errors.size() != uncertainty.size())
    throw UsageError("retention_curve: errors and uncertainty differ in length");
  if (squared_errors.size() < 2) throw UsageError("retention_curve: need at least two points");
  detail::require_finite(squared_errors, "retention_curve");
  detail::require_finite(uncertainty, "retention_curve");
  if (!std::is_sorted(grid.begin(), grid.end())) throw UsageError("retention_curve: grid must be ascending");
  for (double r : grid)
    if (r < 0.5 || r > 1.0) throw UsageError("retention_curve: grid must lie within [0.5, 1]");

  const detail::SortedErrors sorted(squared_errors, uncertainty);
  const std::size_t n = squared_errors.size();
  RetentionCurve c;
  c.retention.assign(grid.begin(), grid.end());
  for (double r : grid) {
    const std::size_t k = detail::kept(r, n);
    c.mse.push_back(sorted.sum_of_first(k) / static_cast<double>(k));
  }
  return c;
}

/// Prediction-reject ratio over retention [0.5, 1]:
///   (AUC_unc - AUC_oracle) / (AUC_random - AUC_oracle).
/// 0 for a perfect ranking, 1 for an uninformative one; larger is worse.
inline double prr(std::span<const double> squared_errors, std::span<const double> uncertainty,
                  std::span<const double> grid = {}) {
  std::vector<double> g(grid.begin(), grid.end());
  if (g.empty()) g = default_retention_grid();
  const auto unc = retention_curve(squared_errors, uncertainty, g);
  const auto orc = retention_curve(squared_errors, squared_errors, g);
  const double overall = std::accumulate(squared_errors.begin(), squared_errors.end(), 0.0) /
                         static_cast<double>(squared_errors.size());
  const std::vector<double> flat(g.size(), overall);
  const double auc_unc = detail::trapezoid(g, unc.mse);
  const double auc_orc = detail::trapezoid(g, orc.mse);
  const double auc_rnd = detail::trapezoid(g, flat);
  const auto [lo, hi] = std::minmax_element(squared_errors.begin(), squared_errors.end());
  const double denom = auc_rnd - auc_orc;
  if (*lo == *hi || !(denom > 0.0)) throw UndefinedError("prr: oracle and random baselines coincide");
  return (auc_unc - auc_orc) / denom;
}

/// AUROC of a score separating `out` (positive) from `in` (negative):
/// P(out > in) + P(out = in)/2, via midranks.
inline double auroc(std::span<const double> in_scores, std::span<const double> out_scores) {
  if (in_scores.empty() || out_scores.empty()) throw UsageError("auroc: both groups must be non-empty");
  detail::require_finite(in_scores, "auroc");
  detail::require_finite(out_scores, "auroc");
  struct Item {
    double v;
    bool out;
  };
  std::vector<Item> all;
  all.reserve(in_scores.size() + out_scores.size());
  for (double v : in_scores) all.push_back({v, false});
  for (double v : out_scores) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
  // Twice the rank sum keeps midranks integral.
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const auto twice_mid = static_cast<std::int64_t>(i + 1 + j);  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].out) twice_rank_sum += twice_mid;
    i = j;
  }
  const auto n_out = static_cast<std::int64_t>(out_scores.size());
  const auto n_in = static_cast<std::int64_t>(in_scores.size());
  const std::int64_t twice_u = twice_rank_sum - n_out * (n_out + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_in * n_out));
}

/// Kendall's tau-b with tie correction, O(n log n) (Knight's algorithm).
inline double kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("kendall_tau_b: length mismatch");
  if (a.size() < 2) throw UsageError("kendall_tau_b: need at least two points");
  detail::require_finite(a, "kendall_tau_b");
  detail::require_finite(b, "kendall_tau_b");
  const std::size_t n = a.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });

  auto pairs = [](std::int64_t t) { return t * (t - 1) / 2; };
  const auto n0 = pairs(static_cast<std::int64_t>(n));
  std::int64_t ties_a = 0;
  std::int64_t ties_ab = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && a[idx[j]] == a[idx[i]]) ++j;
    ties_a += pairs(static_cast<std::int64_t>(j - i));
    for (std::size_t k = i; k < j;) {
      std::size_t l = k;
      while (l < j && b[idx[l]] == b[idx[k]]) ++l;
      ties_ab += pairs(static_cast<std::int64_t>(l - k));
      k = l;
    }
    i = j;
  }

  // Bottom-up merge sort on b counting strict inversions.
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = b[idx[i]];
  std::vector<double> buf(n);
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    std::swap(v, buf);
  }

  std::int64_t ties_b = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && v[j] == v[i]) ++j;
    ties_b += pairs(static_cast<std::int64_t>(j - i));
    i = j;
  }

  const std::int64_t denom_a = n0 - ties_a;
  const std::int64_t denom_b = n0 - ties_b;
  if (denom_a == 0 || denom_b == 0) throw UndefinedError("kendall_tau_b: a list is entirely tied");
  const std::int64_t concordant_minus_discordant = n0 - ties_a - ties_b + ties_ab - 2 * swaps;
  return static_cast<double>(concordant_minus_discordant) /
         std::sqrt(static_cast<double>(denom_a) * static_cast<double>(denom_b));
}

}  // namespace regunc::metrics
