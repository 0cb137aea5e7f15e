#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <vector>

#include "regunc/errors.hpp"

namespace regunc::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
  std::size_t intervals = 0;
  bool converged = false;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for kXgk[1], kXgk[3], kXgk[5], kXgk[7].
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  friend bool operator<(const Segment& x, const Segment& y) { return x.error < y.error; }
};

template <class F>
Segment gk15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  double absum = std::abs(kronrod);
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    absum += kWgk[j] * (std::abs(f1) + std::abs(f2));
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  const double value = kronrod * half;
  // Never claim more accuracy than rounding in the sum allows.
  const double roundoff = 50.0 * std::numeric_limits<double>::epsilon() * absum * std::abs(half);
  const double error = std::max(std::abs((kronrod - gauss) * half), roundoff);
  return {a, b, value, error};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (7/15) integration over [bp.front(),
/// bp.back()].
///
/// `breakpoints` seed the initial partition (they must be sorted); the
/// interval with the largest error estimate is bisected until the summed
/// error is below max(abs_tol, rel_tol * |value|) or `max_subdivisions`
/// bisections have been spent. Never throws; check `converged`.
template <class F>
Result integrate(F&& f, std::span<const double> breakpoints, double abs_tol, double rel_tol,
                 std::size_t max_subdivisions) {
  if (breakpoints.size() < 2) throw UsageError("integrate: need at least two breakpoints");
  std::priority_queue<detail::Segment> heap;
  double value = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double a = breakpoints[i];
    const double b = breakpoints[i + 1];
    if (!(b > a)) continue;
    auto s = detail::gk15(f, a, b);
    value += s.value;
    error += s.error;
    heap.push(s);
  }
  Result r;
  std::size_t splits = 0;
  while (!heap.empty() && error > std::max(abs_tol, rel_tol * std::abs(value)) && splits < max_subdivisions) {
    const auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      heap.push(worst);
      break;  // interval too small to split further
    }
    const auto left = detail::gk15(f, worst.a, mid);
    const auto right = detail::gk15(f, mid, worst.b);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++splits;
  }
  // Re-sum to shed drift from the incremental updates.
  r.intervals = heap.size();
  value = 0.0;
  error = 0.0;
  while (!heap.empty()) {
    value += heap.top().value;
    error += heap.top().error;
    heap.pop();
  }
  r.value = value;
  r.error = error;
  r.converged = error <= std::max(abs_tol, rel_tol * std::abs(value));
  return r;
}

}  // namespace regunc::quad
