#pragma once

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <type_traits>

namespace fclip {

struct QuadratureResult {
  double value = 0.0;
  std::size_t intervals = 0;
  bool converged = true;
};

inline constexpr std::size_t kMaxQuadratureIntervals = 1'000'000;

namespace detail {

template <typename F>
struct SimpsonState {
  F& f;
  std::size_t intervals = 0;
  bool converged = true;

  double step(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    ++intervals;
    if (std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    if (depth <= 0 || intervals >= kMaxQuadratureIntervals) {
      converged = false;
      return left + right + diff / 15.0;
    }
    return step(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           step(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  }
};

}  // namespace detail

/// Adaptive Simpson with Richardson correction on [a, b] to absolute
/// tolerance tol. Gives up refining after 1e6 subdivisions or depth 60.
template <typename F>
QuadratureResult adaptive_simpson(F&& f, double a, double b, double tol = 1e-10) {
  detail::SimpsonState<std::remove_reference_t<F>> s{f};
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  QuadratureResult r;
  r.value = s.step(a, b, fa, fm, fb, whole, tol, 60);
  r.intervals = s.intervals;
  r.converged = s.converged;
  return r;
}

/// Integrates over [a, b] in panels no wider than panel, sharing the tolerance
/// between panels. Keeps narrow peaks from being stepped over.
template <typename F>
QuadratureResult paneled_simpson(F&& f, double a, double b, double panel, double tol = 1e-10) {
  const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / panel)));
  const double width = (b - a) / static_cast<double>(panels);
  QuadratureResult total;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double hi = p + 1 == panels ? b : lo + width;
    const auto r = adaptive_simpson(f, lo, hi, tol / static_cast<double>(panels));
    total.value += r.value;
    total.intervals += r.intervals;
    total.converged = total.converged && r.converged;
  }
  return total;
}

}  // namespace fclip
