#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace fclip {

struct Evaluation {
  double x = 0.0;
  double fx = 0.0;
};

inline std::vector<double> log_space(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

inline std::vector<double> lin_space(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

/// Golden-section minimisation of f on [a, b], stopping once the bracket is
/// no wider than tol. Returns the best point evaluated; every evaluation is
/// appended to trace when given.
template <typename F>
Evaluation golden_section_minimize(F&& f, double a, double b, double tol,
                                   std::vector<Evaluation>* trace = nullptr) {
  constexpr double inv_phi = 0.6180339887498949;  // (sqrt(5) - 1) / 2
  auto eval = [&](double x) {
    const double fx = f(x);
    if (trace) trace->push_back({x, fx});
    return fx;
  };
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = eval(c), fd = eval(d);
  Evaluation best = fc <= fd ? Evaluation{c, fc} : Evaluation{d, fd};
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
      if (fc < best.fx) best = {c, fc};
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
      if (fd < best.fx) best = {d, fd};
    }
  }
  return best;
}

/// Evaluates f on an ascending grid, then refines between the neighbours of
/// the best grid point with golden-section search. Ties on the grid go to the
/// earliest point unless prefer_last is set.
template <typename F>
Evaluation scan_then_golden(F&& f, const std::vector<double>& grid, double tol,
                            std::vector<Evaluation>* trace = nullptr, bool prefer_last = false) {
  std::size_t best = 0;
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    values[i] = f(grid[i]);
    if (trace) trace->push_back({grid[i], values[i]});
    if (values[i] < values[best] || (prefer_last && values[i] <= values[best])) best = i;
  }
  Evaluation out{grid[best], values[best]};
  if (grid.size() < 2) return out;
  const double lo = grid[best == 0 ? 0 : best - 1];
  const double hi = grid[best + 1 < grid.size() ? best + 1 : best];
  if (hi > lo) {
    const auto refined = golden_section_minimize(f, lo, hi, tol, trace);
    if (refined.fx < out.fx) out = refined;
  }
  return out;
}

}  // namespace fclip
