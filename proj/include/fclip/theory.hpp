#pragma once

// Entropy of penultimate-layer features before and after clipping, under two
// feature models with parent normal N(0, sigma^2):
//
//  * half_normal:        x ~ |N(0, sigma^2)|. Clipping at c moves the tail
//                        mass P = erfc(a), a = c / (sigma sqrt 2), onto an
//                        atom at c. delta_h = -P ln P + int_c^inf psi ln psi.
//  * rectified_mixture:  x = max(0, N(0, sigma^2)), an atom at 0 with mass q
//                        plus a truncated normal on (0, inf). Clipping adds an
//                        atom at c. Entropies of the mixed variables follow
//                        the weighted discrete + continuous rule.
//
// All entropies are in nats.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fclip/error.hpp"
#include "fclip/special.hpp"

namespace fclip::theory {

using special::kSqrtPi;
inline constexpr double kSqrt2PiE = 4.1327313541224929385;  // sqrt(2 pi e)
inline constexpr double kMinSigma = 1e-6;
inline constexpr double kMassFloor = 1e-15;

enum class FeatureModel { half_normal, rectified_mixture };
enum class DerivativeMethod { closed_form, finite_difference };

inline std::string to_string(FeatureModel m) {
  return m == FeatureModel::half_normal ? "half_normal" : "rectified_mixture";
}

inline FeatureModel model_from_string(const std::string& s) {
  if (s == "half_normal") return FeatureModel::half_normal;
  if (s == "rectified_mixture" || s == "rectified") return FeatureModel::rectified_mixture;
  throw Error(Errc::invalid_argument, "unknown feature model '" + s + "'");
}

struct TheoryParams {
  double sigma = 1.0;
  double c = 1.0;
  FeatureModel model = FeatureModel::rectified_mixture;
  double q = 0.5;  // atom mass at 0 (rectified model only)
};

inline void validate(const TheoryParams& p) {
  require(std::isfinite(p.sigma) && p.sigma > 0.0, Errc::invalid_argument, "sigma must be > 0");
  require(std::isfinite(p.c) && p.c > 0.0, Errc::invalid_argument, "c must be > 0");
  require(p.q > 0.0 && p.q < 1.0, Errc::invalid_argument, "q must lie in (0, 1)");
}

/// p ln p with 0 ln 0 = 0.
inline double xlogx(double p) noexcept { return p > 0.0 ? p * std::log(p) : 0.0; }

// ---------------------------------------------------------------------------
// Truncated normal

/// Mass of N(0,1) on (alpha, beta), picking the erf/erfc form that avoids
/// cancellation for the interval at hand.
inline double normal_mass(double alpha, double beta) noexcept {
  using special::erf;
  using special::erfc;
  constexpr double s2 = special::kSqrt2;
  if (alpha > 1.0) return 0.5 * (erfc(alpha / s2) - erfc(beta / s2));
  if (beta < -1.0) return 0.5 * (erfc(-beta / s2) - erfc(-alpha / s2));
  const double ea = std::isinf(alpha) ? (alpha < 0 ? -1.0 : 1.0) : erf(alpha / s2);
  const double eb = std::isinf(beta) ? (beta < 0 ? -1.0 : 1.0) : erf(beta / s2);
  return 0.5 * (eb - ea);
}

/// Differential entropy of N(0, sigma^2) truncated to (a, b):
///   ln(sigma sqrt(2 pi e) Z) + (alpha phi(alpha) - beta phi(beta)) / (2Z)
/// with alpha = a/sigma, beta = b/sigma, Z = Phi(beta) - Phi(alpha).
/// Either bound may be infinite.
inline double trunc_normal_entropy(double sigma, double a, double b) {
  require(std::isfinite(sigma) && sigma > 0.0, Errc::invalid_argument, "sigma must be > 0");
  require(a < b, Errc::invalid_argument, "truncation interval must satisfy a < b");
  const double alpha = a / sigma, beta = b / sigma;
  const double z = normal_mass(alpha, beta);
  require(z > kMassFloor, Errc::degenerate, "truncation interval carries no mass");
  auto edge = [](double t) { return std::isinf(t) ? 0.0 : t * special::phi(t); };
  return std::log(sigma * kSqrt2PiE * z) + (edge(alpha) - edge(beta)) / (2.0 * z);
}

// ---------------------------------------------------------------------------
// Rectified mixture model

/// H(x) = -q ln q - (1-q) ln(1-q) + q*0 + (1-q) H_tn(sigma, 0, inf).
inline double rectified_entropy(double sigma, double q = 0.5) {
  require(q > 0.0 && q < 1.0, Errc::invalid_argument, "q must lie in (0, 1)");
  return -xlogx(q) - xlogx(1.0 - q) + (1.0 - q) * trunc_normal_entropy(sigma, 0.0, INFINITY);
}

struct ClippedEntropy {
  double value = 0.0;
  bool degenerate = false;  // continuous part vanished; value is the two-atom limit
};

/// Entropy after clipping at c: atoms p0 = q at 0 and pc = (1-q) erfc(beta/sqrt2)
/// at c (pc = 1 - Phi(c/sigma) for q = 1/2), continuous part of mass
/// 1 - q~ = (1-q) erf(beta/sqrt2) on (0, c):
///   H = -q~ ln q~ - (1-q~) ln(1-q~) + q~ [-(p0/q~) ln(p0/q~) - (pc/q~) ln(pc/q~)]
///       + (1-q~) H_tn(sigma, 0, c).
inline ClippedEntropy clipped_entropy(double sigma, double c, double q = 0.5) {
  validate(TheoryParams{sigma, c, FeatureModel::rectified_mixture, q});
  const double beta = c / sigma;
  const double p0 = q;
  const double pc = (1.0 - q) * special::erfc(beta / special::kSqrt2);
  const double cont = (1.0 - q) * special::erf(beta / special::kSqrt2);
  const double qt = p0 + pc;
  if (cont <= kMassFloor) return {-xlogx(p0 / qt) - xlogx(pc / qt), true};
  const double discrete = -xlogx(p0 / qt) - xlogx(pc / qt);
  return {-xlogx(qt) - xlogx(cont) + qt * discrete + cont * trunc_normal_entropy(sigma, 0.0, c), false};
}

// ---------------------------------------------------------------------------
// Half-normal model

struct HalfNormalTerms {
  double a;     // c / (sigma sqrt 2)
  double tail;  // P = erfc(a), the clipped mass
  double log_tail;
  double log_density_scale;  // ln(2a / (c sqrt pi)) = ln(sqrt2 / (sigma sqrt pi))
};

inline HalfNormalTerms half_normal_terms(double sigma, double c) {
  const double a = c / (sigma * special::kSqrt2);
  return {a, special::erfc(a), special::log_erfc(a), std::log(2.0 * a / (c * kSqrtPi))};
}

/// -P ln P + L P - (a / sqrt(pi)) e^{-a^2} - P / 2, using
/// int_a^inf u^2 e^{-u^2} du = a e^{-a^2} / 2 + (sqrt(pi) / 4) erfc(a).
inline double half_normal_delta_h(double sigma, double c) {
  const auto t = half_normal_terms(sigma, c);
  return -t.tail * t.log_tail + t.log_density_scale * t.tail - t.a * std::exp(-t.a * t.a) / kSqrtPi - 0.5 * t.tail;
}

/// The draft manuscript's printed closed form, which carries the moment
/// identity as (sqrt(pi)/4)(a e^{-a^2} + (sqrt(pi)/2) erfc(a)). Kept for the
/// comparison report; it does not equal the defining integral.
inline double half_normal_delta_h_printed(double sigma, double c) {
  const auto t = half_normal_terms(sigma, c);
  return -t.tail * t.log_tail + t.log_density_scale * t.tail - 0.5 * t.a * std::exp(-t.a * t.a) -
         kSqrtPi / 4.0 * t.tail;
}

/// d/dsigma of half_normal_delta_h, via d/da times da/dsigma = -a/sigma.
inline double half_normal_d_delta_h(double sigma, double c) {
  const auto t = half_normal_terms(sigma, c);
  const double g = std::exp(-t.a * t.a);
  const double d_da = 2.0 / kSqrtPi * g * (t.log_tail + 1.0 - t.log_density_scale) + t.tail / t.a +
                      2.0 * t.a * t.a / kSqrtPi * g;
  return -t.a / sigma * d_da;
}

/// The draft's printed derivative of its printed closed form.
inline double half_normal_d_delta_h_printed(double sigma, double c) {
  const auto t = half_normal_terms(sigma, c);
  const double g = std::exp(-t.a * t.a);
  return -2.0 * t.a / (kSqrtPi * sigma) * g * (t.log_tail + 1.0 - t.log_density_scale) - t.tail / sigma -
         t.a * t.a * t.a / sigma * g;
}

// ---------------------------------------------------------------------------
// Rectified mixture delta H

/// clipped_entropy - rectified_entropy, collapsed algebraically to
///   -(1-q) [eps ln eps + eps ln(sigma sqrt(2 pi e) / 2) + beta phi(beta)]
/// with beta = c/sigma and eps = erfc(beta / sqrt 2). The collapsed form has
/// no O(1) cancellation, so it stays accurate where delta_h is tiny.
inline double rectified_delta_h(double sigma, double c, double q = 0.5) {
  validate(TheoryParams{sigma, c, FeatureModel::rectified_mixture, q});
  const double beta = c / sigma;
  const double eps = special::erfc(beta / special::kSqrt2);
  const double log_eps = special::log_erfc(beta / special::kSqrt2);
  const double h_inf = std::log(sigma * kSqrt2PiE / 2.0);
  return -(1.0 - q) * (eps * log_eps + eps * h_inf + beta * special::phi(beta));
}

/// Exact derivative of rectified_delta_h:
///   -((1-q)/sigma) [beta phi(beta) (2 ln eps + 1 + 2 ln(sigma sqrt(2 pi e)/2) + beta^2) + eps]
inline double rectified_d_delta_h_exact(double sigma, double c, double q = 0.5) {
  const double beta = c / sigma;
  const double eps = special::erfc(beta / special::kSqrt2);
  const double log_eps = special::log_erfc(beta / special::kSqrt2);
  const double h_inf = std::log(sigma * kSqrt2PiE / 2.0);
  return -(1.0 - q) / sigma *
         (beta * special::phi(beta) * (2.0 * log_eps + 1.0 + 2.0 * h_inf + beta * beta) + eps);
}

/// Reference closed-form derivative, transcribed term by term (q = 1/2 only):
///   ln((Phi - 1/2)/(1 - Phi)) phi(b) c/s^2 + 5/(4s) - c phi(b)/(2 s^2 Phi)
///   - phi(b)/(2 Phi^2) (c (c^2 - s^2)/s^4 Phi + c^2/s^3 phi(b)),   b = c/s.
inline double rectified_d_delta_h_printed(double sigma, double c) {
  const double s = sigma, b = c / s;
  const double ph = special::phi(b), Ph = special::Phi(b);
  const double log_ratio = std::log(0.5 * special::erf(b / special::kSqrt2)) -
                           (special::log_erfc(b / special::kSqrt2) - std::numbers::ln2);
  return log_ratio * ph * c / (s * s) + 5.0 / (4.0 * s) - c * ph / (2.0 * s * s * Ph) -
         ph / (2.0 * Ph * Ph) * (c * (c * c - s * s) / (s * s * s * s) * Ph + c * c / (s * s * s) * ph);
}

// ---------------------------------------------------------------------------
// Dispatch

inline double delta_h(const TheoryParams& p) {
  validate(p);
  if (p.model == FeatureModel::half_normal) return half_normal_delta_h(p.sigma, p.c);
  return rectified_delta_h(p.sigma, p.c, p.q);
}

inline constexpr double kFdStep = 1e-4;  // relative to sigma

/// Richardson-extrapolated central difference of delta_h in sigma,
/// h = 1e-4 sigma: (4 D(h/2) - D(h)) / 3.
inline double delta_h_finite_difference(const TheoryParams& p) {
  auto f = [&](double s) {
    auto q = p;
    q.sigma = s;
    return delta_h(q);
  };
  const double h = kFdStep * p.sigma;
  const double d1 = (f(p.sigma + h) - f(p.sigma - h)) / (2.0 * h);
  const double d2 = (f(p.sigma + h / 2) - f(p.sigma - h / 2)) / h;
  return (4.0 * d2 - d1) / 3.0;
}

inline double d_delta_h_d_sigma(const TheoryParams& p, DerivativeMethod method) {
  validate(p);
  require(p.sigma >= kMinSigma, Errc::invalid_argument, "sigma too close to 0 for a derivative");
  if (method == DerivativeMethod::finite_difference) return delta_h_finite_difference(p);
  if (p.model == FeatureModel::half_normal) return half_normal_d_delta_h(p.sigma, p.c);
  require(p.q == 0.5, Errc::invalid_argument, "the printed rectified derivative assumes q = 1/2");
  return rectified_d_delta_h_printed(p.sigma, p.c);
}

struct TheoryPoint {
  TheoryParams params;
  double h_original = 0.0;
  double h_clipped = 0.0;
  double delta_h = 0.0;
  double d_delta_h_d_sigma = 0.0;  // finite difference
};

/// For the half-normal model h_original is the half-normal differential
/// entropy ln(sigma sqrt(pi e / 2)) and h_clipped = h_original + delta_h.
inline TheoryPoint evaluate_point(const TheoryParams& p) {
  TheoryPoint pt;
  pt.params = p;
  pt.delta_h = delta_h(p);
  if (p.model == FeatureModel::rectified_mixture) {
    pt.h_original = rectified_entropy(p.sigma, p.q);
    pt.h_clipped = clipped_entropy(p.sigma, p.c, p.q).value;
  } else {
    pt.h_original = std::log(p.sigma * std::sqrt(std::numbers::pi * std::numbers::e / 2.0));
    pt.h_clipped = pt.h_original + pt.delta_h;
  }
  pt.d_delta_h_d_sigma = d_delta_h_d_sigma(p, DerivativeMethod::finite_difference);
  return pt;
}

// ---------------------------------------------------------------------------
// Curves and reports

struct CurveRow {
  FeatureModel model;
  double c;
  double sigma;
  double delta_h;
  double d_delta_h_d_sigma;
};

/// c-major, sigma-minor rows; derivatives by finite difference.
inline std::vector<CurveRow> emit_theory_curves(FeatureModel model, const std::vector<double>& c_set,
                                                const std::vector<double>& sigma_grid) {
  require(!c_set.empty() && !sigma_grid.empty(), Errc::invalid_argument, "empty c set or sigma grid");
  std::vector<CurveRow> rows;
  rows.reserve(c_set.size() * sigma_grid.size());
  for (double c : c_set)
    for (double s : sigma_grid) {
      const TheoryParams p{s, c, model};
      rows.push_back({model, c, s, delta_h(p), d_delta_h_d_sigma(p, DerivativeMethod::finite_difference)});
    }
  return rows;
}

/// CSV header: model,c,sigma,delta_h,d_delta_h_d_sigma
inline void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& rows) {
  os << "model,c,sigma,delta_h,d_delta_h_d_sigma\n";
  for (const auto& r : rows)
    os << fmt::format("{},{},{},{},{}\n", to_string(r.model), r.c, r.sigma, r.delta_h, r.d_delta_h_d_sigma);
}

/// Relative difference with an absolute floor in the denominator.
inline double relative_gap(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct DerivativeComparison {
  double c;
  double sigma;
  double closed_form;
  double finite_difference;
  double abs_diff;
  double rel_diff;
};

struct ComparisonReport {
  FeatureModel model;
  std::vector<DerivativeComparison> points;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
};

inline ComparisonReport compare_derivatives(FeatureModel model, const std::vector<double>& c_set,
                                            const std::vector<double>& sigma_grid) {
  ComparisonReport rep{model, {}, 0.0, 0.0};
  for (double c : c_set)
    for (double s : sigma_grid) {
      const TheoryParams p{s, c, model};
      const double cf = d_delta_h_d_sigma(p, DerivativeMethod::closed_form);
      const double fd = d_delta_h_d_sigma(p, DerivativeMethod::finite_difference);
      DerivativeComparison pt{c, s, cf, fd, std::abs(cf - fd), relative_gap(cf, fd)};
      if (std::isfinite(pt.abs_diff)) {
        rep.max_abs_diff = std::max(rep.max_abs_diff, pt.abs_diff);
        rep.max_rel_diff = std::max(rep.max_rel_diff, pt.rel_diff);
      } else {
        rep.max_abs_diff = rep.max_rel_diff = INFINITY;
      }
      rep.points.push_back(pt);
    }
  return rep;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points)
    pts.push_back({{"c", p.c},
                   {"sigma", p.sigma},
                   {"closed_form", num(p.closed_form)},
                   {"finite_difference", num(p.finite_difference)},
                   {"abs_diff", num(p.abs_diff)},
                   {"rel_diff", num(p.rel_diff)}});
  return {{"model", to_string(r.model)},
          {"closed_form_source",
           r.model == FeatureModel::half_normal ? "derived from the defining integral" : "reference closed form"},
          {"max_abs_diff", num(r.max_abs_diff)},
          {"max_rel_diff", num(r.max_rel_diff)},
          {"points", pts}};
}

/// Sigma values where the finite-difference derivative changes sign along the
/// grid, each refined by bisection to 1e-10 relative.
inline std::vector<double> derivative_sign_changes(FeatureModel model, double c, const std::vector<double>& sigma_grid) {
  auto deriv = [&](double s) { return d_delta_h_d_sigma({s, c, model}, DerivativeMethod::finite_difference); };
  std::vector<double> roots;
  for (std::size_t i = 1; i < sigma_grid.size(); ++i) {
    double lo = sigma_grid[i - 1], hi = sigma_grid[i];
    double flo = deriv(lo), fhi = deriv(hi);
    if (!((flo > 0 && fhi <= 0) || (flo < 0 && fhi >= 0))) continue;
    while (hi - lo > 1e-10 * hi) {
      const double mid = 0.5 * (lo + hi);
      const double fm = deriv(mid);
      if ((fm > 0) == (flo > 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    roots.push_back(0.5 * (lo + hi));
  }
  return roots;
}

/// Grid "lo:hi:count" -> count points. lo == 0 is read as the open end of
/// (0, hi]: the grid becomes hi/count, 2 hi/count, ..., hi.
inline std::vector<double> parse_grid(const std::string& spec) {
  double lo = 0, hi = 0;
  unsigned long count = 0;
  char c1 = 0, c2 = 0;
  std::istringstream is(spec);
  if (!(is >> lo >> c1 >> hi >> c2 >> count) || c1 != ':' || c2 != ':' || count == 0 || hi < lo)
    throw Error(Errc::invalid_argument, "grid must look like lo:hi:count, got '" + spec + "'");
  std::vector<double> g(count);
  for (unsigned long i = 0; i < count; ++i) {
    if (lo == 0.0) g[i] = hi * static_cast<double>(i + 1) / static_cast<double>(count);
    else g[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  g.back() = count == 1 && lo != 0.0 ? lo : hi;
  return g;
}

}  // namespace fclip::theory
