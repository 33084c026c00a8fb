#pragma once

// Post-hoc calibrators: feature clipping, logit clipping, temperature scaling
// and its ensemble (ETS) and classwise (CTS) variants, composed as ordered
// pipelines. Every fit minimises validation NLL.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fclip/datastore.hpp"
#include "fclip/error.hpp"
#include "fclip/matrix.hpp"
#include "fclip/metrics.hpp"
#include "fclip/optimize.hpp"

namespace fclip {

// ---------------------------------------------------------------------------
// Clipping

/// Elementwise clamp to [-c, c]. Entries already inside are returned untouched.
inline Matrix clip_values(Matrix x, double c) {
  require(std::isfinite(c) && c > 0.0, Errc::invalid_argument, "clip threshold must be a positive finite number");
  for (double& v : x.values()) v = std::clamp(v, -c, c);
  return x;
}

inline Matrix clip_features(const Matrix& x, double c) { return clip_values(x, c); }
inline Matrix clip_logits(const Matrix& z, double c) { return clip_values(z, c); }

// ---------------------------------------------------------------------------
// Stages

struct FeatureClip {
  double c;
};
struct LogitClip {
  double c;
};
struct Temperature {
  double T;
};
struct Ets {
  double T;
  std::array<double, 3> w;  // tempered, raw, uniform
};
struct ClasswiseTemperature {
  std::vector<double> T;
};
struct Identity {};

using Stage = std::variant<FeatureClip, LogitClip, Temperature, Ets, ClasswiseTemperature, Identity>;

struct CalibratorSpec {
  std::vector<Stage> stages;
};

inline void validate(const CalibratorSpec& spec) {
  bool seen_other = false, seen_ets = false, seen_clip = false;
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  for (const auto& stage : spec.stages) {
    if (std::holds_alternative<Identity>(stage)) continue;
    require(!seen_ets, Errc::stage_order, "no stage may follow an ETS stage");
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, FeatureClip>) {
            require(!seen_clip, Errc::stage_order, "at most one feature_clip stage");
            require(!seen_other, Errc::stage_order, "feature_clip must precede logit/probability stages");
            require(positive(s.c), Errc::invalid_argument, "feature_clip c must be > 0");
            seen_clip = true;
          } else {
            seen_other = true;
            if constexpr (std::is_same_v<S, LogitClip>) {
              require(positive(s.c), Errc::invalid_argument, "logit_clip c must be > 0");
            } else if constexpr (std::is_same_v<S, Temperature>) {
              require(positive(s.T), Errc::invalid_argument, "temperature must be > 0");
            } else if constexpr (std::is_same_v<S, Ets>) {
              require(positive(s.T), Errc::invalid_argument, "ETS temperature must be > 0");
              double sum = 0.0;
              for (double w : s.w) {
                require(std::isfinite(w) && w >= 0.0, Errc::invalid_argument, "ETS weights must be >= 0");
                sum += w;
              }
              require(std::abs(sum - 1.0) <= 1e-9, Errc::invalid_argument, "ETS weights must sum to 1");
              seen_ets = true;
            } else if constexpr (std::is_same_v<S, ClasswiseTemperature>) {
              require(!s.T.empty(), Errc::invalid_argument, "classwise temperature vector is empty");
              for (double t : s.T) require(positive(t), Errc::invalid_argument, "classwise temperatures must be > 0");
            }
          }
        },
        stage);
  }
}

inline nlohmann::json to_json(const Stage& stage) {
  return std::visit(
      [](const auto& s) -> nlohmann::json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FeatureClip>) return {{"kind", "feature_clip"}, {"c", s.c}};
        else if constexpr (std::is_same_v<S, LogitClip>) return {{"kind", "logit_clip"}, {"c", s.c}};
        else if constexpr (std::is_same_v<S, Temperature>) return {{"kind", "temperature"}, {"T", s.T}};
        else if constexpr (std::is_same_v<S, Ets>) return {{"kind", "ets"}, {"T", s.T}, {"w", s.w}};
        else if constexpr (std::is_same_v<S, ClasswiseTemperature>)
          return {{"kind", "classwise_temperature"}, {"T", s.T}};
        else return {{"kind", "identity"}};
      },
      stage);
}

inline nlohmann::json to_json(const CalibratorSpec& spec) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : spec.stages) stages.push_back(to_json(s));
  return {{"stages", stages}};
}

inline CalibratorSpec calibrator_from_json(const nlohmann::json& j) {
  CalibratorSpec spec;
  try {
    for (const auto& s : j.at("stages")) {
      const auto kind = s.at("kind").get<std::string>();
      if (kind == "feature_clip") spec.stages.emplace_back(FeatureClip{s.at("c").get<double>()});
      else if (kind == "logit_clip") spec.stages.emplace_back(LogitClip{s.at("c").get<double>()});
      else if (kind == "temperature") spec.stages.emplace_back(Temperature{s.at("T").get<double>()});
      else if (kind == "ets")
        spec.stages.emplace_back(Ets{s.at("T").get<double>(), s.at("w").get<std::array<double, 3>>()});
      else if (kind == "classwise_temperature")
        spec.stages.emplace_back(ClasswiseTemperature{s.at("T").get<std::vector<double>>()});
      else if (kind == "identity") spec.stages.emplace_back(Identity{});
      else throw Error(Errc::invalid_argument, "unknown stage kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("malformed calibrator JSON: ") + e.what());
  }
  validate(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Objectives

namespace detail {

inline const double kNllCap = -std::log(kProbFloor);

/// Mean -ln softmax(z_i * scale)_{y_i} by log-sum-exp, with per-class scales
/// (inverse temperatures). Capped at -ln(1e-300) per row like nll().
inline double nll_scaled(const Matrix& z, const Labels& labels, std::span<const double> scale) {
  require(z.rows() > 0, Errc::empty_input, "empty validation set");
  double sum = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    double m = -INFINITY;
    for (std::size_t k = 0; k < r.size(); ++k) m = std::max(m, r[k] * scale[k]);
    double s = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) s += std::exp(r[k] * scale[k] - m);
    const double loss = m + std::log(s) - r[labels[i]] * scale[labels[i]];
    sum += std::min(loss, kNllCap);
  }
  return sum / static_cast<double>(z.rows());
}

inline double nll_tempered(const Matrix& z, const Labels& labels, double T) {
  const std::vector<double> scale(z.cols(), 1.0 / T);
  return nll_scaled(z, labels, scale);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fitting

struct FitReport {
  std::string method;
  nlohmann::json params;
  double val_nll_before = 0.0;
  double val_nll_after = 0.0;
  std::vector<Evaluation> trace;  // candidate -> val NLL, in evaluation order
  double wall_time_s = 0.0;
  std::string note;
};

inline nlohmann::json to_json(const FitReport& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : r.trace) trace.push_back({{"candidate", e.x}, {"nll", e.fx}});
  nlohmann::json j = {{"method", r.method},
                      {"params", r.params},
                      {"val_nll_before", r.val_nll_before},
                      {"val_nll_after", r.val_nll_after},
                      {"trace", trace},
                      {"wall_time_s", r.wall_time_s}};
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline constexpr double kTempLo = 0.05;
inline constexpr double kTempHi = 20.0;
inline constexpr std::size_t kTempGrid = 50;
inline constexpr double kTempTol = 1e-4;
inline constexpr double kTieTol = 1e-12;

template <typename F>
Evaluation temperature_line_search(F&& objective, std::vector<Evaluation>* trace) {
  return scan_then_golden(objective, log_space(kTempLo, kTempHi, kTempGrid), kTempTol, trace);
}

struct TemperatureFit {
  double T = 1.0;
  FitReport report;
};

/// T = argmin NLL(softmax(z / T)): 50 log-spaced points on [0.05, 20], then
/// golden-section on the bracketing interval to 1e-4. Falls back to T = 1
/// unless the optimum beats it by more than 1e-12.
inline TemperatureFit fit_temperature(const Matrix& logits, const Labels& labels) {
  const auto t0 = std::chrono::steady_clock::now();
  require(logits.rows() > 0, Errc::empty_input, "empty validation set");
  require(labels.size() == logits.rows(), Errc::size_mismatch, "labels and logits differ in length");
  TemperatureFit fit;
  auto& rep = fit.report;
  rep.method = "temperature";
  auto objective = [&](double T) { return detail::nll_tempered(logits, labels, T); };
  rep.val_nll_before = objective(1.0);
  const auto best = temperature_line_search(objective, &rep.trace);
  if (best.fx < rep.val_nll_before - kTieTol) fit.T = best.x;
  rep.val_nll_after = fit.T == 1.0 ? rep.val_nll_before : best.fx;
  rep.params = {{"T", fit.T}};
  rep.wall_time_s = detail::seconds_since(t0);
  return fit;
}

/// Linear-interpolated quantile of an ascending sample.
inline double sorted_quantile(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) return 0.0;
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline constexpr std::size_t kClipQuantileLevels = 256;

/// Candidate thresholds: 256 quantile levels 0.50..1.00 of |x| over the
/// validation rows plus the global max |x|; non-positive values dropped,
/// ascending, deduplicated.
inline std::vector<double> clip_candidates(const Dataset& ds, const IndexSet& val) {
  require(ds.has_head(), Errc::missing_head,
          "feature clipping needs features and a classifier head; use logit clipping on logits-only datasets");
  std::vector<double> mags;
  mags.reserve(val.size() * ds.d);
  for (auto i : val)
    for (double v : ds.features->row(i)) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end());
  std::vector<double> cands;
  for (std::size_t q = 0; q < kClipQuantileLevels; ++q)
    cands.push_back(sorted_quantile(mags, 0.5 + 0.5 * static_cast<double>(q) / (kClipQuantileLevels - 1)));
  cands.push_back(max_abs(*ds.features));
  std::erase_if(cands, [](double c) { return !(c > 0.0); });
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  return cands;
}

struct ClipFit {
  double c = 0.0;
  FitReport report;
};

/// Fits the feature-clip threshold on the validation rows. Each candidate
/// recomputes logits from clipped features; the best candidate (ties to the
/// larger c) is refined by golden-section between its neighbours.
inline ClipFit fit_feature_clip(const Dataset& ds, const IndexSet& val) {
  const auto t0 = std::chrono::steady_clock::now();
  require(!val.empty(), Errc::empty_input, "empty validation set");
  const auto cands = clip_candidates(ds, val);
  require(!cands.empty(), Errc::degenerate, "all features are zero; no positive clip threshold exists");
  const Matrix xv = ds.features->select_rows(val);
  const Labels yv = select_labels(ds.labels, val);
  const std::vector<double> unit(ds.k, 1.0);
  auto objective = [&](double c) { return detail::nll_scaled(compute_logits(ds, clip_features(xv, c)), yv, unit); };

  ClipFit fit;
  auto& rep = fit.report;
  rep.method = "feature_clip";
  std::vector<double> values(cands.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    values[i] = objective(cands[i]);
    rep.trace.push_back({cands[i], values[i]});
    if (values[i] <= values[best] + kTieTol) best = i;
  }
  Evaluation chosen{cands[best], values[best]};
  const double lo = cands[best == 0 ? 0 : best - 1];
  const double hi = cands[std::min(best + 1, cands.size() - 1)];
  if (hi > lo) {
    const auto refined = golden_section_minimize(objective, lo, hi, 1e-6 * cands.back(), &rep.trace);
    if (refined.fx < chosen.fx - kTieTol) chosen = refined;
  }
  fit.c = chosen.x;
  rep.val_nll_before = values.back();  // the global max leaves every feature untouched
  rep.val_nll_after = chosen.fx;
  rep.params = {{"c", fit.c}};
  rep.wall_time_s = detail::seconds_since(t0);
  return fit;
}

struct EtsFit {
  std::array<double, 3> w{1.0, 0.0, 0.0};
  FitReport report;
};

/// Ensemble temperature scaling, p = w1 softmax(z/T) + w2 softmax(z) + w3/K.
/// Only the true-class probabilities enter the NLL, so they are cached once.
/// The simplex is searched on a 0.02 grid and then refined on a 0.002 grid
/// around the incumbent until it stops moving. Ties keep the earlier point;
/// the visiting order starts at (1,0,0) and favours the tempered component.
inline EtsFit fit_ets(const Matrix& logits, const Labels& labels, double T) {
  const auto t0 = std::chrono::steady_clock::now();
  require(logits.rows() > 0, Errc::empty_input, "empty validation set");
  require(std::isfinite(T) && T > 0.0, Errc::invalid_argument, "ETS temperature must be > 0");
  const std::size_t n = logits.rows();
  const double inv_k = 1.0 / static_cast<double>(logits.cols());
  Matrix scaled = logits;
  for (double& v : scaled.values()) v /= T;
  const auto pt = softmax(scaled), p1 = softmax(logits);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = pt(i, labels[i]);
    b[i] = p1(i, labels[i]);
  }
  auto objective = [&](double w1, double w2, double w3) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s -= std::log(std::max(w1 * a[i] + w2 * b[i] + w3 * inv_k, kProbFloor));
    return s / static_cast<double>(n);
  };

  EtsFit fit;
  auto& rep = fit.report;
  rep.method = "ets";
  rep.note = "reconstructed baseline";
  // Integer grid coordinates: w1 = i / res, w2 = j / res, w3 = rest.
  auto eval = [&](long i, long j, long res) {
    const double r = static_cast<double>(res);
    return objective(static_cast<double>(i) / r, static_cast<double>(j) / r, static_cast<double>(res - i - j) / r);
  };
  constexpr long kCoarse = 50, kFine = 500;
  long bi = kCoarse, bj = 0;
  double best = eval(bi, bj, kCoarse);
  rep.val_nll_before = best;
  for (long j = 0; j <= kCoarse; ++j)
    for (long i = kCoarse - j; i >= 0; --i) {
      const double v = eval(i, j, kCoarse);
      if (v < best - kTieTol) best = v, bi = i, bj = j;
    }
  bi *= kFine / kCoarse;
  bj *= kFine / kCoarse;
  for (int round = 0; round < 50; ++round) {
    const long ci = bi, cj = bj;
    for (long j = std::max(0L, cj - 10); j <= std::min(kFine, cj + 10); ++j)
      for (long i = std::min(kFine - j, ci + 10); i >= std::max(0L, ci - 10); --i) {
        const double v = eval(i, j, kFine);
        if (v < best - kTieTol) best = v, bi = i, bj = j;
      }
    if (bi == ci && bj == cj) break;
  }
  fit.w = {static_cast<double>(bi) / kFine, static_cast<double>(bj) / kFine,
           static_cast<double>(kFine - bi - bj) / kFine};
  rep.val_nll_after = best;
  rep.params = {{"T", T}, {"w", fit.w}};
  rep.wall_time_s = detail::seconds_since(t0);
  return fit;
}

struct CtsFit {
  std::vector<double> T;
  FitReport report;
};

/// Classwise temperatures by coordinate descent from the shared TS value.
/// Each coordinate reuses the temperature line search; at most three sweeps,
/// stopping early when a sweep gains less than 1e-8 in NLL.
inline CtsFit fit_cts(const Matrix& logits, const Labels& labels) {
  const auto t0 = std::chrono::steady_clock::now();
  require(logits.rows() > 0, Errc::empty_input, "empty validation set");
  require(logits.cols() >= 2, Errc::invalid_argument, "classwise temperature needs K >= 2");
  const auto shared = fit_temperature(logits, labels);
  CtsFit fit;
  auto& rep = fit.report;
  rep.method = "cts";
  rep.note = "reconstructed baseline";
  fit.T.assign(logits.cols(), shared.T);
  std::vector<double> scale(logits.cols(), 1.0 / shared.T);
  rep.val_nll_before = detail::nll_scaled(logits, labels, std::vector<double>(logits.cols(), 1.0));
  double current = detail::nll_scaled(logits, labels, scale);
  for (int sweep = 0; sweep < 3; ++sweep) {
    const double start = current;
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      auto objective = [&](double t) {
        auto s = scale;
        s[k] = 1.0 / t;
        return detail::nll_scaled(logits, labels, s);
      };
      const auto best = temperature_line_search(objective, nullptr);
      if (best.fx < current - kTieTol) {
        fit.T[k] = best.x;
        scale[k] = 1.0 / best.x;
        current = best.fx;
      }
      rep.trace.push_back({static_cast<double>(k), current});
    }
    if (start - current < 1e-8) break;
  }
  rep.val_nll_after = current;
  rep.params = {{"T", fit.T}, {"shared_T", shared.T}};
  rep.wall_time_s = detail::seconds_since(t0);
  return fit;
}

struct LogitClipFit {
  double c = 0.0;
  FitReport report;
};

/// Logit clipping threshold; same candidate scheme as the feature clip but
/// over |logits| of the validation rows.
inline LogitClipFit fit_logit_clip(const Matrix& logits, const Labels& labels) {
  const auto t0 = std::chrono::steady_clock::now();
  require(logits.rows() > 0, Errc::empty_input, "empty validation set");
  std::vector<double> mags;
  for (double v : logits.values()) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end());
  std::vector<double> cands;
  for (std::size_t q = 0; q < kClipQuantileLevels; ++q)
    cands.push_back(sorted_quantile(mags, 0.5 + 0.5 * static_cast<double>(q) / (kClipQuantileLevels - 1)));
  std::erase_if(cands, [](double c) { return !(c > 0.0); });
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  require(!cands.empty(), Errc::degenerate, "all logits are zero");
  const std::vector<double> unit(logits.cols(), 1.0);
  auto objective = [&](double c) { return detail::nll_scaled(clip_logits(logits, c), labels, unit); };

  LogitClipFit fit;
  auto& rep = fit.report;
  rep.method = "logit_clip";
  std::vector<double> values(cands.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    values[i] = objective(cands[i]);
    rep.trace.push_back({cands[i], values[i]});
    if (values[i] <= values[best] + kTieTol) best = i;
  }
  Evaluation chosen{cands[best], values[best]};
  const double lo = cands[best == 0 ? 0 : best - 1];
  const double hi = cands[std::min(best + 1, cands.size() - 1)];
  if (hi > lo) {
    const auto refined = golden_section_minimize(objective, lo, hi, 1e-6 * cands.back(), &rep.trace);
    if (refined.fx < chosen.fx - kTieTol) chosen = refined;
  }
  fit.c = chosen.x;
  rep.val_nll_before = values.back();
  rep.val_nll_after = chosen.fx;
  rep.params = {{"c", fit.c}};
  rep.wall_time_s = detail::seconds_since(t0);
  return fit;
}

// ---------------------------------------------------------------------------
// Application

/// Logits after every logit-space stage (everything but ETS).
inline Matrix transformed_logits(const CalibratorSpec& spec, const Dataset& ds, const IndexSet& idx) {
  validate(spec);
  const FeatureClip* fc = nullptr;
  for (const auto& s : spec.stages)
    if (auto p = std::get_if<FeatureClip>(&s)) fc = p;
  Matrix z;
  if (fc) {
    require(ds.has_head(), Errc::missing_head, "feature_clip stage needs features and a classifier head");
    z = compute_logits(ds, clip_features(ds.features->select_rows(idx), fc->c));
  } else {
    z = base_logits(ds, idx);
  }
  for (const auto& stage : spec.stages) {
    if (auto s = std::get_if<LogitClip>(&stage)) {
      z = clip_logits(z, s->c);
    } else if (auto s = std::get_if<Temperature>(&stage)) {
      for (double& v : z.values()) v /= s->T;
    } else if (auto s = std::get_if<ClasswiseTemperature>(&stage)) {
      require(s->T.size() == z.cols(), Errc::size_mismatch, "classwise temperature count != class count");
      for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t k = 0; k < z.cols(); ++k) z(i, k) /= s->T[k];
    }
  }
  return z;
}

inline ProbMatrix ets_probabilities(const Matrix& z, const Ets& ets) {
  Matrix scaled = z;
  for (double& v : scaled.values()) v /= ets.T;
  const auto pt = softmax(scaled), p1 = softmax(z);
  const double inv_k = 1.0 / static_cast<double>(z.cols());
  Matrix p(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t k = 0; k < z.cols(); ++k)
      p(i, k) = ets.w[0] * pt(i, k) + ets.w[1] * p1(i, k) + ets.w[2] * inv_k;
  return ProbMatrix::from_values(std::move(p));
}

/// Runs the pipeline on the rows idx. A feature clip recomputes logits from
/// the head; ETS, if present, produces the final probabilities, otherwise
/// softmax is applied last.
inline ProbMatrix apply(const CalibratorSpec& spec, const Dataset& ds, const IndexSet& idx) {
  Matrix z = transformed_logits(spec, ds, idx);
  for (const auto& stage : spec.stages)
    if (auto s = std::get_if<Ets>(&stage)) return ets_probabilities(z, *s);
  return softmax(z);
}

// ---------------------------------------------------------------------------
// Threshold sweep

struct SweepRow {
  double c = 0.0;
  double ece = 0.0;
  double adaptive_ece = 0.0;  // NaN when bins > rows
  double accuracy = 0.0;
  double nll = 0.0;
};

inline std::vector<SweepRow> sweep_clip(const Dataset& ds, const IndexSet& idx, std::vector<double> c_grid,
                                        std::size_t bins = kDefaultBins) {
  require(ds.has_head(), Errc::missing_head, "clip sweep needs features and a classifier head");
  require(!c_grid.empty(), Errc::invalid_argument, "empty threshold grid");
  std::sort(c_grid.begin(), c_grid.end());
  const Labels y = select_labels(ds.labels, idx);
  std::vector<SweepRow> rows;
  for (double c : c_grid) {
    const auto probs = apply(CalibratorSpec{{FeatureClip{c}}}, ds, idx);
    SweepRow r;
    r.c = c;
    r.ece = ece_equal_width(probs, y, bins).ece;
    r.adaptive_ece = bins <= probs.rows() ? ece_adaptive(probs, y, bins).ece : std::nan("");
    r.accuracy = accuracy(probs, y);
    r.nll = nll(probs, y);
    rows.push_back(r);
  }
  return rows;
}

/// CSV header: c,ece,adaptive_ece,accuracy,nll
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "c,ece,adaptive_ece,accuracy,nll\n";
  for (const auto& r : rows) os << fmt::format("{},{},{},{},{}\n", r.c, r.ece, r.adaptive_ece, r.accuracy, r.nll);
}

}  // namespace fclip
