#pragma once

// Diagnostics on high/low calibration error groups. HCE samples are wrong
// predictions with confidence above tau, LCE samples are correct ones above
// tau. Indices refer to rows of the probability matrix handed to
// select_groups, which the callers keep aligned with dataset rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fclip/calibrators.hpp"
#include "fclip/datastore.hpp"
#include "fclip/error.hpp"
#include "fclip/matrix.hpp"
#include "fclip/metrics.hpp"
#include "fclip/rng.hpp"

namespace fclip::analysis {

inline constexpr double kDefaultTau = 0.95;

struct GroupSelection {
  double tau = kDefaultTau;
  IndexSet hce_idx;
  IndexSet lce_idx;

  bool hce_empty() const noexcept { return hce_idx.empty(); }
  bool lce_empty() const noexcept { return lce_idx.empty(); }
};

inline GroupSelection select_groups(const ProbMatrix& probs, const Labels& labels, double tau = kDefaultTau) {
  require(tau > 0.0 && tau < 1.0, Errc::invalid_argument, "tau must lie in (0, 1)");
  require(labels.size() == probs.rows(), Errc::size_mismatch, "label count != probability rows");
  GroupSelection sel;
  sel.tau = tau;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    const std::size_t pred = argmax(r);
    if (!(r[pred] > tau)) continue;
    (pred == labels[i] ? sel.lce_idx : sel.hce_idx).push_back(i);
  }
  return sel;
}

inline nlohmann::json to_json(const GroupSelection& s) {
  return {{"tau", s.tau},
          {"hce_count", s.hce_idx.size()},
          {"lce_count", s.lce_idx.size()},
          {"hce_empty", s.hce_empty()},
          {"lce_empty", s.lce_empty()}};
}

// ---------------------------------------------------------------------------
// Unit profiles

struct UnitProfile {
  std::vector<std::size_t> units;
  std::vector<double> mean_hce;
  std::vector<double> mean_lce;
};

/// Every unit, or `count` units drawn without replacement with the seeded
/// permutation and then sorted.
inline std::vector<std::size_t> unit_subset(std::size_t d, std::optional<std::size_t> count, std::uint64_t seed) {
  if (!count || *count >= d) {
    std::vector<std::size_t> all(d);
    for (std::size_t j = 0; j < d; ++j) all[j] = j;
    return all;
  }
  auto perm = seeded_permutation(d, seed);
  perm.resize(*count);
  std::sort(perm.begin(), perm.end());
  return perm;
}

inline std::vector<double> column_means(const Matrix& x, const IndexSet& rows, const std::vector<std::size_t>& units,
                                        bool absolute) {
  std::vector<double> out(units.size(), 0.0);
  for (std::size_t u = 0; u < units.size(); ++u) {
    double s = 0.0;
    for (auto i : rows) {
      const double v = x(i, units[u]);
      s += absolute ? std::abs(v) : v;
    }
    out[u] = s / static_cast<double>(rows.size());
  }
  return out;
}

inline UnitProfile unit_mean_profile(const Matrix& features, const GroupSelection& sel,
                                     const std::vector<std::size_t>& units, bool absolute = false) {
  require(!sel.hce_empty(), Errc::empty_input, "HCE group is empty");
  require(!sel.lce_empty(), Errc::empty_input, "LCE group is empty");
  for (auto u : units) require(u < features.cols(), Errc::invalid_argument, "unit index out of range");
  return {units, column_means(features, sel.hce_idx, units, absolute),
          column_means(features, sel.lce_idx, units, absolute)};
}

/// CSV header: unit,mean_hce,mean_lce
inline void write_profile_csv(std::ostream& os, const UnitProfile& p) {
  os << "unit,mean_hce,mean_lce\n";
  for (std::size_t i = 0; i < p.units.size(); ++i)
    os << fmt::format("{},{},{}\n", p.units[i], p.mean_hce[i], p.mean_lce[i]);
}

// ---------------------------------------------------------------------------
// Histograms

struct FeatureHistogram {
  std::vector<double> edges;  // bins + 1 values over [0, max]
  std::vector<std::size_t> count_hce;
  std::vector<std::size_t> count_lce;
  std::vector<double> density_hce;
  std::vector<double> density_lce;
};

namespace detail {

inline std::size_t hist_bin(double v, double hi, std::size_t bins) noexcept {
  if (v <= 0.0) return 0;
  if (v >= hi) return bins - 1;
  auto b = static_cast<std::size_t>(v / hi * static_cast<double>(bins));
  return std::min(b, bins - 1);
}

inline void fill(const Matrix& x, const IndexSet& rows, double hi, std::size_t bins, std::vector<std::size_t>& count,
                 std::vector<double>& density) {
  count.assign(bins, 0);
  density.assign(bins, 0.0);
  std::size_t total = 0;
  for (auto i : rows)
    for (double v : x.row(i)) {
      ++count[hist_bin(v, hi, bins)];
      ++total;
    }
  if (total == 0) return;
  const double width = hi / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b)
    density[b] = static_cast<double>(count[b]) / (static_cast<double>(total) * width);
}

}  // namespace detail

/// Shared edges over [0, max feature across both groups]; values below 0
/// land in the first bin and the maximum in the last. Densities integrate
/// to 1 over the edges.
inline FeatureHistogram feature_histogram(const Matrix& features, const GroupSelection& sel, std::size_t bins) {
  require(bins >= 1, Errc::invalid_argument, "bins must be >= 1");
  require(!sel.hce_empty() || !sel.lce_empty(), Errc::empty_input, "both groups are empty");
  double hi = 0.0;
  for (const auto* rows : {&sel.hce_idx, &sel.lce_idx})
    for (auto i : *rows)
      for (double v : features.row(i)) hi = std::max(hi, v);
  require(hi > 0.0, Errc::degenerate, "all selected feature values are zero (or negative)");
  FeatureHistogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = hi * static_cast<double>(b) / static_cast<double>(bins);
  h.edges.back() = hi;
  detail::fill(features, sel.hce_idx, hi, bins, h.count_hce, h.density_hce);
  detail::fill(features, sel.lce_idx, hi, bins, h.count_lce, h.density_lce);
  return h;
}

/// CSV header: bin_lo,bin_hi,density_hce,density_lce
inline void write_histogram_csv(std::ostream& os, const FeatureHistogram& h) {
  os << "bin_lo,bin_hi,density_hce,density_lce\n";
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
    os << fmt::format("{},{},{},{}\n", h.edges[b], h.edges[b + 1], h.density_hce[b], h.density_lce[b]);
}

// ---------------------------------------------------------------------------
// Scale estimate

/// sqrt of the mean square over strictly positive entries of the group rows.
/// With include_zeros, exact zeros count too.
inline double estimate_sigma(const Matrix& features, const IndexSet& group, bool include_zeros = false) {
  long double ss = 0.0;
  std::size_t n = 0, positive = 0;
  for (auto i : group)
    for (double v : features.row(i)) {
      if (v > 0.0) {
        ss += static_cast<long double>(v) * v;
        ++n;
        ++positive;
      } else if (include_zeros && v == 0.0) {
        ++n;
      }
    }
  require(positive > 0, Errc::degenerate, "group has no strictly positive feature entries");
  return static_cast<double>(std::sqrt(ss / static_cast<long double>(n)));
}

// ---------------------------------------------------------------------------
// Softmax entropy before and after clipping

struct GroupEntropy {
  double h_before = 0.0;
  double h_after = 0.0;
  double delta = 0.0;
};

struct EntropyTable {
  double c = 0.0;
  GroupEntropy hce;
  GroupEntropy lce;
};

inline GroupEntropy group_entropy(const Dataset& ds, const IndexSet& group, double c) {
  require(ds.has_head(), Errc::missing_head, "entropy table needs features and a classifier head");
  require(!group.empty(), Errc::empty_input, "group is empty");
  const double before = mean_entropy(softmax(compute_logits(ds, ds.features->select_rows(group))));
  const double after = mean_entropy(apply(CalibratorSpec{{FeatureClip{c}}}, ds, group));
  return {before, after, after - before};
}

/// Natural-log entropies of the vanilla and clipped-feature softmax.
inline EntropyTable entropy_table(const Dataset& ds, const GroupSelection& sel, double c) {
  require(ds.has_head(), Errc::missing_head, "entropy table needs features and a classifier head");
  require(!sel.hce_empty(), Errc::empty_input, "HCE group is empty");
  require(!sel.lce_empty(), Errc::empty_input, "LCE group is empty");
  return {c, group_entropy(ds, sel.hce_idx, c), group_entropy(ds, sel.lce_idx, c)};
}

inline nlohmann::json to_json(const EntropyTable& t) {
  auto g = [](const GroupEntropy& e) {
    return nlohmann::json{{"h_before", e.h_before}, {"h_after", e.h_after}, {"delta", e.delta}};
  };
  return {{"hce", g(t.hce)}, {"lce", g(t.lce)}, {"c", t.c}, {"log_base", "e"}};
}

inline std::string format_entropy_table(const EntropyTable& t) {
  std::string out = fmt::format("{:<6}{:>12}{:>12}{:>12}\n", "group", "H(X)", "H(X~)", "delta");
  out += fmt::format("{:<6}{:>12.4f}{:>12.4f}{:>12.4f}\n", "HCE", t.hce.h_before, t.hce.h_after, t.hce.delta);
  out += fmt::format("{:<6}{:>12.4f}{:>12.4f}{:>12.4f}\n", "LCE", t.lce.h_before, t.lce.h_after, t.lce.delta);
  return out;
}

// ---------------------------------------------------------------------------
// Overconfidence counts

struct OverconfidenceRow {
  double threshold = 0.0;
  std::size_t correct = 0;
  std::size_t wrong = 0;
};

inline const std::vector<double> kDefaultThresholds{0.80, 0.90, 0.95, 0.99};

inline std::vector<OverconfidenceRow> overconfidence_counts(const ProbMatrix& probs, const Labels& labels,
                                                            const std::vector<double>& thresholds = kDefaultThresholds) {
  require(labels.size() == probs.rows(), Errc::size_mismatch, "label count != probability rows");
  for (double t : thresholds) require(t > 0.0 && t < 1.0, Errc::invalid_argument, "thresholds must lie in (0, 1)");
  std::vector<OverconfidenceRow> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) rows.push_back({t, 0, 0});
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    const std::size_t pred = argmax(r);
    const bool ok = pred == labels[i];
    for (auto& row : rows)
      if (r[pred] > row.threshold) ++(ok ? row.correct : row.wrong);
  }
  return rows;
}

/// CSV header: threshold,correct,wrong
inline void write_overconfidence_csv(std::ostream& os, const std::vector<OverconfidenceRow>& rows) {
  os << "threshold,correct,wrong\n";
  for (const auto& r : rows) os << fmt::format("{},{},{}\n", r.threshold, r.correct, r.wrong);
}

}  // namespace fclip::analysis
