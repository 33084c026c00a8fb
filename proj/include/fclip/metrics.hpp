#pragma once

// Calibration and accuracy metrics over probability matrices. All values are
// fractions in [0, 1]; percentage scaling happens at the presentation layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fclip/datastore.hpp"
#include "fclip/error.hpp"
#include "fclip/matrix.hpp"

namespace fclip {

inline constexpr std::size_t kDefaultBins = 15;
inline constexpr double kProbFloor = 1e-300;

/// Row-stochastic N x K matrix. Construct through softmax() or from_values().
class ProbMatrix {
 public:
  ProbMatrix() = default;

  static ProbMatrix from_values(Matrix values, double tol = 1e-9) {
    for (std::size_t i = 0; i < values.rows(); ++i) {
      double s = 0.0;
      for (double p : values.row(i)) {
        require(std::isfinite(p) && p >= -tol && p <= 1.0 + tol, Errc::invalid_argument,
                "probability entry outside [0,1] in row " + std::to_string(i));
        s += p;
      }
      require(std::abs(s - 1.0) <= tol, Errc::invalid_argument,
              "row " + std::to_string(i) + " does not sum to 1");
    }
    return ProbMatrix(std::move(values));
  }

  const Matrix& values() const noexcept { return m_; }
  std::size_t rows() const noexcept { return m_.rows(); }
  std::size_t cols() const noexcept { return m_.cols(); }
  double operator()(std::size_t i, std::size_t k) const noexcept { return m_(i, k); }
  std::span<const double> row(std::size_t i) const noexcept { return m_.row(i); }

  friend bool operator==(const ProbMatrix&, const ProbMatrix&) = default;

 private:
  explicit ProbMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
  friend ProbMatrix softmax(const Matrix& logits);
};

/// Max-shifted softmax, row by row.
inline ProbMatrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    double zmax = -INFINITY;
    for (double v : z) {
      require(std::isfinite(v), Errc::invalid_argument, "non-finite logit in row " + std::to_string(i));
      zmax = std::max(zmax, v);
    }
    auto out = p.row(i);
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      out[k] = std::exp(z[k] - zmax);
      sum += out[k];
    }
    for (double& v : out) v /= sum;
  }
  return ProbMatrix(std::move(p));
}

/// Argmax with ties going to the lowest class index.
inline std::size_t argmax(std::span<const double> row) noexcept {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

inline std::vector<std::size_t> predictions(const ProbMatrix& probs) {
  std::vector<std::size_t> pred(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) pred[i] = argmax(probs.row(i));
  return pred;
}

inline std::vector<double> confidences(const ProbMatrix& probs) {
  std::vector<double> conf(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    conf[i] = *std::max_element(r.begin(), r.end());
  }
  return conf;
}

// ---------------------------------------------------------------------------
// Reliability bins

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double avg_confidence = 0.0;
  double accuracy = 0.0;
  double gap() const noexcept { return accuracy - avg_confidence; }
};

enum class BinningMode { equal_width, adaptive };

struct ReliabilityBins {
  BinningMode mode = BinningMode::equal_width;
  std::vector<ReliabilityBin> bins;

  std::size_t total() const noexcept {
    std::size_t t = 0;
    for (const auto& b : bins) t += b.count;
    return t;
  }
};

struct CalibrationError {
  double ece = 0.0;
  ReliabilityBins bins;
};

namespace detail {

inline void check_inputs(const ProbMatrix& probs, const Labels& labels) {
  require(probs.rows() > 0, Errc::empty_input, "no samples");
  require(labels.size() == probs.rows(), Errc::size_mismatch, "labels and probabilities differ in length");
}

// Bin m covers [m/M, (m+1)/M); the last bin also takes 1.0. The edge values
// are the doubles m/M, and assignment is corrected against them so that the
// floor() shortcut never disagrees with the edge comparison.
inline std::size_t equal_width_bin(double v, std::size_t bins) noexcept {
  const double nb = static_cast<double>(bins);
  auto m = static_cast<std::size_t>(std::clamp(std::floor(v * nb), 0.0, nb - 1.0));
  while (m > 0 && v < static_cast<double>(m) / nb) --m;
  while (m + 1 < bins && v >= static_cast<double>(m + 1) / nb) ++m;
  return m;
}

// Sums (confidence, hit) into bins and reduces to sum_m |B_m|/N * |A_m - C_m|.
struct BinAccumulator {
  std::vector<double> conf_sum;
  std::vector<double> hit_sum;
  std::vector<std::size_t> count;
  explicit BinAccumulator(std::size_t bins) : conf_sum(bins, 0.0), hit_sum(bins, 0.0), count(bins, 0) {}

  void add(std::size_t m, double conf, bool hit) {
    conf_sum[m] += conf;
    hit_sum[m] += hit ? 1.0 : 0.0;
    ++count[m];
  }

  double ece(std::size_t n) const {
    double e = 0.0;
    for (std::size_t m = 0; m < count.size(); ++m) {
      if (count[m] == 0) continue;
      const double cnt = static_cast<double>(count[m]);
      e += (cnt / static_cast<double>(n)) * std::abs(hit_sum[m] / cnt - conf_sum[m] / cnt);
    }
    return e;
  }

  ReliabilityBin record(std::size_t m, double lo, double hi) const {
    ReliabilityBin b{lo, hi, count[m], 0.0, 0.0};
    if (count[m] > 0) {
      b.avg_confidence = conf_sum[m] / static_cast<double>(count[m]);
      b.accuracy = hit_sum[m] / static_cast<double>(count[m]);
    }
    return b;
  }
};

}  // namespace detail

/// Equal-width ECE over top-label confidence.
inline CalibrationError ece_equal_width(const ProbMatrix& probs, const Labels& labels,
                                        std::size_t bins = kDefaultBins) {
  detail::check_inputs(probs, labels);
  require(bins >= 1, Errc::invalid_argument, "bin count must be >= 1");
  detail::BinAccumulator acc(bins);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    const std::size_t pred = argmax(r);
    const double conf = r[pred];
    acc.add(detail::equal_width_bin(conf, bins), conf, pred == labels[i]);
  }
  CalibrationError out;
  out.ece = acc.ece(probs.rows());
  out.bins.mode = BinningMode::equal_width;
  const double nb = static_cast<double>(bins);
  for (std::size_t m = 0; m < bins; ++m)
    out.bins.bins.push_back(acc.record(m, static_cast<double>(m) / nb, static_cast<double>(m + 1) / nb));
  return out;
}

/// Equal-mass ECE: stable sort by confidence, the first N mod M bins take
/// ceil(N/M) samples and the rest floor(N/M). Bin lo/hi are the smallest and
/// largest confidence inside the bin.
inline CalibrationError ece_adaptive(const ProbMatrix& probs, const Labels& labels,
                                     std::size_t bins = kDefaultBins) {
  detail::check_inputs(probs, labels);
  const std::size_t n = probs.rows();
  require(bins >= 1 && bins <= n, Errc::invalid_argument, "adaptive ECE needs 1 <= M <= N");
  const auto conf = confidences(probs);
  const auto pred = predictions(probs);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });

  detail::BinAccumulator acc(bins);
  CalibrationError out;
  out.bins.mode = BinningMode::adaptive;
  std::size_t pos = 0;
  const std::size_t base = n / bins, extra = n % bins;
  for (std::size_t m = 0; m < bins; ++m) {
    const std::size_t size = base + (m < extra ? 1 : 0);
    const double lo = conf[order[pos]];
    for (std::size_t s = 0; s < size; ++s, ++pos) {
      const std::size_t i = order[pos];
      acc.add(m, conf[i], pred[i] == labels[i]);
    }
    out.bins.bins.push_back(acc.record(m, lo, conf[order[pos - 1]]));
  }
  out.ece = acc.ece(n);
  return out;
}

/// Classwise ECE: per class k, equal-width bins over p_ik with hit = (y_i == k),
/// each class term normalised by the global N, then averaged over classes.
inline double ece_classwise(const ProbMatrix& probs, const Labels& labels, std::size_t bins = kDefaultBins) {
  detail::check_inputs(probs, labels);
  require(probs.cols() >= 2, Errc::invalid_argument, "classwise ECE needs K >= 2");
  require(bins >= 1, Errc::invalid_argument, "bin count must be >= 1");
  double total = 0.0;
  for (std::size_t k = 0; k < probs.cols(); ++k) {
    detail::BinAccumulator acc(bins);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      const double p = probs(i, k);
      acc.add(detail::equal_width_bin(p, bins), p, labels[i] == k);
    }
    total += acc.ece(probs.rows());
  }
  return total / static_cast<double>(probs.cols());
}

struct NllResult {
  double value = 0.0;
  std::size_t floored = 0;  // rows whose true-class probability hit the floor
};

inline NllResult nll_detailed(const ProbMatrix& probs, const Labels& labels) {
  detail::check_inputs(probs, labels);
  NllResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double p = probs(i, labels[i]);
    if (!(p >= kProbFloor)) {
      p = kProbFloor;
      ++r.floored;
    }
    sum -= std::log(p);
  }
  r.value = sum / static_cast<double>(probs.rows());
  return r;
}

inline double nll(const ProbMatrix& probs, const Labels& labels) { return nll_detailed(probs, labels).value; }

inline double accuracy(const ProbMatrix& probs, const Labels& labels) {
  detail::check_inputs(probs, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) hits += argmax(probs.row(i)) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

inline double brier(const ProbMatrix& probs, const Labels& labels) {
  detail::check_inputs(probs, labels);
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double t = (labels[i] == k ? 1.0 : 0.0);
      sum += (r[k] - t) * (r[k] - t);
    }
  }
  return sum / static_cast<double>(probs.rows());
}

/// -sum p ln p for one row, with 0 ln 0 = 0.
inline double row_entropy(std::span<const double> row) noexcept {
  double h = 0.0;
  for (double p : row)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

inline double mean_entropy(const ProbMatrix& probs) {
  require(probs.rows() > 0, Errc::empty_input, "no samples");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) sum += row_entropy(probs.row(i));
  return sum / static_cast<double>(probs.rows());
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  std::size_t n = 0;
  std::size_t bin_count = kDefaultBins;
  double ece = 0.0;
  std::optional<double> adaptive_ece;   // absent when M > N
  std::optional<double> classwise_ece;  // absent when K < 2
  double nll = 0.0;
  std::size_t nll_floored = 0;
  double brier = 0.0;
  double accuracy = 0.0;
  double mean_entropy = 0.0;
  ReliabilityBins bins;
};

inline MetricReport evaluate(const ProbMatrix& probs, const Labels& labels, std::size_t bins = kDefaultBins) {
  MetricReport r;
  r.n = probs.rows();
  r.bin_count = bins;
  auto ew = ece_equal_width(probs, labels, bins);
  r.ece = ew.ece;
  r.bins = std::move(ew.bins);
  if (bins <= probs.rows()) r.adaptive_ece = ece_adaptive(probs, labels, bins).ece;
  if (probs.cols() >= 2) r.classwise_ece = ece_classwise(probs, labels, bins);
  const auto nl = nll_detailed(probs, labels);
  r.nll = nl.value;
  r.nll_floored = nl.floored;
  r.brier = brier(probs, labels);
  r.accuracy = accuracy(probs, labels);
  r.mean_entropy = mean_entropy(probs);
  return r;
}

inline nlohmann::json to_json(const ReliabilityBins& b) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& bin : b.bins)
    arr.push_back({{"lo", bin.lo},
                   {"hi", bin.hi},
                   {"count", bin.count},
                   {"avg_conf", bin.avg_confidence},
                   {"accuracy", bin.accuracy},
                   {"gap", bin.gap()}});
  return arr;
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"scale", "fraction"},
          {"n", r.n},
          {"bins", r.bin_count},
          {"ece", r.ece},
          {"adaptive_ece", opt(r.adaptive_ece)},
          {"classwise_ece", opt(r.classwise_ece)},
          {"nll", r.nll},
          {"nll_floored", r.nll_floored},
          {"brier", r.brier},
          {"accuracy", r.accuracy},
          {"mean_entropy", r.mean_entropy},
          {"reliability", to_json(r.bins)}};
}

/// CSV header: bin_lo,bin_hi,count,avg_conf,accuracy,gap
inline void write_reliability_csv(std::ostream& os, const ReliabilityBins& b) {
  os << "bin_lo,bin_hi,count,avg_conf,accuracy,gap\n";
  for (const auto& bin : b.bins)
    os << fmt::format("{},{},{},{},{},{}\n", bin.lo, bin.hi, bin.count, bin.avg_confidence, bin.accuracy,
                      bin.gap());
}

}  // namespace fclip
