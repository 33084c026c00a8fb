#pragma once

// Seeded synthetic datasets for tests, acceptance checks and CLI demos.
// Generated values are rounded to float32 so a save/load round trip through
// the on-disk format is lossless.

#include <cmath>
#include <cstdint>
#include <vector>

#include "fclip/datastore.hpp"
#include "fclip/error.hpp"
#include "fclip/matrix.hpp"
#include "fclip/metrics.hpp"
#include "fclip/rng.hpp"

namespace fclip::synthetic {

inline double f32(double v) noexcept { return static_cast<double>(static_cast<float>(v)); }

/// Draws a class from the probability row by inverse CDF.
inline std::uint32_t sample_class(std::span<const double> p, SplitMix64& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<std::uint32_t>(k);
  }
  return static_cast<std::uint32_t>(p.size() - 1);
}

inline Dataset identity_head_dataset(Matrix features, std::size_t k) {
  Dataset ds;
  ds.n = features.rows();
  ds.d = k;
  ds.k = k;
  Matrix w(k, k, 0.0);
  for (std::size_t c = 0; c < k; ++c) w(c, c) = 1.0;
  ds.head_weights = std::move(w);
  ds.head_bias = std::vector<double>(k, 0.0);
  ds.features = std::move(features);
  ds.labels.assign(ds.n, 0);
  return ds;
}

struct LogitFixtureOptions {
  std::size_t n = 1000;
  std::size_t k = 10;
  double logit_scale = 3.0;        // std of the raw logits
  double true_temperature = 1.0;   // labels follow softmax(z / true_temperature)
  std::uint64_t seed = 0;
};

/// Features are the logits themselves (identity head, zero bias), drawn
/// i.i.d. N(0, logit_scale^2). Labels are sampled from
/// softmax(z / true_temperature), so with true_temperature = 1 correctness is
/// Bernoulli(confidence) and the model is calibrated; with a temperature
/// above 1 it is overconfident and the best scalar temperature is about
/// true_temperature.
inline Dataset logit_fixture(const LogitFixtureOptions& o) {
  require(o.n > 0 && o.k >= 2, Errc::invalid_argument, "need n > 0 and k >= 2");
  require(o.true_temperature > 0.0, Errc::invalid_argument, "temperature must be > 0");
  SplitMix64 rng(o.seed);
  Matrix z(o.n, o.k);
  for (double& v : z.values()) v = f32(o.logit_scale * rng.normal());
  Dataset ds = identity_head_dataset(z, o.k);
  for (double& v : z.values()) v /= o.true_temperature;
  const auto p = softmax(z);
  for (std::size_t i = 0; i < o.n; ++i) ds.labels[i] = sample_class(p.row(i), rng);
  ds.source = {{"generator", "logit_fixture"}, {"seed", o.seed}, {"true_temperature", o.true_temperature}};
  validate(ds);
  return ds;
}

inline Dataset calibrated(std::size_t n, std::size_t k, std::uint64_t seed, double logit_scale = 3.0) {
  return logit_fixture({n, k, logit_scale, 1.0, seed});
}

inline Dataset overconfident(std::size_t n, std::size_t k, std::uint64_t seed, double true_temperature = 2.5) {
  return logit_fixture({n, k, 3.0, true_temperature, seed});
}

// ---------------------------------------------------------------------------
// Feature-clipping construction
//
// K classes, each owning a block of B feature units; the head sums the block
// (W = 1 on the block, 0 elsewhere, b = 0). Every sample first picks a
// predicted class y^ uniformly and fills all units outside block y^ with
// |N(0, background^2)|.
//
// clean (probability 1 - hard_fraction): block y^ units are
//   clean_level * |1 + 0.2 N(0,1)|. The label is sampled from the softmax of
//   the resulting logits, so these samples are calibrated.
// hard: one unit of block y^ carries a spike U(spike_lo, spike_hi), the other
//   block units sit at hard_level. The spike inflates the logit margin to
//   near-certain confidence, but the label equals y^ only with probability
//   hard_accuracy (otherwise another class, uniformly).
//
// The spike is the noise-carrying unit: clipping features near the clean
// activation range removes it while leaving y^ the argmax, so clipping
// restores calibration of the hard samples without moving accuracy.

struct ClipEfficacyOptions {
  std::size_t n = 6000;
  std::size_t k = 10;
  std::size_t block = 8;
  double background = 0.1;
  double clean_level = 0.7;
  double hard_fraction = 0.2;
  double hard_level = 0.3;
  double spike_lo = 8.0;
  double spike_hi = 12.0;
  double hard_accuracy = 0.55;
  std::uint64_t seed = 7;
};

inline Dataset clip_efficacy(const ClipEfficacyOptions& o) {
  require(o.n > 0 && o.k >= 2 && o.block >= 1, Errc::invalid_argument, "need n > 0, k >= 2, block >= 1");
  SplitMix64 rng(o.seed);
  const std::size_t d = o.k * o.block;
  Matrix x(o.n, d);
  Labels y(o.n);
  Matrix w(o.k, d, 0.0);
  for (std::size_t c = 0; c < o.k; ++c)
    for (std::size_t j = 0; j < o.block; ++j) w(c, c * o.block + j) = 1.0;
  for (std::size_t i = 0; i < o.n; ++i) {
    const auto pred = static_cast<std::size_t>(rng.below(o.k));
    const bool hard = rng.uniform() < o.hard_fraction;
    for (std::size_t j = 0; j < d; ++j) x(i, j) = f32(std::abs(o.background * rng.normal()));
    const std::size_t base = pred * o.block;
    if (hard) {
      const auto spike = static_cast<std::size_t>(rng.below(o.block));
      for (std::size_t j = 0; j < o.block; ++j)
        x(i, base + j) = j == spike ? f32(o.spike_lo + (o.spike_hi - o.spike_lo) * rng.uniform()) : f32(o.hard_level);
      if (rng.uniform() < o.hard_accuracy) {
        y[i] = static_cast<std::uint32_t>(pred);
      } else {
        auto other = static_cast<std::size_t>(rng.below(o.k - 1));
        y[i] = static_cast<std::uint32_t>(other >= pred ? other + 1 : other);
      }
    } else {
      for (std::size_t j = 0; j < o.block; ++j) x(i, base + j) = f32(o.clean_level * std::abs(1.0 + 0.2 * rng.normal()));
      Matrix z(1, o.k, 0.0);
      for (std::size_t c = 0; c < o.k; ++c)
        for (std::size_t j = 0; j < o.block; ++j) z(0, c) += x(i, c * o.block + j);
      y[i] = sample_class(softmax(z).row(0), rng);
    }
  }
  Dataset ds;
  ds.n = o.n;
  ds.d = d;
  ds.k = o.k;
  ds.features = std::move(x);
  ds.labels = std::move(y);
  ds.head_weights = std::move(w);
  ds.head_bias = std::vector<double>(o.k, 0.0);
  ds.source = {{"generator", "clip_efficacy"}, {"seed", o.seed}};
  validate(ds);
  return ds;
}

}  // namespace fclip::synthetic
