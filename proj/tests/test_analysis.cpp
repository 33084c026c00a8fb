#include <gtest/gtest.h>

#include "fclip/analysis.hpp"
#include "fclip/synthetic.hpp"

using namespace fclip;
using namespace fclip::analysis;

namespace {

ProbMatrix probs_of(std::vector<std::vector<double>> rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
  return ProbMatrix::from_values(m);
}

}  // namespace

TEST(Groups, AllCorrectAndConfident) {
  const auto p = probs_of({{0.99, 0.01}, {0.01, 0.99}, {0.99, 0.01}});
  const auto s = select_groups(p, Labels{0, 1, 0}, 0.95);
  EXPECT_TRUE(s.hce_empty());
  EXPECT_EQ(s.lce_idx, (IndexSet{0, 1, 2}));
  const auto none = select_groups(p, Labels{0, 1, 0}, 0.999);
  EXPECT_TRUE(none.hce_empty());
  EXPECT_TRUE(none.lce_empty());
  EXPECT_TRUE(to_json(none)["hce_empty"].get<bool>());
  EXPECT_THROW(select_groups(p, Labels{0, 1, 0}, 1.0), Error);
}

TEST(Groups, StrictThresholdAndPredicateOracle) {
  const auto p = probs_of({{0.95, 0.05}, {0.96, 0.04}});
  EXPECT_EQ(select_groups(p, Labels{0, 1}, 0.95).hce_idx, (IndexSet{1}));
  EXPECT_TRUE(select_groups(p, Labels{0, 1}, 0.95).lce_empty());

  const auto ds = synthetic::overconfident(500, 4, 3, 3.0);
  const auto probs = softmax(base_logits(ds, all_indices(ds)));
  const auto s = select_groups(probs, ds.labels, 0.8);
  IndexSet h, l;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 4; ++k)
      if (probs(i, k) > probs(i, best)) best = k;
    if (probs(i, best) > 0.8) (best == ds.labels[i] ? l : h).push_back(i);
  }
  EXPECT_EQ(s.hce_idx, h);
  EXPECT_EQ(s.lce_idx, l);
}

TEST(Profile, SingleSampleAndConstants) {
  Matrix x(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
  GroupSelection s{0.9, {1}, {0, 2}};
  const auto p = unit_mean_profile(x, s, unit_subset(2, std::nullopt, 0));
  EXPECT_EQ(p.mean_hce, (std::vector<double>{3, 4}));
  EXPECT_EQ(p.mean_lce, (std::vector<double>{3, 4}));
  Matrix neg(2, 1, std::vector<double>{-2, 4});
  EXPECT_EQ(unit_mean_profile(neg, {0.9, {0}, {1}}, {0}, true).mean_hce[0], 2.0);
  EXPECT_THROW(unit_mean_profile(x, {0.9, {}, {0}}, {0}), Error);
}

TEST(Profile, SeededSubset) {
  const auto a = unit_subset(2048, 100, 5), b = unit_subset(2048, 100, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_NE(a, unit_subset(2048, 100, 6));
}

TEST(Histogram, CountsAndDensities) {
  Matrix x(2, 3, std::vector<double>{0.0, 1.0, 2.0, 0.5, 0.5, 0.5});
  const auto h = feature_histogram(x, {0.9, {0}, {1}}, 4);
  EXPECT_EQ(h.count_hce, (std::vector<std::size_t>{1, 0, 1, 1}));
  EXPECT_EQ(h.count_lce, (std::vector<std::size_t>{0, 3, 0, 0}));
  double mass = 0.0;
  for (std::size_t b = 0; b < 4; ++b) mass += h.density_hce[b] * (h.edges[b + 1] - h.edges[b]);
  EXPECT_NEAR(mass, 1.0, 1e-12);
  EXPECT_THROW(feature_histogram(Matrix(1, 2, 0.0), {0.9, {0}, {}}, 4), Error);
}

TEST(Sigma, EstimatorProperties) {
  Matrix x(2, 2, std::vector<double>{0.7, 0.7, 0.0, 0.7});
  EXPECT_DOUBLE_EQ(estimate_sigma(x, {0, 1}), 0.7);
  EXPECT_NEAR(estimate_sigma(x, {0, 1}, true), 0.7 * std::sqrt(0.75), 1e-15);
  EXPECT_THROW(estimate_sigma(Matrix(1, 1, 0.0), {0}), Error);

  SplitMix64 rng(99);
  Matrix hn(1000, 1000);
  for (double& v : hn.values()) v = std::abs(rng.normal());
  IndexSet all(1000);
  std::iota(all.begin(), all.end(), 0);
  const double s = estimate_sigma(hn, all);
  EXPECT_GE(s, 0.998);
  EXPECT_LE(s, 1.002);
}

TEST(Entropy, IdentityClippingGivesZeroDelta) {
  const auto ds = synthetic::clip_efficacy({.n = 400});
  const auto probs = softmax(base_logits(ds, all_indices(ds)));
  const auto sel = select_groups(probs, ds.labels, 0.9);
  ASSERT_FALSE(sel.hce_empty());
  ASSERT_FALSE(sel.lce_empty());
  const auto t = entropy_table(ds, sel, max_abs(*ds.features));
  EXPECT_EQ(t.hce.delta, 0.0);
  EXPECT_EQ(t.lce.delta, 0.0);
  const auto clipped = entropy_table(ds, sel, 1.0);
  EXPECT_GT(clipped.hce.delta, 0.0);
  const auto j = to_json(clipped);
  EXPECT_TRUE(j.contains("hce") && j["hce"].contains("h_before"));
}

TEST(Entropy, UniformSample) {
  Dataset ds;
  ds.n = 1;
  ds.d = 2;
  ds.k = 3;
  ds.features = Matrix(1, 2, 0.5);
  ds.head_weights = Matrix(3, 2, 1.0);
  ds.head_bias = std::vector<double>(3, 0.0);
  ds.labels = {0};
  validate(ds);
  const auto g = group_entropy(ds, {0}, 0.1);
  EXPECT_NEAR(g.h_before, std::log(3.0), 1e-15);
  EXPECT_NEAR(g.h_after, std::log(3.0), 1e-15);
  EXPECT_EQ(g.delta, 0.0);
  ds.features.reset();
  ds.logits = Matrix(1, 3, 0.0);
  EXPECT_THROW(entropy_table(ds, {0.9, {0}, {0}}, 1.0), Error);
}

TEST(Overconfidence, CountsAndMonotonicity) {
  const auto p = probs_of({{1.0, 0.0}, {1.0, 0.0}});
  const auto rows = overconfidence_counts(p, Labels{0, 0}, {0.99});
  EXPECT_EQ(rows[0].correct, 2u);
  EXPECT_EQ(rows[0].wrong, 0u);

  const auto ds = synthetic::overconfident(2000, 10, 8, 3.0);
  const auto probs = softmax(base_logits(ds, all_indices(ds)));
  const auto r = overconfidence_counts(probs, ds.labels);
  ASSERT_EQ(r.size(), 4u);
  for (std::size_t i = 1; i < r.size(); ++i) {
    EXPECT_LE(r[i].correct, r[i - 1].correct);
    EXPECT_LE(r[i].wrong, r[i - 1].wrong);
  }
  std::ostringstream os;
  write_overconfidence_csv(os, r);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "threshold,correct,wrong");
}
