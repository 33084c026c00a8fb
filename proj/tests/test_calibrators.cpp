#include <gtest/gtest.h>

#include "fclip/calibrators.hpp"
#include "fclip/synthetic.hpp"
#include "oracles.hpp"

using namespace fclip;

namespace {

oracle::Rows rows_of(const Matrix& m) {
  oracle::Rows out;
  for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
  return out;
}

// Features of mixed sign so the symmetric clamp is exercised on both sides.
Dataset signed_features(std::uint64_t seed) {
  SplitMix64 rng(seed);
  Dataset ds;
  ds.n = 60;
  ds.d = 6;
  ds.k = 3;
  Matrix x(ds.n, ds.d), w(ds.k, ds.d);
  for (double& v : x.values()) v = synthetic::f32(2.0 * rng.normal());
  for (double& v : w.values()) v = synthetic::f32(rng.normal());
  ds.features = x;
  ds.head_weights = w;
  ds.head_bias = std::vector<double>{0.1, -0.2, 0.0};
  ds.labels.resize(ds.n);
  for (auto& y : ds.labels) y = static_cast<std::uint32_t>(rng.below(3));
  validate(ds);
  return ds;
}

}  // namespace

TEST(Clip, SymmetricClampAndIdempotence) {
  Matrix x(1, 4, std::vector<double>{-3.0, -0.5, 0.5, 3.0});
  const auto y = clip_features(x, 1.0);
  EXPECT_EQ(y.storage(), (std::vector<double>{-1.0, -0.5, 0.5, 1.0}));
  const auto ds = signed_features(1);
  for (double c : {0.1, 0.7, 2.5}) {
    const auto once = clip_features(*ds.features, c);
    EXPECT_EQ(clip_features(once, c), once);
    EXPECT_LE(max_abs(once), c);
  }
}

TEST(Clip, LargeThresholdIsIdentity) {
  const auto ds = signed_features(2);
  const auto idx = all_indices(ds);
  const double big = max_abs(*ds.features);
  const auto vanilla = apply({}, ds, idx);
  for (double c : {big, 2.0 * big, 1e30}) {
    const auto clipped = apply({{FeatureClip{c}}}, ds, idx);
    EXPECT_EQ(clipped, vanilla);
    EXPECT_EQ(to_json(evaluate(clipped, ds.labels)), to_json(evaluate(vanilla, ds.labels)));
  }
}

TEST(Clip, ApplyIsRowWise) {
  const auto ds = signed_features(3);
  const auto all = apply({{FeatureClip{0.8}}}, ds, all_indices(ds));
  const auto some = apply({{FeatureClip{0.8}}}, ds, {5, 17});
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(some(0, k), all(5, k));
    EXPECT_EQ(some(1, k), all(17, k));
  }
}

TEST(Temperature, OverconfidentFixtureGivesTAboveOne) {
  const auto ds = synthetic::overconfident(1500, 10, 11, 2.5);
  const auto z = base_logits(ds, all_indices(ds));
  const auto fit = fit_temperature(z, ds.labels);
  EXPECT_GT(fit.T, 1.0);
  EXPECT_NEAR(fit.T, 2.5, 0.3);
  EXPECT_LT(fit.report.val_nll_after, fit.report.val_nll_before);
  const double oracle_t = oracle::grid_temperature(rows_of(z), ds.labels, 0.05, 5.0, 2000);
  EXPECT_NEAR(fit.T, oracle_t, 0.01);
}

TEST(Temperature, NeverWorseThanIdentityAndKeepsAccuracy) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto ds = synthetic::logit_fixture({200, 5, 1.0 + 0.3 * static_cast<double>(s), 0.5 + 0.2 * static_cast<double>(s), s});
    const auto z = base_logits(ds, all_indices(ds));
    const auto fit = fit_temperature(z, ds.labels);
    EXPECT_LE(fit.report.val_nll_after, detail::nll_tempered(z, ds.labels, 1.0) + 1e-9);
    const auto pv = softmax(z);
    const auto pt = apply({{Temperature{fit.T}}}, ds, all_indices(ds));
    EXPECT_EQ(predictions(pv), predictions(pt));
  }
}

TEST(Temperature, PerfectSeparationPushesToLowerBound) {
  Matrix z(4, 2, std::vector<double>{5, 0, 0, 5, 4, 0, 0, 6});
  const auto fit = fit_temperature(z, Labels{0, 1, 0, 1});
  EXPECT_LT(fit.T, 0.06);
}

TEST(FeatureClipFit, ImprovesValNllAndRecordsTrace) {
  const auto ds = synthetic::clip_efficacy({});
  const auto sp = split(ds, {0.3, 7, {}, {}});
  const auto fit = fit_feature_clip(ds, sp.val);
  EXPECT_GT(fit.c, 0.0);
  EXPECT_LT(fit.report.val_nll_after, fit.report.val_nll_before);
  EXPECT_GE(fit.report.trace.size(), 200u);
  const auto probs = apply({{FeatureClip{fit.c}}}, ds, sp.val);
  EXPECT_NEAR(nll(probs, select_labels(ds.labels, sp.val)), fit.report.val_nll_after, 1e-9);
}

TEST(FeatureClipFit, LogitsOnlyDatasetIsRejected) {
  auto ds = synthetic::calibrated(50, 3, 1);
  ds.logits = compute_logits(ds, *ds.features);
  ds.features.reset();
  try {
    fit_feature_clip(ds, all_indices(ds));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_head);
  }
  EXPECT_NO_THROW(fit_logit_clip(*ds.logits, ds.labels));
}

TEST(Ets, WeightsOnSimplexAndNotWorseThanTs) {
  const auto ds = synthetic::overconfident(1500, 6, 4, 1.8);
  const auto z = base_logits(ds, all_indices(ds));
  const auto ts = fit_temperature(z, ds.labels);
  const auto ets = fit_ets(z, ds.labels, ts.T);
  EXPECT_NEAR(ets.w[0] + ets.w[1] + ets.w[2], 1.0, 1e-12);
  for (double w : ets.w) EXPECT_GE(w, 0.0);
  EXPECT_LE(ets.report.val_nll_after, ts.report.val_nll_after + 1e-9);
  const auto p = ets_probabilities(z, Ets{ts.T, ets.w});
  EXPECT_NEAR(nll(p, ds.labels), ets.report.val_nll_after, 1e-9);
}

TEST(Cts, NotWorseThanTs) {
  const auto ds = synthetic::overconfident(1500, 4, 9, 2.0);
  const auto z = base_logits(ds, all_indices(ds));
  const auto ts = fit_temperature(z, ds.labels);
  const auto cts = fit_cts(z, ds.labels);
  EXPECT_EQ(cts.T.size(), 4u);
  EXPECT_LE(cts.report.val_nll_after, ts.report.val_nll_after + 1e-12);
}

TEST(Spec, JsonRoundTripAndValidation) {
  const CalibratorSpec spec{{FeatureClip{0.5}, Temperature{1.3}, Identity{}, Ets{1.2, {0.5, 0.25, 0.25}}}};
  const auto back = calibrator_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
  auto code = [](const CalibratorSpec& s) {
    try {
      validate(s);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::degenerate;
  };
  EXPECT_EQ(code({{Temperature{1.0}, FeatureClip{0.5}}}), Errc::stage_order);
  EXPECT_EQ(code({{Ets{1.0, {1, 0, 0}}, Temperature{1.0}}}), Errc::stage_order);
  EXPECT_EQ(code({{Temperature{-1.0}}}), Errc::invalid_argument);
  EXPECT_EQ(code({{Ets{1.0, {0.5, 0.6, 0.0}}}}), Errc::invalid_argument);
  EXPECT_THROW(calibrator_from_json({{"stages", {{{"kind", "magic"}}}}}), Error);
}

TEST(Spec, IdentityMatchesEmpty) {
  const auto ds = signed_features(4);
  EXPECT_EQ(apply({{Identity{}}}, ds, all_indices(ds)), apply({}, ds, all_indices(ds)));
}

TEST(Spec, ClasswiseCountMismatch) {
  const auto ds = signed_features(5);
  try {
    apply({{ClasswiseTemperature{{1.0, 1.0}}}}, ds, all_indices(ds));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::size_mismatch);
  }
}

TEST(Sweep, SortedDeterministicAndHeader) {
  const auto ds = synthetic::clip_efficacy({.n = 600});
  const auto idx = all_indices(ds);
  const auto a = sweep_clip(ds, idx, {2.0, 0.5, 1.0});
  const auto b = sweep_clip(ds, idx, {2.0, 0.5, 1.0});
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].c, 0.5);
  EXPECT_EQ(a[2].c, 2.0);
  std::ostringstream s1, s2;
  write_sweep_csv(s1, a);
  write_sweep_csv(s2, b);
  EXPECT_EQ(s1.str(), s2.str());
  EXPECT_EQ(s1.str().substr(0, s1.str().find('\n')), "c,ece,adaptive_ece,accuracy,nll");
}
