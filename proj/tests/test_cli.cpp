#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "fclip/fclip.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using fclip::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path root() {
  static const fs::path p = [] {
    auto r = fs::temp_directory_path() / "fclip_cli_tests";
    fs::remove_all(r);
    fs::create_directories(r);
    return r;
  }();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::size_t lines(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Generated once and shared by the tests below.
const fs::path& efficacy_data() {
  static const fs::path p = [] {
    auto d = root() / "efficacy";
    EXPECT_EQ(cli({"ingest", "--synthetic", "clip_efficacy", "--n", "1500", "--seed", "3", "--out", d.string()}).code, 0);
    return d;
  }();
  return p;
}

void expect_manifest_lists(const fs::path& dir, const std::vector<std::string>& names) {
  const auto m = read_json(dir / "manifest.json");
  std::vector<std::string> listed;
  for (const auto& f : m["files"]) {
    listed.push_back(f["path"]);
    EXPECT_EQ(f["size"].get<std::uintmax_t>(), fs::file_size(dir / f["path"].get<std::string>()));
  }
  for (const auto& n : names) EXPECT_NE(std::find(listed.begin(), listed.end(), n), listed.end()) << n;
  EXPECT_TRUE(m.contains("run_config"));
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"bogus"}).code, 2);
  EXPECT_EQ(cli({"fit", "--method", "xx", "--data", efficacy_data().string(), "--out", (root() / "x").string()}).code, 2);
  EXPECT_EQ(cli({"theory", "--sigma-grid", "1:2", "--out", (root() / "x").string()}).code, 2);
}

TEST(Cli, DataErrorsExitThree) {
  EXPECT_EQ(cli({"eval", "--data", (root() / "missing").string(), "--out", (root() / "x").string()}).code, 3);
}

TEST(Cli, IngestWritesChecksummedDataset) {
  const auto d = efficacy_data();
  const auto m = read_json(d / "manifest.json");
  EXPECT_EQ(m["format_version"], 1);
  EXPECT_TRUE(m.contains("sha256"));
  EXPECT_TRUE(fs::exists(d / "run_manifest.json"));
  const auto again = root() / "reingest";
  EXPECT_EQ(cli({"ingest", "--data", d.string(), "--out", again.string()}).code, 0);
  EXPECT_EQ(slurp(again / "features.bin"), slurp(d / "features.bin"));
}

TEST(Cli, FitFcThenTsHasTwoStagesInOrder) {
  const auto out = root() / "fit_fcts";
  const auto r = cli({"fit", "--method", "fc+ts", "--data", efficacy_data().string(), "--out", out.string(), "--val-fraction", "0.3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cal = read_json(out / "calibrator.json");
  ASSERT_EQ(cal["stages"].size(), 2u);
  EXPECT_EQ(cal["stages"][0]["kind"], "feature_clip");
  EXPECT_EQ(cal["stages"][1]["kind"], "temperature");
  const auto rep = read_json(out / "fit_report.json");
  EXPECT_EQ(rep["stages"][0]["method"], "feature_clip");
  EXPECT_EQ(rep["stages"][1]["method"], "temperature");
  expect_manifest_lists(out, {"calibrator.json", "fit_report.json", "split.json"});
}

TEST(Cli, FitTsOnOverconfidentFixture) {
  const auto data = root() / "over";
  ASSERT_EQ(cli({"ingest", "--synthetic", "overconfident", "--n", "3000", "--k", "5", "--out", data.string()}).code, 0);
  const auto out = root() / "fit_ts";
  ASSERT_EQ(cli({"fit", "--method", "ts", "--data", data.string(), "--out", out.string(), "--val-fraction", "0.5"}).code, 0);
  EXPECT_GT(read_json(out / "calibrator.json")["stages"][0]["T"].get<double>(), 1.0);
}

TEST(Cli, FitFcOnLogitsOnlyNamesMissingHead) {
  auto ds = fclip::synthetic::calibrated(200, 3, 1);
  ds.logits = fclip::compute_logits(ds, *ds.features);
  ds.features.reset();
  const auto data = root() / "logits_only";
  fclip::save_dataset(ds, data);
  const auto r = cli({"fit", "--method", "fc", "--data", data.string(), "--out", (root() / "fit_lo").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("missing_head"), std::string::npos);
  EXPECT_EQ(cli({"fit", "--method", "logit_clip", "--data", data.string(), "--out", (root() / "fit_lc").string()}).code, 0);
}

TEST(Cli, EvalIdentityMatchesNoCalibrator) {
  const auto id = root() / "identity.json";
  std::ofstream(id) << R"({"stages":[{"kind":"identity"}]})";
  const auto a = root() / "eval_none", b = root() / "eval_id";
  ASSERT_EQ(cli({"eval", "--data", efficacy_data().string(), "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"eval", "--data", efficacy_data().string(), "--out", b.string(), "--calibrator", id.string()}).code, 0);
  auto ja = read_json(a / "metrics.json"), jb = read_json(b / "metrics.json");
  ja.erase("calibrator");
  jb.erase("calibrator");
  EXPECT_EQ(ja, jb);
  EXPECT_EQ(ja["scale"], "fraction");
  EXPECT_EQ(slurp(a / "reliability.csv"), slurp(b / "reliability.csv"));
  expect_manifest_lists(a, {"metrics.json", "reliability.csv"});
}

TEST(Cli, EvalRejectsIncompatibleCalibrator) {
  const auto bad = root() / "cts_bad.json";
  std::ofstream(bad) << R"({"stages":[{"kind":"classwise_temperature","T":[1.0,2.0]}]})";
  EXPECT_EQ(cli({"eval", "--data", efficacy_data().string(), "--out", (root() / "eval_bad").string(), "--calibrator", bad.string()}).code, 3);
}

TEST(Cli, ApplyWritesFloat64Probabilities) {
  const auto out = root() / "apply";
  ASSERT_EQ(cli({"apply", "--data", efficacy_data().string(), "--out", out.string(), "--rows", "all"}).code, 0);
  const auto meta = read_json(out / "probs.json");
  EXPECT_EQ(meta["rows"], 1500);
  EXPECT_EQ(fs::file_size(out / "probs.bin"), 1500u * 10u * 8u);
}

TEST(Cli, SweepIsByteIdenticalAcrossRuns) {
  const auto a = root() / "sweep_a", b = root() / "sweep_b";
  for (const auto& o : {a, b})
    ASSERT_EQ(cli({"sweep", "--data", efficacy_data().string(), "--out", o.string(), "--seed", "4", "--c-grid", "0.2:3:12"}).code, 0);
  EXPECT_EQ(slurp(a / "sweep.csv"), slurp(b / "sweep.csv"));
  EXPECT_EQ(lines(a / "sweep.csv"), 13u);
}

TEST(Cli, AnalyzeFlagsEmptyHce) {
  // Every prediction correct and confident.
  fclip::Dataset ds;
  ds.n = 20;
  ds.d = 2;
  ds.k = 2;
  ds.features = fclip::Matrix(20, 2, 0.0);
  for (std::size_t i = 0; i < 20; ++i) {
    (*ds.features)(i, i % 2) = 5.0;
    ds.labels.push_back(static_cast<std::uint32_t>(i % 2));
  }
  ds.head_weights = fclip::Matrix(2, 2, std::vector<double>{1, 0, 0, 1});
  ds.head_bias = std::vector<double>{0, 0};
  fclip::validate(ds);
  const auto data = root() / "all_correct";
  fclip::save_dataset(ds, data);
  const auto out = root() / "analyze_empty";
  const auto r = cli({"analyze", "--tau", "0.95", "--data", data.string(), "--out", out.string(), "--rows", "all"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(out / "analysis.json");
  EXPECT_TRUE(j["groups"]["hce_empty"].get<bool>());
  EXPECT_FALSE(j["groups"]["lce_empty"].get<bool>());
  expect_manifest_lists(out, {"analysis.json", "overconfidence.csv"});
}

TEST(Cli, AnalyzeFullOutputs) {
  const auto out = root() / "analyze_full";
  const auto r = cli({"analyze", "--tau", "0.9", "--data", efficacy_data().string(), "--out", out.string(), "--units", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  expect_manifest_lists(out, {"unit_profile.csv", "histogram.csv", "entropy.json", "overconfidence.csv"});
  EXPECT_EQ(lines(out / "unit_profile.csv"), 21u);
  EXPECT_NE(r.out.find("natural log"), std::string::npos);
}

TEST(Cli, TheoryRowCount) {
  const auto out = root() / "theory";
  ASSERT_EQ(cli({"theory", "--model", "half_normal", "--c", "0.5", "--sigma-grid", "0.1:3:100", "--out", out.string()}).code, 0);
  EXPECT_EQ(lines(out / "curves.csv"), 101u);
  const auto rep = read_json(out / "comparison.json");
  EXPECT_EQ(rep["points"].size(), 100u);
  expect_manifest_lists(out, {"curves.csv", "comparison.json"});
}
