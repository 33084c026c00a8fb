#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fclip/datastore.hpp"
#include "fclip/synthetic.hpp"

using namespace fclip;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fclip_ds_" + name);
  fs::remove_all(p);
  return p;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::invalid_argument;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

Dataset small() {
  auto ds = synthetic::calibrated(40, 4, 3);
  ds.logits = compute_logits(ds, *ds.features);
  validate(ds);
  return ds;
}

}  // namespace

TEST(Datastore, RoundTripIsExact) {
  const auto dir = scratch("roundtrip");
  const auto ds = small();
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.n, ds.n);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(*back.features, *ds.features);
  EXPECT_EQ(*back.head_weights, *ds.head_weights);
  EXPECT_EQ(*back.head_bias, *ds.head_bias);
  ASSERT_TRUE(back.logit_discrepancy.has_value());
  EXPECT_LE(*back.logit_discrepancy, 1e-5);
  EXPECT_FALSE(back.logit_discrepancy_warning());
  const auto m = read_json(dir / "manifest.json");
  EXPECT_EQ(m["format_version"], 1);
  EXPECT_EQ(m["dtype"], "f32");
  EXPECT_EQ(m["sha256"].size(), 5u);
}

TEST(Datastore, LittleEndianFloat32OnDisk) {
  const auto dir = scratch("bytes");
  Dataset ds;
  ds.n = 1;
  ds.d = 0;
  ds.k = 2;
  ds.labels = {1};
  ds.logits = Matrix(1, 2, std::vector<double>{1.0, -2.0});
  validate(ds);
  save_dataset(ds, dir);
  std::ifstream in(dir / "logits.bin", std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(b, (std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0}));
}

TEST(Datastore, ChecksumMismatch) {
  const auto dir = scratch("checksum");
  save_dataset(small(), dir);
  {
    std::fstream f(dir / "features.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('\x7f');
  }
  EXPECT_EQ(code_of([&] { load_dataset(dir); }), Errc::checksum_mismatch);
}

TEST(Datastore, NamedFailures) {
  const auto dir = scratch("failures");
  save_dataset(small(), dir);
  auto m = read_json(dir / "manifest.json");

  EXPECT_EQ(code_of([&] { load_dataset(dir / "nope"); }), Errc::missing_file);

  fs::rename(dir / "bias.bin", dir / "bias.moved");
  try {
    load_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_file);
    EXPECT_NE(std::string(e.what()).find("bias"), std::string::npos);
  }
  fs::rename(dir / "bias.moved", dir / "bias.bin");

  auto m2 = m;
  m2["n"] = 41;
  m2.erase("sha256");
  write_json(dir / "manifest.json", m2);
  try {
    load_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::size_mismatch);
    EXPECT_NE(std::string(e.what()).find("labels"), std::string::npos);
  }

  m2 = m;
  m2["dtype"] = "f16";
  write_json(dir / "manifest.json", m2);
  EXPECT_EQ(code_of([&] { load_dataset(dir); }), Errc::invalid_manifest);
}

TEST(Datastore, LabelOutOfRange) {
  auto ds = small();
  ds.labels[5] = 4;
  try {
    validate(ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::label_out_of_range);
    EXPECT_NE(std::string(e.what()).find("labels[5]"), std::string::npos);
  }
}

TEST(Datastore, DiscrepancyWarning) {
  auto ds = small();
  (*ds.logits)(0, 0) += 0.01;
  validate(ds);
  EXPECT_TRUE(ds.logit_discrepancy_warning());
  EXPECT_NEAR(*ds.logit_discrepancy, 0.01, 1e-12);
}

TEST(Datastore, LogitsOnlyAndHeadOnly) {
  auto ds = small();
  ds.features.reset();
  EXPECT_NO_THROW(validate(ds));
  EXPECT_FALSE(ds.has_head());
  EXPECT_EQ(base_logits(ds, {0, 1}).rows(), 2u);
  ds.logits.reset();
  EXPECT_EQ(code_of([&] { validate(ds); }), Errc::invalid_manifest);
}

TEST(Split, DeterministicDisjointCovering) {
  for (std::size_t n : {10u, 37u, 999u}) {
    const SplitSpec spec{0.1, 42, std::nullopt, std::nullopt};
    const auto a = split(n, spec), b = split(n, spec);
    EXPECT_EQ(a.val, b.val);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.val.size(), static_cast<std::size_t>(std::floor(0.1 * n + 0.5)));
    std::set<std::size_t> all(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    EXPECT_EQ(all.size(), n);
    EXPECT_TRUE(std::is_sorted(a.val.begin(), a.val.end()));
  }
  EXPECT_NE(split(100, {0.3, 1, {}, {}}).val, split(100, {0.3, 2, {}, {}}).val);
}

TEST(Split, FixedReferenceSequence) {
  // SplitMix64 from seed 0, first outputs of the reference generator.
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next(), 0x6E789E6AA1B965F4ULL);
}

TEST(Split, InvalidRequests) {
  EXPECT_EQ(code_of([] { split(5, {0.01, 0, {}, {}}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { split(5, {1.0, 0, {}, {}}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { split(5, {0.1, 0, IndexSet{0, 1}, IndexSet{1, 2}}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { split(5, {0.1, 0, IndexSet{0, 7}, IndexSet{1}}); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { split(5, {0.1, 0, IndexSet{0}, std::nullopt}); }), Errc::invalid_argument);
  const auto s = split(5, {0.1, 0, IndexSet{4, 0}, IndexSet{1, 2}});
  EXPECT_EQ(s.val, (IndexSet{4, 0}));
}

TEST(Split, FileRoundTrip) {
  const auto dir = scratch("splitfile");
  fs::create_directories(dir);
  write_json(dir / "split.json", {{"val", {0, 3}}, {"test", {1, 2, 4}}});
  const auto s = split(5, load_split_file(dir / "split.json"));
  EXPECT_EQ(s.test, (IndexSet{1, 2, 4}));
  write_json(dir / "bad.json", {{"val", {0}}});
  EXPECT_EQ(code_of([&] { load_split_file(dir / "bad.json"); }), Errc::invalid_manifest);
}
