#pragma once

// Dataset model, on-disk interchange format, splitting and head logits.
//
// Directory layout:
//   manifest.json   {format_version:1, n, d, k, dtype:"f32",
//                    tensors:{features, labels, weights?, bias?, logits?},
//                    sha256:{file: hex}?, source:{model, dataset, layer}?}
//   *.bin           raw little-endian row-major payloads, no header bytes.
//                   float32 for real tensors, uint32 for labels.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "fclip/error.hpp"
#include "fclip/matrix.hpp"
#include "fclip/rng.hpp"

namespace fclip {

using IndexSet = std::vector<std::size_t>;
using Labels = std::vector<std::uint32_t>;

/// Stored logits that differ from W*x+b by more than this are reported.
inline constexpr double kLogitDiscrepancyWarn = 1e-3;

struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::optional<Matrix> features;      // n x d
  Labels labels;                       // n
  std::optional<Matrix> head_weights;  // k x d, row = class
  std::optional<std::vector<double>> head_bias;  // k
  std::optional<Matrix> logits;        // n x k
  nlohmann::json source;               // provenance, passed through untouched

  // Max |stored logits - (W x + b)|, set when both routes are available.
  std::optional<double> logit_discrepancy;

  bool has_head() const noexcept {
    return features.has_value() && head_weights.has_value() && head_bias.has_value();
  }
  bool logit_discrepancy_warning() const noexcept {
    return logit_discrepancy.has_value() && *logit_discrepancy > kLogitDiscrepancyWarn;
  }
};

namespace detail {

inline std::string sha256_hex(std::span<const unsigned char> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::invalid_argument, "sha256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, std::span<const unsigned char> bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::missing_file, "cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::missing_file, "short write to " + p.string());
}

template <typename Word>
Word load_le(const unsigned char* p) noexcept {
  Word w = 0;
  for (std::size_t b = 0; b < sizeof(Word); ++b) w |= static_cast<Word>(p[b]) << (8 * b);
  return w;
}

template <typename Word>
void store_le(Word w, unsigned char* p) noexcept {
  for (std::size_t b = 0; b < sizeof(Word); ++b) p[b] = static_cast<unsigned char>(w >> (8 * b));
}

inline std::vector<double> decode_f32(std::span<const unsigned char> bytes) {
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<double>(std::bit_cast<float>(load_le<std::uint32_t>(bytes.data() + 4 * i)));
  return out;
}

inline std::vector<unsigned char> encode_f32(std::span<const double> values) {
  std::vector<unsigned char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i)
    store_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])), out.data() + 4 * i);
  return out;
}

inline std::vector<unsigned char> encode_u32(std::span<const std::uint32_t> values) {
  std::vector<unsigned char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) store_le(values[i], out.data() + 4 * i);
  return out;
}

inline std::size_t manifest_count(const nlohmann::json& m, const char* key) {
  if (!m.contains(key) || !m[key].is_number_unsigned())
    throw Error(Errc::invalid_manifest, std::string("manifest field '") + key + "' missing or not unsigned");
  return m[key].get<std::size_t>();
}

}  // namespace detail

/// z = features * W^T + b. Dot products are accumulated in long double in
/// ascending unit order, so results do not depend on threading or BLAS.
inline Matrix compute_logits(const Dataset& ds, const Matrix& features) {
  require(ds.head_weights.has_value() && ds.head_bias.has_value(), Errc::missing_head,
          "dataset has no classifier head (weights/bias)");
  const Matrix& w = *ds.head_weights;
  const auto& b = *ds.head_bias;
  require(features.cols() == w.cols(), Errc::size_mismatch, "feature width does not match head width");
  Matrix z(features.rows(), w.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto x = features.row(i);
    for (std::size_t c = 0; c < w.rows(); ++c) {
      auto wc = w.row(c);
      long double acc = 0.0L;
      for (std::size_t j = 0; j < wc.size(); ++j)
        acc += static_cast<long double>(x[j]) * static_cast<long double>(wc[j]);
      z(i, c) = static_cast<double>(acc + static_cast<long double>(b[c]));
    }
  }
  return z;
}

/// Logits the pipelines treat as "vanilla": recomputed from the head when it
/// is available (so feature-clip stages compose bit-exactly), stored otherwise.
inline Matrix base_logits(const Dataset& ds, const IndexSet& idx) {
  if (ds.has_head()) return compute_logits(ds, ds.features->select_rows(idx));
  require(ds.logits.has_value(), Errc::invalid_manifest, "dataset has neither head nor logits");
  return ds.logits->select_rows(idx);
}

inline IndexSet all_indices(const Dataset& ds) {
  IndexSet idx(ds.n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

inline void validate(Dataset& ds) {
  require(ds.labels.size() == ds.n, Errc::size_mismatch, "labels length != n");
  for (std::size_t i = 0; i < ds.n; ++i)
    require(ds.labels[i] < ds.k, Errc::label_out_of_range,
            "labels[" + std::to_string(i) + "] = " + std::to_string(ds.labels[i]) + " not in [0, k)");
  auto check_shape = [](const std::optional<Matrix>& m, std::size_t r, std::size_t c, const char* name) {
    if (m && (m->rows() != r || m->cols() != c))
      throw Error(Errc::size_mismatch, std::string(name) + " has wrong shape");
  };
  check_shape(ds.features, ds.n, ds.d, "features");
  check_shape(ds.head_weights, ds.k, ds.d, "weights");
  check_shape(ds.logits, ds.n, ds.k, "logits");
  if (ds.head_bias) require(ds.head_bias->size() == ds.k, Errc::size_mismatch, "bias has wrong length");
  require(ds.has_head() || ds.logits.has_value(), Errc::invalid_manifest,
          "need features+weights+bias or logits");
  ds.logit_discrepancy.reset();
  if (ds.has_head() && ds.logits)
    ds.logit_discrepancy = max_abs_diff(*ds.logits, compute_logits(ds, *ds.features));
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(Errc::missing_file, "missing " + manifest_path.string());
  nlohmann::json m;
  try {
    std::ifstream in(manifest_path);
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_manifest, manifest_path.string() + ": " + e.what());
  }
  if (m.value("format_version", 0) != 1)
    throw Error(Errc::invalid_manifest, "unsupported format_version");
  if (m.value("dtype", std::string{}) != "f32") throw Error(Errc::invalid_manifest, "dtype must be \"f32\"");
  if (!m.contains("tensors") || !m["tensors"].is_object())
    throw Error(Errc::invalid_manifest, "manifest has no tensors object");

  Dataset ds;
  ds.n = detail::manifest_count(m, "n");
  ds.d = detail::manifest_count(m, "d");
  ds.k = detail::manifest_count(m, "k");
  if (m.contains("source")) ds.source = m["source"];
  const auto& tensors = m["tensors"];
  const nlohmann::json sums = m.value("sha256", nlohmann::json::object());

  auto read_tensor = [&](const char* field, std::size_t count) -> std::optional<std::vector<unsigned char>> {
    if (!tensors.contains(field)) return std::nullopt;
    const std::string file = tensors[field].get<std::string>();
    const fs::path p = dir / file;
    if (!fs::exists(p)) throw Error(Errc::missing_file, std::string(field) + ": missing file " + p.string());
    auto bytes = detail::read_file(p);
    if (bytes.size() != count * 4)
      throw Error(Errc::size_mismatch, std::string(field) + " (" + file + "): expected " +
                                           std::to_string(count) + " entries, file holds " +
                                           std::to_string(bytes.size() / 4) +
                                           (bytes.size() % 4 ? " plus a partial word" : ""));
    if (sums.contains(file)) {
      const auto got = detail::sha256_hex(bytes);
      if (got != sums[file].get<std::string>())
        throw Error(Errc::checksum_mismatch, std::string(field) + " (" + file + "): sha256 " + got);
    }
    return bytes;
  };

  auto labels = read_tensor("labels", ds.n);
  if (!labels) throw Error(Errc::invalid_manifest, "manifest does not declare labels");
  ds.labels.resize(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) ds.labels[i] = detail::load_le<std::uint32_t>(labels->data() + 4 * i);

  if (auto b = read_tensor("features", ds.n * ds.d)) ds.features = Matrix(ds.n, ds.d, detail::decode_f32(*b));
  if (auto b = read_tensor("weights", ds.k * ds.d)) ds.head_weights = Matrix(ds.k, ds.d, detail::decode_f32(*b));
  if (auto b = read_tensor("bias", ds.k)) ds.head_bias = detail::decode_f32(*b);
  if (auto b = read_tensor("logits", ds.n * ds.k)) ds.logits = Matrix(ds.n, ds.k, detail::decode_f32(*b));

  validate(ds);
  return ds;
}

/// Writes the dataset in the interchange format. Values are narrowed to
/// float32, so a dataset that was itself loaded from disk round-trips exactly.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir, bool with_checksums = true) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json m;
  m["format_version"] = 1;
  m["n"] = ds.n;
  m["d"] = ds.d;
  m["k"] = ds.k;
  m["dtype"] = "f32";
  m["tensors"] = nlohmann::json::object();
  nlohmann::json sums = nlohmann::json::object();

  auto emit = [&](const char* field, const std::string& file, const std::vector<unsigned char>& bytes) {
    detail::write_file(dir / file, bytes);
    m["tensors"][field] = file;
    if (with_checksums) sums[file] = detail::sha256_hex(bytes);
  };
  emit("labels", "labels.bin", detail::encode_u32(ds.labels));
  if (ds.features) emit("features", "features.bin", detail::encode_f32(ds.features->values()));
  if (ds.head_weights) emit("weights", "weights.bin", detail::encode_f32(ds.head_weights->values()));
  if (ds.head_bias) emit("bias", "bias.bin", detail::encode_f32(*ds.head_bias));
  if (ds.logits) emit("logits", "logits.bin", detail::encode_f32(ds.logits->values()));
  if (with_checksums) m["sha256"] = sums;
  if (!ds.source.is_null()) m["source"] = ds.source;

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(Errc::missing_file, "cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  // When both are set they override the fraction/seed route.
  std::optional<IndexSet> val_idx;
  std::optional<IndexSet> test_idx;
};

struct Split {
  IndexSet val;
  IndexSet test;
};

/// Seeded route: permute [0, n) with seeded_permutation(n, seed); the first
/// round(val_fraction * n) entries form val, the rest test; both sorted.
inline Split split(std::size_t n, const SplitSpec& spec) {
  if (spec.val_idx || spec.test_idx) {
    require(spec.val_idx && spec.test_idx, Errc::invalid_argument, "explicit split needs both val and test");
    std::vector<char> seen(n, 0);
    auto mark = [&](const IndexSet& s, char tag) {
      for (auto i : s) {
        require(i < n, Errc::invalid_argument, "split index " + std::to_string(i) + " out of range");
        require(seen[i] == 0, Errc::invalid_argument,
                "split index " + std::to_string(i) + (seen[i] == tag ? " repeated" : " in both val and test"));
        seen[i] = tag;
      }
    };
    mark(*spec.val_idx, 1);
    mark(*spec.test_idx, 2);
    Split s{*spec.val_idx, *spec.test_idx};
    require(!s.val.empty() && !s.test.empty(), Errc::invalid_argument, "explicit split has an empty side");
    return s;
  }
  require(spec.val_fraction > 0.0 && spec.val_fraction < 1.0, Errc::invalid_argument,
          "val_fraction must lie in (0, 1)");
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * static_cast<double>(n) + 0.5));
  require(n_val >= 1 && n_val < n, Errc::invalid_argument,
          "val_fraction leaves an empty validation or test split for n=" + std::to_string(n));
  const auto perm = seeded_permutation(n, spec.seed);
  Split s;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline Split split(const Dataset& ds, const SplitSpec& spec) { return split(ds.n, spec); }

/// Split file: {"val":[...], "test":[...]}.
inline SplitSpec load_split_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::missing_file, "cannot open split file " + p.string());
  try {
    const auto j = nlohmann::json::parse(in);
    SplitSpec s;
    s.val_idx = j.at("val").get<IndexSet>();
    s.test_idx = j.at("test").get<IndexSet>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_manifest, p.string() + ": " + e.what());
  }
}

inline Labels select_labels(const Labels& labels, const IndexSet& idx) {
  Labels out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace fclip
