#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "fclip/fclip.hpp"

namespace fclip::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::string data_dir;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t bins = kDefaultBins;
  double val_fraction = 0.1;
  std::string split_file;
  std::string rows = "test";
};

// Collects every file a command writes so the manifest can list them.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    require(!ec && fs::is_directory(dir_), Errc::missing_file, "cannot create output directory " + dir_.string());
  }

  const fs::path& dir() const { return dir_; }

  void text(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::missing_file, "cannot write " + (dir_ / name).string());
    out << content;
    out.close();
    record(name);
  }

  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void record(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  void manifest(const std::string& command, const json& run_config) {
    json files = json::array();
    for (const auto& f : files_) files.push_back({{"path", f}, {"size", fs::file_size(dir_ / f)}});
    const json m = {{"command", command}, {"run_config", run_config}, {"files", files}};
    std::ofstream out(dir_ / "manifest.json", std::ios::trunc);
    out << m.dump(2) << "\n";
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

json run_config(const Globals& g, const std::string& command, const json& extra) {
  json split = {{"val_fraction", g.val_fraction}, {"seed", g.seed}};
  if (!g.split_file.empty()) split["split_file"] = g.split_file;
  json j = {{"command", command}, {"data_dir", g.data_dir}, {"out_dir", g.out_dir},       {"seed", g.seed},
            {"bins", g.bins},     {"split", split},         {"rows", g.rows}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

Dataset load(const Globals& g) {
  require(!g.data_dir.empty(), Errc::invalid_argument, "--data is required");
  return load_dataset(g.data_dir);
}

Split make_split(const Globals& g, const Dataset& ds) {
  if (!g.split_file.empty()) return split(ds, load_split_file(g.split_file));
  return split(ds, SplitSpec{g.val_fraction, g.seed, std::nullopt, std::nullopt});
}

IndexSet pick_rows(const Globals& g, const Dataset& ds) {
  if (g.rows == "all") return all_indices(ds);
  const auto s = make_split(g, ds);
  return g.rows == "val" ? s.val : s.test;
}

CalibratorSpec read_calibrator(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::missing_file, "cannot open calibrator " + path);
  try {
    return calibrator_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, path + ": " + e.what());
  }
}

std::string csv(const auto& write, const auto& rows) {
  std::ostringstream os;
  write(os, rows);
  return os.str();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      require(used == item.size(), Errc::invalid_argument, "bad number '" + item + "'");
    } catch (const std::logic_error&) {
      throw Error(Errc::invalid_argument, "bad number '" + item + "'");
    }
  }
  require(!out.empty(), Errc::invalid_argument, "empty list");
  return out;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string synthetic;
  std::size_t n = 1000;
  std::size_t k = 10;
  double temperature = 2.5;
  bool no_checksums = false;
};

json dataset_summary(const Dataset& ds) {
  json j = {{"n", ds.n}, {"d", ds.d}, {"k", ds.k}, {"has_head", ds.has_head()}, {"has_logits", ds.logits.has_value()}};
  if (ds.logit_discrepancy) {
    j["logit_discrepancy"] = *ds.logit_discrepancy;
    j["logit_discrepancy_warning"] = ds.logit_discrepancy_warning();
  }
  return j;
}

int cmd_ingest(const Globals& g, const IngestArgs& a, std::ostream& out) {
  require(!g.out_dir.empty(), Errc::invalid_argument, "--out is required");
  Dataset ds;
  if (!a.synthetic.empty()) {
    if (a.synthetic == "calibrated") ds = synthetic::calibrated(a.n, a.k, g.seed);
    else if (a.synthetic == "overconfident") ds = synthetic::overconfident(a.n, a.k, g.seed, a.temperature);
    else if (a.synthetic == "clip_efficacy") {
      synthetic::ClipEfficacyOptions o;
      o.n = a.n;
      o.k = a.k;
      o.seed = g.seed;
      ds = synthetic::clip_efficacy(o);
    } else {
      throw Error(Errc::invalid_argument, "unknown synthetic generator '" + a.synthetic + "'");
    }
    // Stored logits let logits-only consumers use the same data.
    ds.logits = compute_logits(ds, *ds.features);
    validate(ds);
  } else {
    ds = load(g);
  }
  save_dataset(ds, g.out_dir, !a.no_checksums);
  const fs::path dir(g.out_dir);
  std::ofstream(dir / "summary.json") << dataset_summary(ds).dump(2) << "\n";
  out << fmt::format("ingested n={} d={} k={} head={} logits={}\n", ds.n, ds.d, ds.k, ds.has_head(),
                     ds.logits.has_value());
  if (ds.logit_discrepancy_warning())
    out << fmt::format("warning: stored logits differ from W x + b by up to {:.3g}\n", *ds.logit_discrepancy);
  // manifest.json belongs to the dataset format, so the run manifest gets its own name.
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  json files = json::array();
  for (const auto& nm : names) files.push_back({{"path", nm}, {"size", fs::file_size(dir / nm)}});
  const json cfg = run_config(g, "ingest", {{"synthetic", a.synthetic}, {"n", a.n}, {"k", a.k}});
  std::ofstream(dir / "run_manifest.json") << json({{"command", "ingest"}, {"run_config", cfg}, {"files", files}}).dump(2)
                                           << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

const std::vector<std::string> kMethods{"fc", "ts", "ets", "cts", "logit_clip", "fc+ts", "fc+ets", "fc+cts"};

int cmd_fit(const Globals& g, const std::string& method, std::ostream& out) {
  require(std::find(kMethods.begin(), kMethods.end(), method) != kMethods.end(), Errc::invalid_argument,
          "unknown method '" + method + "' (fc, ts, ets, cts, logit_clip, fc+ts, fc+ets, fc+cts)");
  require(!g.out_dir.empty(), Errc::invalid_argument, "--out is required");
  const Dataset ds = load(g);
  const Split sp = make_split(g, ds);
  const Labels yv = select_labels(ds.labels, sp.val);

  CalibratorSpec spec;
  json reports = json::array();
  const bool with_fc = method.starts_with("fc");
  if (with_fc) {
    auto fc = fit_feature_clip(ds, sp.val);
    spec.stages.emplace_back(FeatureClip{fc.c});
    reports.push_back(to_json(fc.report));
  }
  const std::string rest = method == "fc" ? "" : with_fc ? method.substr(3) : method;
  if (!rest.empty()) {
    const Matrix zv = transformed_logits(spec, ds, sp.val);
    if (rest == "ts") {
      auto t = fit_temperature(zv, yv);
      spec.stages.emplace_back(Temperature{t.T});
      reports.push_back(to_json(t.report));
    } else if (rest == "ets") {
      auto t = fit_temperature(zv, yv);
      auto e = fit_ets(zv, yv, t.T);
      spec.stages.emplace_back(Ets{t.T, e.w});
      reports.push_back(to_json(t.report));
      reports.push_back(to_json(e.report));
    } else if (rest == "cts") {
      auto c = fit_cts(zv, yv);
      spec.stages.emplace_back(ClasswiseTemperature{c.T});
      reports.push_back(to_json(c.report));
    } else if (rest == "logit_clip") {
      auto l = fit_logit_clip(zv, yv);
      spec.stages.emplace_back(LogitClip{l.c});
      reports.push_back(to_json(l.report));
    }
  }
  validate(spec);

  Outputs o(g.out_dir);
  o.json_file("calibrator.json", to_json(spec));
  o.json_file("fit_report.json", {{"method", method}, {"n_val", sp.val.size()}, {"stages", reports}});
  o.json_file("split.json", {{"val", sp.val}, {"test", sp.test}});
  o.manifest("fit", run_config(g, "fit", {{"method", method}}));
  out << fmt::format("fit {} on {} validation rows\n", method, sp.val.size());
  for (const auto& r : reports)
    out << fmt::format("  {:<14} {}  val NLL {:.6f} -> {:.6f}\n", r["method"].get<std::string>(), r["params"].dump(),
                       r["val_nll_before"].get<double>(), r["val_nll_after"].get<double>());
  return kOk;
}

// ---------------------------------------------------------------------------
// apply / eval

int cmd_apply(const Globals& g, const std::string& calibrator, std::ostream& out) {
  require(!g.out_dir.empty(), Errc::invalid_argument, "--out is required");
  const Dataset ds = load(g);
  const auto spec = read_calibrator(calibrator);
  const IndexSet rows = pick_rows(g, ds);
  const auto probs = apply(spec, ds, rows);
  std::vector<unsigned char> bytes(probs.values().size() * 8);
  for (std::size_t i = 0; i < probs.values().size(); ++i)
    detail::store_le(std::bit_cast<std::uint64_t>(probs.values().storage()[i]), bytes.data() + 8 * i);
  Outputs o(g.out_dir);
  detail::write_file(o.dir() / "probs.bin", bytes);
  o.record("probs.bin");
  o.json_file("probs.json", {{"dtype", "f64"}, {"layout", "row-major little-endian"},
                             {"rows", probs.rows()}, {"cols", probs.cols()}, {"indices", rows},
                             {"calibrator", to_json(spec)}});
  o.manifest("apply", run_config(g, "apply", {{"calibrator", calibrator}}));
  out << fmt::format("wrote {} x {} probabilities\n", probs.rows(), probs.cols());
  return kOk;
}

std::string percent_table(const MetricReport& r) {
  auto pct = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", 100.0 * *v) : std::string("n/a"); };
  std::string s;
  s += fmt::format("n             {}\n", r.n);
  s += fmt::format("bins          {}\n", r.bin_count);
  s += fmt::format("ECE (%)       {:.2f}\n", 100.0 * r.ece);
  s += fmt::format("AdaECE (%)    {}\n", pct(r.adaptive_ece));
  s += fmt::format("cwECE (%)     {}\n", pct(r.classwise_ece));
  s += fmt::format("accuracy (%)  {:.2f}\n", 100.0 * r.accuracy);
  s += fmt::format("NLL           {:.4f}\n", r.nll);
  s += fmt::format("Brier         {:.4f}\n", r.brier);
  s += fmt::format("entropy (nat) {:.4f}\n", r.mean_entropy);
  return s;
}

int cmd_eval(const Globals& g, const std::string& calibrator, std::ostream& out) {
  require(!g.out_dir.empty(), Errc::invalid_argument, "--out is required");
  require(g.bins >= 1, Errc::invalid_argument, "--bins must be >= 1");
  const Dataset ds = load(g);
  const auto spec = read_calibrator(calibrator);
  const IndexSet rows = pick_rows(g, ds);
  const auto report = evaluate(apply(spec, ds, rows), select_labels(ds.labels, rows), g.bins);
  Outputs o(g.out_dir);
  auto j = to_json(report);
  j["calibrator"] = to_json(spec);
  o.json_file("metrics.json", j);
  o.text("reliability.csv", csv(write_reliability_csv, report.bins));
  o.manifest("eval", run_config(g, "eval", {{"calibrator", calibrator}}));
  out << percent_table(report);
  return kOk;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const Globals& g, const std::string& grid, std::ostream& out) {
  require(!g.out_dir.empty(), Errc::invalid_argument, "--out is required");
  const Dataset ds = load(g);
  require(ds.has_head(), Errc::missing_head, "sweep needs features and a classifier head");
  std::vector<double> c_grid;
  if (grid.empty()) {
    c_grid = log_space(0.01 * max_abs(*ds.features), max_abs(*ds.features), 50);
  } else if (grid.find(':') != std::string::npos) {
    c_grid = theory::parse_grid(grid);
  } else {
    c_grid = parse_list(grid);
  }
  for (double c : c_grid) require(c > 0.0, Errc::invalid_argument, "clip thresholds must be > 0");
  const auto rows = sweep_clip(ds, pick_rows(g, ds), c_grid, g.bins);
  Outputs o(g.out_dir);
  o.text("sweep.csv", csv(write_sweep_csv, rows));
  o.manifest("sweep", run_config(g, "sweep", {{"c_grid", grid}}));
  const auto best = std::min_element(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.ece < b.ece; });
  out << fmt::format("{} thresholds; lowest ECE {:.2f}% at c = {:.6g}\n", rows.size(), 100.0 * best->ece, best->c);
  return kOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  double tau = analysis::kDefaultTau;
  std::optional<double> c;
  std::optional<std::size_t> units;
  bool absolute = false;
  std::size_t hist_bins = 50;
  std::string thresholds;
  bool include_zeros = false;
};

int cmd_analyze(const Globals& g, const AnalyzeArgs& a, std::ostream& out) {
  require(!g.out_dir.empty(), Errc::invalid_argument, "--out is required");
  const Dataset ds = load(g);
  const IndexSet rows = pick_rows(g, ds);
  const Labels y = select_labels(ds.labels, rows);
  const auto probs = softmax(base_logits(ds, rows));
  auto sel = analysis::select_groups(probs, y, a.tau);
  // Group indices back to dataset rows.
  for (auto* grp : {&sel.hce_idx, &sel.lce_idx})
    for (auto& i : *grp) i = rows[i];

  Outputs o(g.out_dir);
  json summary = {{"groups", analysis::to_json(sel)}, {"log_base", "e"}, {"skipped", json::array()}};
  const auto thresholds = a.thresholds.empty() ? analysis::kDefaultThresholds : parse_list(a.thresholds);
  o.text("overconfidence.csv", csv(analysis::write_overconfidence_csv, analysis::overconfidence_counts(probs, y, thresholds)));

  auto skip = [&](const std::string& what, const std::string& why) {
    summary["skipped"].push_back({{"output", what}, {"reason", why}});
  };
  const bool both = !sel.hce_empty() && !sel.lce_empty();
  if (!ds.has_head()) {
    skip("features", "dataset has no features/head");
  } else {
    if (both) {
      const auto units = analysis::unit_subset(ds.d, a.units, g.seed);
      o.text("unit_profile.csv",
             csv(analysis::write_profile_csv, analysis::unit_mean_profile(*ds.features, sel, units, a.absolute)));
    } else {
      skip("unit_profile.csv", "empty group");
    }
    if (!sel.hce_empty() || !sel.lce_empty()) {
      try {
        o.text("histogram.csv",
               csv(analysis::write_histogram_csv, analysis::feature_histogram(*ds.features, sel, a.hist_bins)));
      } catch (const Error& e) {
        skip("histogram.csv", e.what());
      }
    } else {
      skip("histogram.csv", "both groups empty");
    }
    json sig = json::object();
    for (auto [name, grp] : {std::pair{"hce", &sel.hce_idx}, std::pair{"lce", &sel.lce_idx}}) {
      try {
        sig[name] = analysis::estimate_sigma(*ds.features, *grp, a.include_zeros);
      } catch (const Error&) {
        sig[name] = nullptr;
      }
    }
    sig["include_zeros"] = a.include_zeros;
    summary["sigma_hat"] = sig;
    if (both) {
      double c = 0.0;
      if (a.c) {
        c = *a.c;
      } else {
        c = fit_feature_clip(ds, make_split(g, ds).val).c;
        summary["c_fitted_on_val"] = true;
      }
      const auto table = analysis::entropy_table(ds, sel, c);
      o.json_file("entropy.json", analysis::to_json(table));
      out << "softmax entropy (natural log), c = " << c << "\n" << analysis::format_entropy_table(table);
    } else {
      skip("entropy.json", "empty group");
    }
  }
  o.json_file("analysis.json", summary);
  o.manifest("analyze", run_config(g, "analyze", {{"tau", a.tau}, {"c", a.c ? json(*a.c) : json(nullptr)},
                                                  {"units", a.units ? json(*a.units) : json(nullptr)},
                                                  {"absolute", a.absolute}, {"hist_bins", a.hist_bins},
                                                  {"thresholds", thresholds}, {"include_zeros", a.include_zeros}}));
  out << fmt::format("tau {}: HCE {} samples{}, LCE {} samples{}\n", a.tau, sel.hce_idx.size(),
                     sel.hce_empty() ? " (empty)" : "", sel.lce_idx.size(), sel.lce_empty() ? " (empty)" : "");
  return kOk;
}

// ---------------------------------------------------------------------------
// theory

struct TheoryArgs {
  std::string model = "rectified_mixture";
  std::string c = "0.1,0.23,0.5,1.0";
  std::string sigma_grid = "0:3:100";
};

int cmd_theory(const Globals& g, const TheoryArgs& a, std::ostream& out) {
  require(!g.out_dir.empty(), Errc::invalid_argument, "--out is required");
  const auto model = theory::model_from_string(a.model);
  const auto cs = parse_list(a.c);
  const auto grid = theory::parse_grid(a.sigma_grid);
  const auto rows = theory::emit_theory_curves(model, cs, grid);
  const auto cmp = theory::compare_derivatives(model, cs, grid);
  json sign = json::array();
  for (double c : cs) sign.push_back({{"c", c}, {"sigma_star", theory::derivative_sign_changes(model, c, grid)}});

  Outputs o(g.out_dir);
  o.text("curves.csv", csv(theory::write_curve_csv, rows));
  auto report = theory::to_json(cmp);
  report["sign_changes"] = sign;
  o.json_file("comparison.json", report);
  o.manifest("theory", run_config(g, "theory", {{"model", a.model}, {"c", cs}, {"sigma_grid", a.sigma_grid}}));
  out << fmt::format("{} rows; closed form vs finite difference: max abs {:.3g}, max rel {:.3g}\n", rows.size(),
                     cmp.max_abs_diff, cmp.max_rel_diff);
  for (const auto& s : sign)
    for (double r : s["sigma_star"]) out << fmt::format("  c = {}: dH/dsigma changes sign at sigma = {:.6f}\n", s["c"].get<double>(), r);
  return kOk;
}

int exit_for(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::usage: return kUsage;
    case ErrorCategory::numeric: return kNumeric;
    case ErrorCategory::data: return kData;
  }
  return kData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-hoc calibration with feature clipping", "fclip"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data", g.data_dir, "dataset directory");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--seed", g.seed, "seed for splits and subsets");
  app.add_option("--bins", g.bins, "bins for every ECE variant")->check(CLI::PositiveNumber);
  app.add_option("--val-fraction", g.val_fraction, "validation fraction of the seeded split");
  app.add_option("--split-file", g.split_file, "JSON {\"val\": [...], \"test\": [...]}");
  app.add_option("--rows", g.rows, "rows to evaluate")->check(CLI::IsMember({"test", "val", "all"}));
  app.fallthrough();

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "validate a dataset (or generate one) and re-save with checksums");
  c_ingest->add_option("--synthetic", ingest.synthetic, "calibrated | overconfident | clip_efficacy");
  c_ingest->add_option("--n", ingest.n, "synthetic sample count");
  c_ingest->add_option("--k", ingest.k, "synthetic class count");
  c_ingest->add_option("--temperature", ingest.temperature, "overconfident generator temperature");
  c_ingest->add_flag("--no-checksums", ingest.no_checksums);

  std::string method;
  auto* c_fit = app.add_subcommand("fit", "fit a calibrator on the validation split");
  c_fit->add_option("--method", method, "fc | ts | ets | cts | logit_clip | fc+ts | fc+ets | fc+cts")->required();

  std::string calibrator;
  auto* c_apply = app.add_subcommand("apply", "write calibrated probabilities");
  c_apply->add_option("--calibrator", calibrator, "calibrator JSON");
  auto* c_eval = app.add_subcommand("eval", "metrics and reliability bins");
  c_eval->add_option("--calibrator", calibrator, "calibrator JSON");

  std::string grid;
  auto* c_sweep = app.add_subcommand("sweep", "metrics over a range of feature-clip thresholds");
  c_sweep->add_option("--c-grid", grid, "lo:hi:count or a comma list");

  AnalyzeArgs an;
  auto* c_analyze = app.add_subcommand("analyze", "HCE/LCE group diagnostics");
  c_analyze->add_option("--tau", an.tau, "confidence threshold");
  c_analyze->add_option("--c", an.c, "clip threshold for the entropy table (fitted on val if absent)");
  c_analyze->add_option("--units", an.units, "random unit subset size for the profile");
  c_analyze->add_flag("--abs", an.absolute, "profile absolute feature values");
  c_analyze->add_option("--hist-bins", an.hist_bins, "histogram bins")->check(CLI::PositiveNumber);
  c_analyze->add_option("--thresholds", an.thresholds, "comma list for overconfidence counts");
  c_analyze->add_flag("--include-zeros", an.include_zeros, "count exact zeros in the scale estimate");

  TheoryArgs th;
  auto* c_theory = app.add_subcommand("theory", "entropy-difference curves");
  c_theory->add_option("--model", th.model, "half_normal | rectified_mixture");
  c_theory->add_option("--c", th.c, "comma list of clip thresholds");
  c_theory->add_option("--sigma-grid", th.sigma_grid, "lo:hi:count (lo = 0 means the open end)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(g, ingest, out);
    if (c_fit->parsed()) return cmd_fit(g, method, out);
    if (c_apply->parsed()) return cmd_apply(g, calibrator, out);
    if (c_eval->parsed()) return cmd_eval(g, calibrator, out);
    if (c_sweep->parsed()) return cmd_sweep(g, grid, out);
    if (c_analyze->parsed()) return cmd_analyze(g, an, out);
    if (c_theory->parsed()) return cmd_theory(g, th, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace fclip::cli
