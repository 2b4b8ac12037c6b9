#pragma once

// Labelled feature tables, audio corpus scanning, leakage-controlled splits
// and standardisation.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rvcguard/errors.hpp"
#include "rvcguard/features.hpp"
#include "rvcguard/log.hpp"
#include "rvcguard/random.hpp"

namespace rvcguard {

// FAKE is the positive class.
enum class Label : int { kReal = 0, kFake = 1 };

inline std::string_view label_name(Label l) { return l == Label::kFake ? "FAKE" : "REAL"; }

namespace detail {

inline std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// One CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::optional<double> parse_double(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

// "REAL"/"FAKE", trimmed and case-insensitive.
inline std::optional<Label> parse_label(std::string_view text) {
  const std::string t = detail::lower(detail::trim(text));
  if (t == "real") return Label::kReal;
  if (t == "fake") return Label::kFake;
  return std::nullopt;
}

struct LabeledExample {
  FeatureVector features{};
  Label label = Label::kReal;
  std::string group_key;
};

struct CsvOptions {
  // Non-numeric or empty feature cells: throw ParseError when strict, else
  // drop the row with a warning.
  bool strict = true;
};

inline constexpr std::string_view kLabelColumn = "label";
inline constexpr std::string_view kGroupColumn = "group";

// Columns tried, in order, for the group key.
inline constexpr std::array<std::string_view, 5> kGroupColumnCandidates = {
    "group", "group_key", "clip", "file", "filename"};

// Rows are numbered as file lines: the header is row 1.
inline std::vector<LabeledExample> parse_feature_csv(std::istream& in, const CsvOptions& options = {}) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("feature CSV is empty; a header row is required");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i)
    column.emplace(detail::lower(detail::trim(header[i])), i);

  const auto label_it = column.find(std::string(kLabelColumn));
  if (label_it == column.end()) throw SchemaError("feature CSV has no LABEL column");
  std::array<std::size_t, kFeatureCount> feature_col{};
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    const auto it = column.find(feature_names()[f]);
    if (it == column.end()) throw SchemaError("feature CSV is missing column '" + feature_names()[f] + "'");
    feature_col[f] = it->second;
  }
  std::optional<std::size_t> group_col;
  for (auto name : kGroupColumnCandidates) {
    if (auto it = column.find(std::string(name)); it != column.end()) {
      group_col = it->second;
      break;
    }
  }
  if (!group_col)
    log::warn("feature CSV has no clip/group column; every row is its own group, so windows of "
              "one clip may leak across partitions");

  std::vector<LabeledExample> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const auto cell = [&](std::size_t idx) -> std::string_view {
      return idx < cells.size() ? std::string_view(cells[idx]) : std::string_view();
    };

    const auto label = parse_label(cell(label_it->second));
    if (!label)
      throw ParseError("row " + std::to_string(row) + ": unknown label '" +
                       std::string(cell(label_it->second)) + "'");
    LabeledExample ex;
    ex.label = *label;
    bool ok = true;
    for (std::size_t f = 0; f < kFeatureCount && ok; ++f) {
      const auto v = detail::parse_double(cell(feature_col[f]));
      if (v) {
        ex.features[f] = *v;
        continue;
      }
      const std::string msg = "row " + std::to_string(row) + ": column '" + feature_names()[f] +
                              "' is not a finite number: '" + std::string(cell(feature_col[f])) + "'";
      if (options.strict) throw ParseError(msg);
      log::warn(msg + " (row dropped)");
      ok = false;
    }
    if (!ok) continue;
    if (group_col) ex.group_key = detail::trim(cell(*group_col));
    if (ex.group_key.empty()) ex.group_key = "row" + std::to_string(row);
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<LabeledExample> load_feature_csv(const std::filesystem::path& path,
                                                    const CsvOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature CSV " + path.string());
  return parse_feature_csv(in, options);
}

// Header: the 26 feature names, LABEL, group.
inline void write_feature_csv(std::ostream& out, std::span<const LabeledExample> examples) {
  const auto old_precision = out.precision(17);
  for (const auto& name : feature_names()) out << name << ',';
  out << "LABEL," << kGroupColumn << '\n';
  for (const auto& ex : examples) {
    for (double v : ex.features) out << v << ',';
    out << label_name(ex.label) << ',' << detail::csv_escape(ex.group_key) << '\n';
  }
  out.precision(old_precision);
}

inline void save_feature_csv(const std::filesystem::path& path, std::span<const LabeledExample> examples) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_feature_csv(out, examples);
}

// ---------------------------------------------------------------------------
// Audio corpus

struct CorpusEntry {
  std::filesystem::path path;
  Label label = Label::kReal;
  std::string group_key;
};

// Group key from a file stem. Converted clips are named "<source>-to-<target>"
// and share the group of their source clip. A trailing "-original" on a real
// clip is dropped so "obama-original" and "Obama-to-Biden" land together.
inline std::string corpus_group_key(Label label, std::string_view stem) {
  const std::string s = detail::lower(stem);
  if (label == Label::kFake) {
    if (const auto pos = s.find("-to-"); pos != std::string::npos && pos > 0) return s.substr(0, pos);
    log::warn("fake clip '" + std::string(stem) + "' has no '-to-' source marker; using the full stem as group");
    return s;
  }
  constexpr std::string_view kOriginal = "-original";
  if (s.size() > kOriginal.size() && s.ends_with(kOriginal)) return s.substr(0, s.size() - kOriginal.size());
  return s;
}

// Expects <root>/REAL and <root>/FAKE (matched case-insensitively). Entries
// are sorted by path.
inline std::vector<CorpusEntry> scan_audio_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw CorpusError("corpus root is not a directory: " + root.string());
  std::optional<fs::path> real_dir, fake_dir;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const auto name = detail::lower(entry.path().filename().string());
    if (name == "real") real_dir = entry.path();
    if (name == "fake") fake_dir = entry.path();
  }
  if (!real_dir) throw CorpusError("corpus is missing the REAL directory: " + root.string());
  if (!fake_dir) throw CorpusError("corpus is missing the FAKE directory: " + root.string());

  std::vector<CorpusEntry> out;
  for (const auto& [dir, label] : {std::pair{*real_dir, Label::kReal}, std::pair{*fake_dir, Label::kFake}}) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && detail::lower(entry.path().extension().string()) == ".wav")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (auto& p : files) {
      auto key = corpus_group_key(label, p.stem().string());
      out.push_back(CorpusEntry{std::move(p), label, std::move(key)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

enum class Partition : int { kTrain = 0, kVal = 1, kTest = 2 };

inline constexpr std::array<Partition, 3> kPartitions = {Partition::kTrain, Partition::kVal, Partition::kTest};

inline std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kVal: return "val";
    case Partition::kTest: return "test";
  }
  return "train";
}

inline Partition parse_partition(std::string_view name) {
  const auto n = detail::lower(detail::trim(name));
  if (n == "train") return Partition::kTrain;
  if (n == "val" || n == "validation") return Partition::kVal;
  if (n == "test") return Partition::kTest;
  throw ConfigError("unknown partition '" + std::string(name) + "'");
}

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  double operator[](Partition p) const {
    return p == Partition::kTrain ? train : p == Partition::kVal ? val : test;
  }
  bool operator==(const SplitRatios&) const = default;

  void validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ConfigError("split ratios must all be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  }
};

struct SplitManifest {
  std::uint64_t seed = 42;
  SplitRatios ratios;
  std::map<std::string, Partition> assignment;

  Partition partition_of(const std::string& group) const {
    const auto it = assignment.find(group);
    if (it == assignment.end()) throw ConfigError("group '" + group + "' is not in the split manifest");
    return it->second;
  }

  bool operator==(const SplitManifest&) const = default;
};

inline nlohmann::json to_json(const SplitManifest& m) {
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [group, part] : m.assignment) assignment[group] = partition_name(part);
  return {{"seed", m.seed},
          {"ratios", {m.ratios.train, m.ratios.val, m.ratios.test}},
          {"assignment", std::move(assignment)}};
}

inline SplitManifest manifest_from_json(const nlohmann::json& j) {
  try {
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& r = j.at("ratios");
    if (!r.is_array() || r.size() != 3) throw ConfigError("manifest ratios must be a 3-element array");
    m.ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    m.ratios.validate();
    for (const auto& [group, part] : j.at("assignment").items())
      m.assignment.emplace(group, parse_partition(part.get<std::string>()));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed split manifest: ") + e.what());
  }
}

inline void save_manifest(const std::filesystem::path& path, const SplitManifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline SplitManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

namespace detail {

using ClassCounts = std::array<double, 2>;

// Sum over classes of (have - target)^2 / target for one partition.
inline double split_cost(const ClassCounts& have, const ClassCounts& target) {
  double c = 0.0;
  for (std::size_t k = 0; k < 2; ++k)
    if (target[k] > 0.0) c += (have[k] - target[k]) * (have[k] - target[k]) / target[k];
  return c;
}

}  // namespace detail

// Assigns whole groups to train/val/test in two passes.
//
// Greedy: groups are visited in a seeded random order. Each goes to the
// partition with the largest deficit in the classes the group carries,
//
//   score(p) = sum over classes c of  n_gc / n_g * (target_pc - have_pc)
//
// with target_pc = ratio_p * (class-c examples overall). Ties go to the
// earlier partition.
//
// Refinement: swap pairs of groups between partitions while that strictly
// lowers sum_p sum_c (have_pc - target_pc)^2 / target_pc. Swaps keep the
// per-partition group counts; they repair the class mix when group
// compositions differ. Candidates are one representative per distinct
// (REAL, FAKE) composition, the earliest in the shuffled order.
inline SplitManifest group_stratified_split(std::span<const LabeledExample> examples,
                                            const SplitRatios& ratios, std::uint64_t seed) {
  using detail::ClassCounts;
  ratios.validate();
  if (examples.empty()) throw EmptyDataset("cannot split an empty dataset");

  std::map<std::string, ClassCounts> counts;
  ClassCounts totals{};
  for (const auto& ex : examples) {
    const auto c = static_cast<std::size_t>(ex.label);
    counts[ex.group_key][c] += 1.0;
    totals[c] += 1.0;
  }

  SplitManifest manifest;
  manifest.seed = seed;
  manifest.ratios = ratios;
  if (counts.size() == 1) {
    log::warn("only one group present; assigning everything to train");
    manifest.assignment.emplace(counts.begin()->first, Partition::kTrain);
    return manifest;
  }

  std::vector<std::string> order;
  order.reserve(counts.size());
  for (const auto& kv : counts) order.push_back(kv.first);
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(order));

  std::array<ClassCounts, 3> target{}, have{};
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t c = 0; c < 2; ++c) target[p][c] = ratios[static_cast<Partition>(p)] * totals[c];

  std::vector<std::size_t> part(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& gc = counts.at(order[i]);
    const double n = gc[0] + gc[1];
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t p = 0; p < 3; ++p) {
      double score = 0.0;
      for (std::size_t c = 0; c < 2; ++c)
        if (gc[c] > 0.0) score += gc[c] / n * (target[p][c] - have[p][c]);
      if (score > best_score) {
        best_score = score;
        best = p;
      }
    }
    part[i] = best;
    have[best][0] += gc[0];
    have[best][1] += gc[1];
  }

  // members[p][composition] = positions in `order`, ascending.
  std::array<std::map<ClassCounts, std::set<std::size_t>>, 3> members;
  for (std::size_t i = 0; i < order.size(); ++i) members[part[i]][counts.at(order[i])].insert(i);

  const auto moved = [](ClassCounts h, const ClassCounts& out, const ClassCounts& in) {
    return ClassCounts{h[0] - out[0] + in[0], h[1] - out[1] + in[1]};
  };
  for (std::size_t iter = 0; iter < 4 * order.size(); ++iter) {
    double best_gain = 1e-9;
    std::size_t best_p = 0, best_q = 0;
    ClassCounts best_a{}, best_b{};
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t q = p + 1; q < 3; ++q) {
        const double before = detail::split_cost(have[p], target[p]) + detail::split_cost(have[q], target[q]);
        for (const auto& [a, ia] : members[p])
          for (const auto& [b, ib] : members[q]) {
            if (a == b) continue;
            const double after = detail::split_cost(moved(have[p], a, b), target[p]) +
                                 detail::split_cost(moved(have[q], b, a), target[q]);
            if (before - after > best_gain) {
              best_gain = before - after;
              best_p = p;
              best_q = q;
              best_a = a;
              best_b = b;
            }
          }
      }
    if (best_gain <= 1e-9) break;
    auto take = [&](std::size_t p, const ClassCounts& comp) {
      auto& set = members[p].at(comp);
      const std::size_t i = *set.begin();
      set.erase(set.begin());
      if (set.empty()) members[p].erase(comp);
      return i;
    };
    const std::size_t ia = take(best_p, best_a), ib = take(best_q, best_b);
    part[ia] = best_q;
    part[ib] = best_p;
    members[best_q][best_a].insert(ia);
    members[best_p][best_b].insert(ib);
    have[best_p] = moved(have[best_p], best_a, best_b);
    have[best_q] = moved(have[best_q], best_b, best_a);
  }

  for (std::size_t i = 0; i < order.size(); ++i) manifest.assignment.emplace(order[i], static_cast<Partition>(part[i]));
  return manifest;
}

inline std::vector<LabeledExample> select_partition(std::span<const LabeledExample> examples,
                                                    const SplitManifest& manifest, Partition part) {
  std::vector<LabeledExample> out;
  for (const auto& ex : examples)
    if (manifest.partition_of(ex.group_key) == part) out.push_back(ex);
  return out;
}

// ---------------------------------------------------------------------------
// Standardisation

struct Scaler {
  FeatureVector means{};
  FeatureVector stds = [] {
    FeatureVector s;
    s.fill(1.0);
    return s;
  }();

  // (x - mean) / std. Not idempotent.
  FeatureVector apply(const FeatureVector& x) const {
    FeatureVector out;
    for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = (x[i] - means[i]) / stds[i];
    return out;
  }

  bool operator==(const Scaler&) const = default;
};

inline constexpr double kMinStd = 1e-12;

// Per-feature mean and population standard deviation; near-zero deviations
// are stored as 1.
inline Scaler fit_scaler(std::span<const LabeledExample> train) {
  if (train.empty()) throw EmptyDataset("cannot fit a scaler on an empty training set");
  Scaler s;
  const double n = static_cast<double>(train.size());
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    double mean = 0.0;
    for (const auto& ex : train) mean += ex.features[f];
    mean /= n;
    double var = 0.0;
    for (const auto& ex : train) {
      const double d = ex.features[f] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    s.means[f] = mean;
    s.stds[f] = sd < kMinStd ? 1.0 : sd;
  }
  return s;
}

inline FeatureVector apply_scaler(const Scaler& scaler, const FeatureVector& x) { return scaler.apply(x); }

inline std::vector<LabeledExample> apply_scaler(const Scaler& scaler, std::span<const LabeledExample> xs) {
  std::vector<LabeledExample> out(xs.begin(), xs.end());
  for (auto& ex : out) ex.features = scaler.apply(ex.features);
  return out;
}

inline nlohmann::json to_json(const Scaler& s) { return {{"means", s.means}, {"stds", s.stds}}; }

inline Scaler scaler_from_json(const nlohmann::json& j) {
  Scaler s;
  const auto means = j.at("means").get<std::vector<double>>();
  const auto stds = j.at("stds").get<std::vector<double>>();
  if (means.size() != kFeatureCount || stds.size() != kFeatureCount)
    throw ShapeError("scaler must hold " + std::to_string(kFeatureCount) + " means and stds");
  std::copy(means.begin(), means.end(), s.means.begin());
  std::copy(stds.begin(), stds.end(), s.stds.begin());
  for (double sd : s.stds)
    if (!(sd > 0.0)) throw ShapeError("scaler standard deviations must be positive");
  return s;
}

}  // namespace rvcguard
