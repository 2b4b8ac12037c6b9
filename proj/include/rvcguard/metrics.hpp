#pragma once

// Window-level evaluation: confusion counts, threshold metrics, ROC/AUC and
// report files. FAKE is the positive class; a window is called FAKE when its
// score is >= the threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvcguard/classifiers.hpp"
#include "rvcguard/dataset.hpp"
#include "rvcguard/errors.hpp"

namespace rvcguard {

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  double accuracy() const { return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0; }
  double precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const Label> labels, std::span<const double> scores, double threshold) {
  if (labels.size() != scores.size()) throw ShapeError("labels and scores differ in length");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted_fake = scores[i] >= threshold;
    const bool fake = labels[i] == Label::kFake;
    if (predicted_fake && fake) ++cm.tp;
    else if (predicted_fake) ++cm.fp;
    else if (fake) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // scores >= threshold are called FAKE
  bool operator==(const RocPoint&) const = default;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// Thresholds sweep the distinct scores from high to low, preceded by a +inf
// sentinel at (0, 0). Equal scores move together in one step, so each tied
// pair contributes half a unit of area under trapezoidal integration.
inline RocCurve roc_auc(std::span<const Label> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ShapeError("labels and scores differ in length");
  std::uint64_t pos = 0, neg = 0;
  for (auto l : labels) (l == Label::kFake ? pos : neg)++;
  if (pos == 0 || neg == 0) throw UndefinedMetric("ROC/AUC needs at least one FAKE and one REAL example");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::uint64_t tp = 0, fp = 0;
  double area2 = 0.0;  // twice the area, in units of tp*fp counts
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::uint64_t tp0 = tp, fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == Label::kFake ? tp : fp)++;
    area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
    curve.points.push_back(
        {static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  curve.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

// fpr,tpr,threshold rows; the sentinel threshold is written as "inf".
inline void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  const auto old_precision = out.precision(17);
  out << "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    out << p.fpr << ',' << p.tpr << ',';
    if (std::isinf(p.threshold)) out << (p.threshold > 0 ? "inf" : "-inf");
    else out << p.threshold;
    out << '\n';
  }
  out.precision(old_precision);
}

struct EvalReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // absent when the partition holds one class only
  double threshold = 0.5;
  std::string partition;
  std::map<std::string, std::uint64_t> counts;
  std::string model_kind;
  std::string feature_checksum;

  bool operator==(const EvalReport&) const = default;
};

inline EvalReport make_report(std::span<const Label> labels, std::span<const double> scores, double threshold,
                              RocCurve* curve_out = nullptr) {
  if (labels.empty()) throw EmptyPartition("cannot evaluate an empty partition");
  EvalReport r;
  r.threshold = threshold;
  r.confusion = confusion(labels, scores, threshold);
  r.accuracy = r.confusion.accuracy();
  r.precision = r.confusion.precision();
  r.recall = r.confusion.recall();
  r.f1 = r.confusion.f1();
  const auto fake = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), Label::kFake));
  r.counts["total"] = labels.size();
  r.counts["fake"] = fake;
  r.counts["real"] = labels.size() - fake;
  if (fake > 0 && fake < labels.size()) {
    auto curve = roc_auc(labels, scores);
    r.auc = curve.auc;
    if (curve_out) *curve_out = std::move(curve);
  }
  return r;
}

// Scores raw (unscaled) examples with the given scaler and model.
inline EvalReport evaluate_model(const ClassifierModel& model, const Scaler& scaler,
                                 std::span<const LabeledExample> examples, double threshold = 0.5,
                                 RocCurve* curve_out = nullptr) {
  if (examples.empty()) throw EmptyPartition("cannot evaluate an empty partition");
  std::vector<Label> labels;
  std::vector<double> scores;
  labels.reserve(examples.size());
  scores.reserve(examples.size());
  for (const auto& ex : examples) {
    labels.push_back(ex.label);
    scores.push_back(predict_proba(model, scaler.apply(ex.features)));
  }
  auto r = make_report(labels, scores, threshold, curve_out);
  r.model_kind = model_kind_name(model.kind);
  r.feature_checksum = model.feature_checksum;
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = {
      {"accuracy", r.accuracy},
      {"precision", r.precision},
      {"recall", r.recall},
      {"f1", r.f1},
      {"auc", r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr)},
      {"threshold", r.threshold},
      {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
      {"partition", r.partition},
      {"counts", r.counts},
      {"model", {{"kind", r.model_kind}, {"feature_checksum", r.feature_checksum}}}};
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    r.threshold = j.at("threshold").get<double>();
    const auto& c = j.at("confusion");
    r.confusion = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>(),
                   c.at("tn").get<std::uint64_t>()};
    r.partition = j.at("partition").get<std::string>();
    r.counts = j.at("counts").get<std::map<std::string, std::uint64_t>>();
    r.model_kind = j.at("model").at("kind").get<std::string>();
    r.feature_checksum = j.at("model").at("feature_checksum").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed report: ") + e.what());
  }
}

inline void save_report(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
}

inline EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace rvcguard
