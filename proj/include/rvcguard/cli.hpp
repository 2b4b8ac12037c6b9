#pragma once

// Command-line front end: features, split, train, evaluate, monitor.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rvcguard/audio.hpp"
#include "rvcguard/classifiers.hpp"
#include "rvcguard/dataset.hpp"
#include "rvcguard/features.hpp"
#include "rvcguard/metrics.hpp"
#include "rvcguard/streaming.hpp"

namespace rvcguard {

// Settings shared by all subcommands. Loaded from a JSON config file, then
// overridden by any flag given explicitly on the command line.
struct RunConfig {
  std::string dataset;
  std::string manifest;
  std::string model;
  std::string report;
  std::string roc;
  SplitRatios ratios;
  std::uint64_t split_seed = 42;
  ModelKind model_kind = ModelKind::kMlp;
  TrainConfig train;
  AlertPolicy policy;
  double threshold = 0.5;
  bool strict = true;

  bool operator==(const RunConfig&) const = default;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"paths", {{"dataset", c.dataset}, {"manifest", c.manifest}, {"model", c.model}, {"report", c.report},
                     {"roc", c.roc}}},
          {"split", {{"seed", c.split_seed}, {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}}}},
          {"model_kind", model_kind_name(c.model_kind)},
          {"train", to_json(c.train)},
          {"policy", to_json(c.policy)},
          {"threshold", c.threshold},
          {"strict", c.strict}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.dataset = p.value("dataset", c.dataset);
      c.manifest = p.value("manifest", c.manifest);
      c.model = p.value("model", c.model);
      c.report = p.value("report", c.report);
      c.roc = p.value("roc", c.roc);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split_seed = s.value("seed", c.split_seed);
      if (s.contains("ratios")) {
        const auto r = s.at("ratios").get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("config split.ratios must have three entries");
        c.ratios = {r[0], r[1], r[2]};
      }
    }
    if (j.contains("model_kind")) c.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("policy")) c.policy = alert_policy_from_json(j.at("policy"));
    c.threshold = j.value("threshold", c.threshold);
    c.strict = j.value("strict", c.strict);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline SplitRatios parse_ratios(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = detail::parse_double(item);
    if (!v) throw ConfigError("bad ratio '" + item + "'");
    parts.push_back(*v);
  }
  if (parts.size() != 3) throw ConfigError("--ratios takes three comma-separated fractions");
  SplitRatios r{parts[0], parts[1], parts[2]};
  r.validate();
  return r;
}

namespace detail {

// Scans a REAL/FAKE corpus and extracts one feature row per full second.
inline std::vector<LabeledExample> extract_corpus_features(const std::filesystem::path& root) {
  std::vector<LabeledExample> out;
  const auto& extractor = default_extractor();
  for (const auto& entry : scan_audio_corpus(root)) {
    const auto audio = to_canonical(read_wav_file(entry.path));
    for (const auto& w : segment_windows(audio))
      out.push_back(LabeledExample{extractor(w.samples), entry.label, entry.group_key});
  }
  return out;
}

struct Partitions {
  std::vector<LabeledExample> train, val, test;
};

inline Partitions partition(const std::vector<LabeledExample>& examples, const SplitManifest& manifest) {
  Partitions p;
  for (const auto& ex : examples) {
    switch (manifest.partition_of(ex.group_key)) {
      case Partition::kTrain: p.train.push_back(ex); break;
      case Partition::kVal: p.val.push_back(ex); break;
      case Partition::kTest: p.test.push_back(ex); break;
    }
  }
  return p;
}

template <typename T>
void override_if(const CLI::Option* opt, T& field, const T& value) {
  if (opt && opt->count() > 0) field = value;
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Real-time detection of voice-converted speech on one-second windows", "rvcguard"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration; flags override its values");

  // Flag storage. Applied on top of the config only when given.
  std::string audio_root, csv_path, out_path, manifest_path, model_path, audio_path, roc_path;
  std::string ratios_text, model_kind_text, policy_text, partition_text = "test";
  std::uint64_t split_seed = 42, train_seed = 42;
  bool lenient = false;
  double threshold = 0.5, lr = 0, l2 = 0, momentum = 0, tau_raise = 0, tau_clear = 0, tau_window = 0;
  int epochs = 0, batch = 0, patience = 0, hidden = 0, knn_k = 0, pol_k = 0, pol_m = 0, raw_rate = 0, channels = 1;

  auto* features = app.add_subcommand("features", "Extract per-window features from a REAL/FAKE audio corpus");
  features->add_option("audio_root", audio_root, "Directory holding REAL/ and FAKE/")->required();
  features->add_option("--out", out_path, "Output feature CSV")->required();

  auto* split = app.add_subcommand("split", "Assign clip groups to train/val/test");
  split->add_option("csv", csv_path, "Feature CSV")->required();
  auto* split_seed_opt = split->add_option("--seed", split_seed, "Shuffle seed");
  auto* ratios_opt = split->add_option("--ratios", ratios_text, "train,val,test fractions (default 0.7,0.15,0.15)");
  auto* split_out_opt = split->add_option("--out", out_path, "Output manifest JSON");
  split->add_flag("--lenient", lenient, "Drop unparsable rows instead of failing");

  auto* train = app.add_subcommand("train", "Fit the scaler and a classifier on the train partition");
  train->add_option("csv", csv_path, "Feature CSV")->required();
  auto* train_manifest_opt = train->add_option("--manifest", manifest_path, "Split manifest JSON");
  auto* kind_opt = train->add_option("--model-kind", model_kind_text, "logreg, mlp or knn");
  auto* train_out_opt = train->add_option("--out", out_path, "Output model JSON");
  auto* lr_opt = train->add_option("--learning-rate", lr);
  auto* epochs_opt = train->add_option("--epochs", epochs);
  auto* batch_opt = train->add_option("--batch-size", batch);
  auto* l2_opt = train->add_option("--l2", l2);
  auto* momentum_opt = train->add_option("--momentum", momentum);
  auto* patience_opt = train->add_option("--patience", patience);
  auto* train_seed_opt = train->add_option("--seed", train_seed);
  auto* hidden_opt = train->add_option("--hidden-units", hidden);
  auto* knn_opt = train->add_option("--k-neighbors", knn_k);
  auto* train_threshold_opt = train->add_option("--threshold", threshold);
  train->add_flag("--lenient", lenient);

  auto* evaluate = app.add_subcommand("evaluate", "Score one partition and write a metrics report");
  evaluate->add_option("model", model_path, "Model JSON")->required();
  evaluate->add_option("csv", csv_path, "Feature CSV")->required();
  auto* eval_manifest_opt = evaluate->add_option("--manifest", manifest_path, "Split manifest JSON");
  evaluate->add_option("--partition", partition_text, "train, val or test (default test)");
  auto* eval_out_opt = evaluate->add_option("--out", out_path, "Output report JSON");
  auto* roc_opt = evaluate->add_option("--roc", roc_path, "Output ROC curve CSV");
  auto* eval_threshold_opt = evaluate->add_option("--threshold", threshold);
  evaluate->add_flag("--lenient", lenient);

  auto* mon = app.add_subcommand("monitor", "Stream a file through the detector, JSON lines on stdout");
  mon->add_option("model", model_path, "Model JSON")->required();
  mon->add_option("audio", audio_path, "WAV file, or raw 16-bit PCM with --raw-rate")->required();
  auto* policy_opt = mon->add_option("--policy", policy_text, "running_mean or m_of_k");
  auto* k_opt = mon->add_option("--k", pol_k, "Aggregation window in seconds");
  auto* m_opt = mon->add_option("--m", pol_m, "Trigger count for m_of_k");
  auto* raise_opt = mon->add_option("--tau-raise", tau_raise);
  auto* clear_opt = mon->add_option("--tau-clear", tau_clear);
  auto* window_opt = mon->add_option("--tau-window", tau_window);
  mon->add_option("--raw-rate", raw_rate, "Treat input as headerless PCM16 at this rate");
  mon->add_option("--channels", channels, "Channel count for raw PCM");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (lenient) rc.strict = false;
    const CsvOptions csv_opts{rc.strict};

    if (features->parsed()) {
      const auto examples = detail::extract_corpus_features(audio_root);
      save_feature_csv(out_path, examples);
      err << "wrote " << examples.size() << " windows to " << out_path << "\n";
      return 0;
    }

    if (split->parsed()) {
      detail::override_if(split_seed_opt, rc.split_seed, split_seed);
      if (ratios_opt->count()) rc.ratios = parse_ratios(ratios_text);
      detail::override_if(split_out_opt, rc.manifest, out_path);
      if (rc.manifest.empty()) throw ConfigError("split needs --out (or paths.manifest in the config)");
      const auto examples = load_feature_csv(csv_path, csv_opts);
      const auto manifest = group_stratified_split(examples, rc.ratios, rc.split_seed);
      save_manifest(rc.manifest, manifest);
      std::map<Partition, std::size_t> sizes;
      for (const auto& ex : examples) ++sizes[manifest.partition_of(ex.group_key)];
      err << "groups: " << manifest.assignment.size() << "; windows train/val/test: " << sizes[Partition::kTrain]
          << "/" << sizes[Partition::kVal] << "/" << sizes[Partition::kTest] << "\n";
      return 0;
    }

    if (train->parsed()) {
      detail::override_if(train_manifest_opt, rc.manifest, manifest_path);
      detail::override_if(train_out_opt, rc.model, out_path);
      if (kind_opt->count()) rc.model_kind = parse_model_kind(model_kind_text);
      detail::override_if(lr_opt, rc.train.learning_rate, lr);
      detail::override_if(epochs_opt, rc.train.epochs_max, epochs);
      detail::override_if(batch_opt, rc.train.batch_size, batch);
      detail::override_if(l2_opt, rc.train.l2_lambda, l2);
      detail::override_if(momentum_opt, rc.train.momentum, momentum);
      detail::override_if(patience_opt, rc.train.patience, patience);
      detail::override_if(train_seed_opt, rc.train.seed, train_seed);
      detail::override_if(hidden_opt, rc.train.hidden_units, hidden);
      detail::override_if(knn_opt, rc.train.k_neighbors, knn_k);
      detail::override_if(train_threshold_opt, rc.threshold, threshold);
      if (rc.manifest.empty()) throw ConfigError("train needs --manifest");
      if (rc.model.empty()) throw ConfigError("train needs --out");

      const auto examples = load_feature_csv(csv_path, csv_opts);
      const auto parts = detail::partition(examples, load_manifest(rc.manifest));
      const Scaler scaler = fit_scaler(parts.train);
      const auto train_scaled = apply_scaler(scaler, parts.train);
      const auto val_scaled = apply_scaler(scaler, parts.val);
      ClassifierModel model = train_model(rc.model_kind, train_scaled, val_scaled, rc.train);
      model.scaler = scaler;
      save_model(model, rc.model);

      nlohmann::json summary = {{"model", rc.model},
                                {"kind", model_kind_name(model.kind)},
                                {"train_windows", parts.train.size()},
                                {"val_windows", parts.val.size()},
                                {"best_epoch", model.history.best_epoch}};
      if (!parts.val.empty()) {
        auto report = evaluate_model(model, scaler, parts.val, rc.threshold);
        report.partition = "val";
        summary["val"] = to_json(report);
      }
      out << summary.dump(2) << "\n";
      return 0;
    }

    if (evaluate->parsed()) {
      detail::override_if(eval_manifest_opt, rc.manifest, manifest_path);
      detail::override_if(eval_out_opt, rc.report, out_path);
      detail::override_if(roc_opt, rc.roc, roc_path);
      detail::override_if(eval_threshold_opt, rc.threshold, threshold);
      const ClassifierModel model = load_model(model_path);
      const auto examples = load_feature_csv(csv_path, csv_opts);
      const Partition part = parse_partition(partition_text);
      std::vector<LabeledExample> selected;
      std::map<std::string, std::uint64_t> partition_counts;
      if (rc.manifest.empty()) {
        selected = examples;
      } else {
        const auto parts = detail::partition(examples, load_manifest(rc.manifest));
        partition_counts = {{"train", parts.train.size()}, {"val", parts.val.size()}, {"test", parts.test.size()}};
        selected = part == Partition::kTrain ? parts.train : part == Partition::kVal ? parts.val : parts.test;
      }
      RocCurve curve;
      auto report = evaluate_model(model, model.scaler, selected, rc.threshold, &curve);
      report.partition = rc.manifest.empty() ? "all" : std::string(partition_name(part));
      for (const auto& [name, n] : partition_counts) report.counts["partition_" + name] = n;
      if (!rc.report.empty()) save_report(rc.report, report);
      if (!rc.roc.empty()) {
        if (!report.auc) throw UndefinedMetric("ROC curve needs both classes in the evaluated partition");
        std::ofstream roc_out(rc.roc);
        if (!roc_out) throw Error("cannot write " + rc.roc);
        write_roc_csv(roc_out, curve);
      }
      out << to_json(report).dump(2) << "\n";
      return 0;
    }

    if (mon->parsed()) {
      if (policy_opt->count()) rc.policy.kind = parse_policy_kind(policy_text);
      detail::override_if(k_opt, rc.policy.k, pol_k);
      detail::override_if(m_opt, rc.policy.m, pol_m);
      detail::override_if(raise_opt, rc.policy.tau_raise, tau_raise);
      detail::override_if(clear_opt, rc.policy.tau_clear, tau_clear);
      detail::override_if(window_opt, rc.policy.tau_window, tau_window);
      rc.policy.validate();
      const ClassifierModel model = load_model(model_path);
      const auto bytes = read_file_bytes(audio_path);
      AudioBuffer audio;
      try {
        audio = raw_rate > 0 ? decode_raw_pcm16(bytes, raw_rate, channels) : decode_wav(bytes);
      } catch (const DecodeError& e) {
        throw DecodeError(audio_path + ": " + e.what());
      }
      const auto session = monitor(audio, model, model.scaler, rc.policy,
                                   [&](const MonitorRecord& r) { out << to_jsonl(r) << "\n"; });
      if (!session.records.empty())
        err << "windows: " << session.records.size() << "; realtime_factor: " << realtime_factor(session) << "\n";
      else
        err << "windows: 0 (input shorter than one second)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace rvcguard
