#pragma once

// Per-second scoring of an audio stream and alert aggregation.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rvcguard/audio.hpp"
#include "rvcguard/classifiers.hpp"
#include "rvcguard/dataset.hpp"
#include "rvcguard/errors.hpp"
#include "rvcguard/features.hpp"

namespace rvcguard {

enum class PolicyKind { kRunningMean, kMOfK };

inline std::string_view policy_kind_name(PolicyKind k) {
  return k == PolicyKind::kMOfK ? "m_of_k" : "running_mean";
}

inline PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "running_mean") return PolicyKind::kRunningMean;
  if (name == "m_of_k") return PolicyKind::kMOfK;
  throw ConfigError("unknown alert policy '" + std::string(name) + "' (expected running_mean or m_of_k)");
}

// running_mean: aggregate = mean of the last k probabilities (fewer during
//   warm-up); raise at >= tau_raise once k windows have been seen, clear
//   below tau_clear.
// m_of_k: aggregate = how many of the last k probabilities are >= tau_window;
//   raise when it reaches m, clear when it drops below m.
struct AlertPolicy {
  PolicyKind kind = PolicyKind::kRunningMean;
  int k = 5;
  int m = 3;
  double tau_raise = 0.7;
  double tau_clear = 0.4;
  double tau_window = 0.5;

  void validate() const {
    if (k < 1) throw ConfigError("policy k must be at least 1");
    if (kind == PolicyKind::kMOfK && (m < 1 || m > k)) throw ConfigError("policy m must satisfy 1 <= m <= k");
    if (!(tau_clear >= 0.0 && tau_clear < tau_raise && tau_raise <= 1.0))
      throw ConfigError("policy thresholds must satisfy 0 <= tau_clear < tau_raise <= 1");
    if (!(tau_window >= 0.0 && tau_window <= 1.0)) throw ConfigError("tau_window must be in [0, 1]");
  }

  bool operator==(const AlertPolicy&) const = default;
};

inline nlohmann::json to_json(const AlertPolicy& p) {
  return {{"kind", policy_kind_name(p.kind)}, {"k", p.k},
          {"m", p.m},                         {"tau_raise", p.tau_raise},
          {"tau_clear", p.tau_clear},         {"tau_window", p.tau_window}};
}

inline AlertPolicy alert_policy_from_json(const nlohmann::json& j, AlertPolicy p = {}) {
  if (j.contains("kind")) p.kind = parse_policy_kind(j.at("kind").get<std::string>());
  p.k = j.value("k", p.k);
  p.m = j.value("m", p.m);
  p.tau_raise = j.value("tau_raise", p.tau_raise);
  p.tau_clear = j.value("tau_clear", p.tau_clear);
  p.tau_window = j.value("tau_window", p.tau_window);
  return p;
}

struct WindowScore {
  std::size_t window_index = 0;
  double time_s = 0.0;
  double p_fake = 0.0;
  double compute_latency_ms = 0.0;
};

struct AlertEvent {
  enum class Kind { kRaised, kCleared };
  Kind kind = Kind::kRaised;
  std::size_t window_index = 0;
  double time_s = 0.0;
  double aggregate = 0.0;
  std::vector<double> recent;  // probabilities inside the aggregation window

  bool operator==(const AlertEvent&) const = default;
};

inline std::string_view event_name(AlertEvent::Kind k) {
  return k == AlertEvent::Kind::kRaised ? "raised" : "cleared";
}

// Aggregation state for one session.
struct PolicyState {
  AlertPolicy policy;
  std::deque<double> recent;
  bool raised = false;
  std::optional<std::size_t> last_index;
  double aggregate = 0.0;

  explicit PolicyState(const AlertPolicy& p = {}) : policy(p) { policy.validate(); }
};

// Consumes one window score. Scores must arrive in strictly increasing
// window order.
inline std::optional<AlertEvent> policy_step(PolicyState& state, const WindowScore& score) {
  if (state.last_index && score.window_index <= *state.last_index)
    throw OrderingError("window " + std::to_string(score.window_index) + " arrived after window " +
                        std::to_string(*state.last_index));
  if (!(score.p_fake >= 0.0 && score.p_fake <= 1.0))
    throw ConfigError("window probability must be in [0, 1]");
  state.last_index = score.window_index;

  const auto& policy = state.policy;
  state.recent.push_back(score.p_fake);
  while (state.recent.size() > static_cast<std::size_t>(policy.k)) state.recent.pop_front();

  bool should_raise, should_clear;
  if (policy.kind == PolicyKind::kRunningMean) {
    double sum = 0.0;
    for (double p : state.recent) sum += p;
    state.aggregate = sum / static_cast<double>(state.recent.size());
    should_raise = state.recent.size() == static_cast<std::size_t>(policy.k) && state.aggregate >= policy.tau_raise;
    should_clear = state.aggregate < policy.tau_clear;
  } else {
    int count = 0;
    for (double p : state.recent)
      if (p >= policy.tau_window) ++count;
    state.aggregate = count;
    should_raise = count >= policy.m;
    should_clear = count < policy.m;
  }

  std::optional<AlertEvent::Kind> kind;
  if (!state.raised && should_raise) kind = AlertEvent::Kind::kRaised;
  else if (state.raised && should_clear) kind = AlertEvent::Kind::kCleared;
  if (!kind) return std::nullopt;
  state.raised = *kind == AlertEvent::Kind::kRaised;
  return AlertEvent{*kind, score.window_index, score.time_s, state.aggregate,
                    std::vector<double>(state.recent.begin(), state.recent.end())};
}

struct MonitorRecord {
  WindowScore score;
  double aggregate = 0.0;
  std::optional<AlertEvent> event;
};

// One JSON object per window, keys in fixed order:
// window, time_s, p_fake, latency_ms, event, aggregate.
inline std::string to_jsonl(const MonitorRecord& r) {
  nlohmann::ordered_json j;
  j["window"] = r.score.window_index;
  j["time_s"] = r.score.time_s;
  j["p_fake"] = r.score.p_fake;
  j["latency_ms"] = r.score.compute_latency_ms;
  j["event"] = r.event ? nlohmann::ordered_json(event_name(r.event->kind)) : nlohmann::ordered_json(nullptr);
  j["aggregate"] = r.aggregate;
  return j.dump();
}

struct MonitorSession {
  std::vector<MonitorRecord> records;
  double audio_seconds = 0.0;

  std::vector<WindowScore> scores() const {
    std::vector<WindowScore> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.score);
    return out;
  }
};

// Compute time divided by audio time; below 1 keeps up with a live stream.
inline double realtime_factor(double compute_seconds, double audio_seconds) {
  if (!(audio_seconds > 0.0)) throw UndefinedMetric("real-time factor of an empty session is undefined");
  return compute_seconds / audio_seconds;
}

// Sum of per-window latencies over (window count x 1 s).
inline double realtime_factor(std::span<const WindowScore> scores) {
  if (scores.empty()) throw UndefinedMetric("real-time factor of an empty session is undefined");
  double ms = 0.0;
  for (const auto& s : scores) ms += s.compute_latency_ms;
  return realtime_factor(ms / 1000.0, static_cast<double>(scores.size()));
}

inline double realtime_factor(const MonitorSession& session) { return realtime_factor(session.scores()); }

// Replays decoded audio at compute speed: for each full second, extract
// features, standardise, predict and step the policy. on_record sees records
// in window order as they are produced.
inline MonitorSession monitor(const AudioBuffer& audio, const ClassifierModel& model, const Scaler& scaler,
                              const AlertPolicy& policy,
                              const std::function<void(const MonitorRecord&)>& on_record = {}) {
  using Clock = std::chrono::steady_clock;
  PolicyState state(policy);
  MonitorSession session;
  const AudioBuffer canonical = to_canonical(audio);
  session.audio_seconds = canonical.duration_s();
  const auto& extractor = default_extractor();
  for (const auto& window : segment_windows(canonical)) {
    const auto t0 = Clock::now();
    const FeatureVector raw = extractor(window.samples);
    const double p = predict_proba(model, scaler.apply(raw));
    WindowScore score{window.index, window.start_time_s, p, 0.0};
    auto event = policy_step(state, score);
    score.compute_latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    MonitorRecord record{score, state.aggregate, std::move(event)};
    if (on_record) on_record(record);
    session.records.push_back(std::move(record));
  }
  return session;
}

}  // namespace rvcguard
