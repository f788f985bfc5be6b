#pragma once

// Trace-driven, fixed-step playback and download simulator for swipe playlists.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deload/error.hpp"
#include "deload/media.hpp"
#include "deload/policy.hpp"
#include "deload/reward.hpp"
#include "deload/rng.hpp"
#include "deload/trace.hpp"
#include "deload/weibull.hpp"
#include "deload/wte.hpp"

namespace deload {

struct SimConfig {
  double step_ms = 100.0;
  double rtt_min_ms = 40.0;
  double rtt_max_ms = 120.0;
  std::size_t queue_depth = 5;
  double b_max_s = 10.0;
  double pause_ms = 500.0;
  std::size_t estimator_window = 5;
  double prior_throughput_mbps = 1.0;
  double prior_rtt_ms = 80.0;
  double abr_safety = 0.8;
  std::size_t videos_per_session = 20;  // videos watched before the session ends
  double max_session_s = 4.0 * 3600.0;
  RewardWeights reward;

  void validate() const {
    if (!(step_ms > 0.0)) throw ConfigError("sim.step_ms must be positive");
    if (!(rtt_min_ms >= 0.0) || !(rtt_max_ms >= rtt_min_ms)) throw ConfigError("sim rtt bounds must be ordered");
    if (queue_depth == 0) throw ConfigError("sim.queue_depth must be positive");
    if (!(b_max_s > 0.0)) throw ConfigError("sim.b_max_s must be positive");
    if (!(pause_ms > 0.0)) throw ConfigError("sim.pause_ms must be positive");
    if (estimator_window == 0) throw ConfigError("sim.estimator_window must be positive");
    if (videos_per_session == 0) throw ConfigError("sim.videos_per_session must be positive");
    if (!(abr_safety > 0.0)) throw ConfigError("sim.abr_safety must be positive");
    if (!reward.valid()) throw ConfigError("reward weights must be non-negative");
  }

  /// Playlist source length so that exactly `videos_per_session` videos are watched.
  [[nodiscard]] std::size_t source_length() const { return videos_per_session + queue_depth - 1; }
};

// ---- network estimation ----------------------------------------------------------------

struct CompletedTask {
  double bits = 0.0;
  double transfer_s = 0.0;  // excluding RTT
  double rtt_ms = 0.0;
};

struct NetworkEstimate {
  double throughput_mbps = 0.0;
  double rtt_ms = 0.0;
};

/// Sliding-window means of per-task throughput and RTT over the last `window` tasks;
/// priors when there is no history.
inline NetworkEstimate estimate_network(std::span<const CompletedTask> history, std::size_t window,
                                        NetworkEstimate priors) {
  if (history.empty() || window == 0) return priors;
  const std::size_t n = std::min(window, history.size());
  double thr = 0.0, rtt = 0.0;
  for (std::size_t i = history.size() - n; i < history.size(); ++i) {
    const auto& t = history[i];
    // Instant transfers carry no rate information beyond "very fast".
    thr += t.transfer_s > 0.0 ? t.bits / kBitsPerMbit / t.transfer_s : 1e4;
    rtt += t.rtt_ms;
  }
  return {thr / static_cast<double>(n), rtt / static_cast<double>(n)};
}

// ---- bitrate selection -----------------------------------------------------------------

/// Highest rung not above safety * throughput, floored at the lowest rung.
inline double abr_select(const VideoMeta& video, double throughput_mbps, double /*buffer_s*/, double safety = 0.8) {
  const double budget = safety * throughput_mbps;
  double pick = video.lowest_bitrate();
  for (double b : video.bitrate_ladder_mbps)
    if (b <= budget) pick = b;
  return pick;
}

class AbrRule {
 public:
  virtual ~AbrRule() = default;
  [[nodiscard]] virtual double select(const VideoState& video, double throughput_mbps, double buffer_s) const = 0;
};

class ThroughputRule final : public AbrRule {
 public:
  explicit ThroughputRule(double safety = 0.8) : safety_(safety) {}
  [[nodiscard]] double select(const VideoState& video, double throughput_mbps, double buffer_s) const override {
    return abr_select(video.meta, throughput_mbps, buffer_s, safety_);
  }

 private:
  double safety_;
};

// ---- retention -------------------------------------------------------------------------

/// Where simulated swipes come from: per-video ground-truth Weibull parameters or
/// empirical watch records. Unknown videos fall back to `fallback`.
class RetentionSource {
 public:
  WeibullParams fallback{1.0, 10.0, 0.0};

  void add_truth(const std::string& video_id, WeibullParams p) { truth_[video_id] = p; }
  void add_record(const WatchRecord& r) {
    by_video_[r.video_id].push_back(r.watch_time_s);
    exact_[{r.user_id, r.video_id}] = r.watch_time_s;
  }
  [[nodiscard]] bool empty() const { return truth_.empty() && by_video_.empty(); }
  [[nodiscard]] std::size_t size() const { return truth_.size() + by_video_.size(); }

  [[nodiscard]] const WeibullParams* truth_for(const std::string& video_id) const {
    auto it = truth_.find(video_id);
    return it == truth_.end() ? nullptr : &it->second;
  }

  /// One draw of the true watch time, capped at the video duration.
  [[nodiscard]] double sample(const std::string& user_id, const VideoMeta& video, Rng& rng) const {
    double t;
    if (auto it = exact_.find({user_id, video.video_id}); it != exact_.end()) {
      t = it->second;
    } else if (auto rt = by_video_.find(video.video_id); rt != by_video_.end()) {
      const auto& xs = rt->second;
      t = xs[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(xs.size())) % xs.size()];
    } else if (auto p = truth_for(video.video_id)) {
      t = weibull_from_uniform(*p, uniform01(rng));
    } else {
      t = weibull_from_uniform(fallback, uniform01(rng));
    }
    return std::clamp(t, 0.0, video.duration_s);
  }

 private:
  std::map<std::string, WeibullParams> truth_;
  std::map<std::string, std::vector<double>> by_video_;
  std::map<std::pair<std::string, std::string>, double> exact_;
};

inline double sample_watch_time(const RetentionSource& src, const std::string& user_id, const VideoMeta& video,
                                std::uint64_t seed) {
  Rng rng(seed);
  return src.sample(user_id, video, rng);
}

/// Reads either `video_id,beta,eta,gamma` (ground truth) or
/// `user_id,video_id,duration_s,watch_time_s` (records). The header row decides; without
/// one, a numeric second column means ground truth.
inline RetentionSource parse_retention(std::istream& is, const std::string& origin) {
  RetentionSource src;
  std::string line;
  std::size_t lineno = 0;
  enum class Kind { unknown, truth, records } kind = Kind::unknown;
  auto fail = [&](const std::string& why) { throw DataError(origin + ":" + std::to_string(lineno) + ": " + why); };
  while (std::getline(is, line)) {
    ++lineno;
    const auto sv = detail::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    const auto f = detail::split(sv, ',');
    if (f.size() != 4) fail("expected 4 comma-separated fields");
    if (kind == Kind::unknown) {
      if (detail::trim(f[0]) == "video_id") {
        kind = Kind::truth;
        continue;
      }
      if (detail::trim(f[0]) == "user_id") {
        kind = Kind::records;
        continue;
      }
      kind = detail::parse_double(f[1]) ? Kind::truth : Kind::records;
    }
    if (kind == Kind::truth) {
      auto b = detail::parse_double(f[1]), e = detail::parse_double(f[2]), g = detail::parse_double(f[3]);
      if (!b || !e || !g) fail("non-numeric Weibull parameter");
      WeibullParams p{*b, *e, *g};
      if (!p.valid()) fail("invalid Weibull parameters");
      src.add_truth(std::string(detail::trim(f[0])), p);
    } else {
      auto d = detail::parse_double(f[2]), w = detail::parse_double(f[3]);
      if (!d || !w) fail("non-numeric duration or watch time");
      if (!(*d > 0.0) || !(*w >= 0.0)) fail("duration must be positive and watch time non-negative");
      src.add_record({std::string(detail::trim(f[0])), std::string(detail::trim(f[1])), *d, *w});
    }
  }
  return src;
}

// ---- strategies ------------------------------------------------------------------------

struct DecisionContext {
  const Playlist& playlist;
  double now_s = 0.0;
  NetworkEstimate network;
  const SimConfig& sim;
};

/// What a learned policy saw and did at one decision; kept for training.
struct PolicyStep {
  std::vector<double> features;
  double raw = 0.0;
  double log_prob = 0.0;
  double value = 0.0;
};

struct RangeChoice {
  double duration_s = 0.0;
  std::optional<PolicyStep> step;
};

/// A preloading strategy: which video to fetch next and how many seconds of it.
class Strategy {
 public:
  virtual ~Strategy() = default;
  [[nodiscard]] virtual StrategyKind kind() const = 0;
  /// Empty means sleep for the pause interval.
  virtual std::optional<std::size_t> select_video(const DecisionContext& ctx) = 0;
  virtual RangeChoice choose_range(const DecisionContext& ctx, std::size_t index) = 0;
};

// ---- session ---------------------------------------------------------------------------

struct ActionRecord {
  double issued_at_s = 0.0;
  double completed_at_s = -1.0;  // -1 while in flight or when cancelled
  std::size_t video_index = 0;   // playlist index at issue time
  double range_s = 0.0;          // issued duration after clamping
  double delivered_s = 0.0;      // media seconds actually transferred
  double bitrate_mbps = 0.0;
  double throughput_mbps = 0.0;  // estimate at issue time
  double rtt_ms = 0.0;           // estimate at issue time
  double wasted_bits = 0.0;
  double rebuffer_s = 0.0;
  double reward = 0.0;
  bool cancelled = false;
};

struct SessionMetrics {
  double total_rebuffer_s = 0.0;
  double downloaded_bits = 0.0;
  double watched_bits = 0.0;
  double wasted_bits = 0.0;
  double watched_s = 0.0;
  double session_s = 0.0;
  double qoe = 0.0;  // accumulated reward
  std::size_t videos_watched = 0;
  std::size_t sleeps = 0;
  bool truncated = false;  // hit max_session_s
  std::vector<ActionRecord> actions;

  [[nodiscard]] double waste_ratio() const { return downloaded_bits > 0.0 ? wasted_bits / downloaded_bits : 0.0; }
  [[nodiscard]] double mean_bitrate_mbps() const {
    return watched_s > 0.0 ? watched_bits / kBitsPerMbit / watched_s : 0.0;
  }
  [[nodiscard]] double mean_range_s() const {
    if (actions.empty()) return 0.0;
    double s = 0.0;
    for (const auto& a : actions) s += a.range_s;
    return s / static_cast<double>(actions.size());
  }
};

struct SessionResult {
  SessionMetrics metrics;
  EventLog log;
  std::vector<std::optional<PolicyStep>> policy_steps;  // aligned with metrics.actions
};

struct SessionSpec {
  const NetworkTrace* trace = nullptr;
  std::vector<PlaylistEntry> videos;  // playlist source, in order
  std::string user_id;
  const RetentionSource* retention = nullptr;
  std::uint64_t seed = 0;
  double trace_offset_s = 0.0;
};

/// Stepwise simulation of one playlist on one trace. Each step first runs the downloader
/// (issuing new tasks the moment the previous one completes) and then plays back, swiping
/// at the exact sampled watch time.
class Session {
 public:
  Session(const SessionSpec& spec, Strategy& strategy, const SimConfig& cfg, const AbrRule* abr = nullptr)
      : spec_(spec), strategy_(strategy), cfg_(cfg), abr_(abr ? abr : &default_abr_),
        default_abr_(cfg.abr_safety), rtt_rng_(mix_seed(spec.seed, 1)) {
    cfg_.validate();
    if (!spec_.trace) throw ConfigError("session has no trace");
    if (!spec_.retention) throw ConfigError("session has no retention source");
    if (spec_.videos.empty()) throw ConfigError("session has no videos");
    for (const auto& v : spec_.videos) v.meta.validate();
    playlist_ = Playlist(spec_.videos, cfg_.queue_depth);
    for (std::size_t i = 0; i < spec_.videos.size(); ++i)
      watch_.push_back(sample_watch_time(*spec_.retention, spec_.user_id, spec_.videos[i].meta,
                                         mix_seed(spec_.seed, 1000 + i)));
  }

  Playlist& playlist() { return playlist_; }
  [[nodiscard]] const Playlist& playlist() const { return playlist_; }
  [[nodiscard]] bool finished() const { return ended_; }
  [[nodiscard]] double now() const { return static_cast<double>(steps_) * cfg_.step_ms / 1000.0; }
  [[nodiscard]] const SessionMetrics& metrics() const { return result_.metrics; }
  [[nodiscard]] double true_watch_time(std::size_t playlist_index) const {
    return watch_.at(playlist_[playlist_index].slot);
  }
  [[nodiscard]] bool downloading() const { return task_.has_value(); }
  [[nodiscard]] bool sleeping() const { return sleep_until_ > now(); }

  void step() {
    if (ended_) return;
    const double t0 = now();
    const double t1 = static_cast<double>(steps_ + 1) * cfg_.step_ms / 1000.0;
    download(t0, t1);
    playback(t0, t1);
    ++steps_;
    if (!ended_ && now() >= cfg_.max_session_s) truncate();
  }

  SessionResult run() {
    while (!ended_) step();
    return finish();
  }

  /// Closes reward windows and returns the results. Call once, after the session ended.
  SessionResult finish() {
    auto& m = result_.metrics;
    m.session_s = end_time_;
    const auto terms = attribute_all(result_.log);
    m.qoe = 0.0;
    for (std::size_t k = 0; k < m.actions.size(); ++k) {
      auto& a = m.actions[k];
      a.wasted_bits = terms[k].wasted_bits;
      a.rebuffer_s = terms[k].rebuffer_s;
      a.reward = compute_reward(a.delivered_s, a.bitrate_mbps, a.wasted_bits, a.rebuffer_s, a.throughput_mbps,
                                cfg_.reward);
      m.qoe += a.reward;
    }
    return std::move(result_);
  }

 private:
  struct Task {
    std::uint64_t slot = 0;
    std::size_t action = 0;
    double bitrate_mbps = 0.0;
    double rtt_left_s = 0.0;
    double rtt_ms = 0.0;
    double bits_total = 0.0;
    double bits_done = 0.0;
    double transfer_s = 0.0;
    bool started = false;
  };

  void download(double t0, double t1) {
    double cur = t0;
    int decisions = 0;
    while (cur < t1) {
      if (task_) {
        auto idx = playlist_.index_of_slot(task_->slot);
        if (!idx) {  // target swiped away: cancel at the step boundary
          result_.metrics.actions[task_->action].cancelled = true;
          task_.reset();
          continue;
        }
        if (task_->rtt_left_s > 0.0) {
          const double use = std::min(task_->rtt_left_s, t1 - cur);
          task_->rtt_left_s -= use;
          cur += use;
          if (task_->rtt_left_s <= 1e-12) task_->rtt_left_s = 0.0;
          continue;
        }
        const double need_mbit = (task_->bits_total - task_->bits_done) / kBitsPerMbit;
        const auto tt = spec_.trace_offset_s;
        const auto finish = spec_.trace->time_to_transfer(cur + tt, need_mbit, t1 + tt);
        if (finish) {
          const double at = std::max(cur, *finish - tt);
          deliver(*idx, task_->bits_total - task_->bits_done);
          task_->transfer_s += at - cur;
          cur = at;
          complete(cur);
        } else {
          const double got = spec_.trace->mbits_between(cur + tt, t1 + tt) * kBitsPerMbit;
          deliver(*idx, std::min(got, task_->bits_total - task_->bits_done));
          task_->transfer_s += t1 - cur;
          cur = t1;
        }
        continue;
      }
      if (sleep_until_ > cur) {
        cur = std::min(sleep_until_, t1);
        continue;
      }
      if (++decisions > 100000) throw RuntimeFault("downloader issued too many tasks within one step");
      decide(cur);
    }
  }

  void deliver(std::size_t idx, double bits) {
    if (bits <= 0.0) return;
    auto& v = playlist_[idx];
    const double secs = bits / (task_->bitrate_mbps * kBitsPerMbit);
    const double added = append_download(v, secs, task_->bitrate_mbps, !task_->started);
    task_->started = task_->started || added > 0.0;
    task_->bits_done += bits;
    result_.metrics.downloaded_bits += added * task_->bitrate_mbps * kBitsPerMbit;
    result_.metrics.actions[task_->action].delivered_s += added;
  }

  void complete(double at) {
    auto& a = result_.metrics.actions[task_->action];
    a.completed_at_s = at;
    history_.push_back({task_->bits_total, task_->transfer_s, task_->rtt_ms});
    task_.reset();
  }

  void decide(double at) {
    const auto est = estimate_network(history_, cfg_.estimator_window, {cfg_.prior_throughput_mbps, cfg_.prior_rtt_ms});
    DecisionContext ctx{playlist_, at, est, cfg_};
    const auto idx = strategy_.select_video(ctx);
    if (!idx || *idx >= playlist_.size() || playlist_[*idx].fully_buffered()) {
      sleep_until_ = at + cfg_.pause_ms / 1000.0;
      ++result_.metrics.sleeps;
      return;
    }
    auto& v = playlist_[*idx];
    const double bitrate = abr_->select(v, est.throughput_mbps, v.ahead_s());
    v.chosen_bitrate_mbps = bitrate;
    auto choice = strategy_.choose_range(ctx, *idx);
    const double range = std::min(std::max(choice.duration_s, 0.0), v.remaining_s());
    if (!(range > 0.0)) {
      sleep_until_ = at + cfg_.pause_ms / 1000.0;
      ++result_.metrics.sleeps;
      return;
    }
    const double rtt_ms = uniform(rtt_rng_, cfg_.rtt_min_ms, cfg_.rtt_max_ms);

    ActionRecord rec;
    rec.issued_at_s = at;
    rec.video_index = *idx;
    rec.range_s = range;
    rec.bitrate_mbps = bitrate;
    rec.throughput_mbps = est.throughput_mbps;
    rec.rtt_ms = est.rtt_ms;
    result_.metrics.actions.push_back(rec);
    result_.policy_steps.push_back(std::move(choice.step));
    result_.log.action_times.push_back(at);

    Task t;
    t.slot = v.slot;
    t.action = result_.metrics.actions.size() - 1;
    t.bitrate_mbps = bitrate;
    t.rtt_ms = rtt_ms;
    t.rtt_left_s = rtt_ms / 1000.0;
    t.bits_total = range * bitrate * kBitsPerMbit;
    task_ = t;
  }

  void playback(double t0, double t1) {
    double cur = t0;
    auto& m = result_.metrics;
    while (cur < t1 && !ended_) {
      auto& v0 = playlist_[0];
      const double watch = watch_.at(v0.slot);
      const double to_swipe = std::max(0.0, watch - v0.play_pos_s);
      const double avail = std::max(0.0, v0.buffered_s - v0.play_pos_s);
      const double span = t1 - cur;
      if (to_swipe <= avail && to_swipe <= span) {
        v0.play_pos_s += to_swipe;
        m.watched_s += to_swipe;
        cur += to_swipe;
        do_swipe(cur, watch);
        continue;
      }
      const double play = std::min(avail, span);
      v0.play_pos_s += play;
      m.watched_s += play;
      const double stall = span - play;
      if (stall > 0.0) {
        m.total_rebuffer_s += stall;
        result_.log.add_stall(cur + play, t1);
      }
      cur = t1;
    }
  }

  void do_swipe(double at, double watch) {
    auto& m = result_.metrics;
    const auto out = swipe(playlist_, watch);
    m.watched_bits += out.watched_bits;
    m.wasted_bits += out.wasted_bits;
    ++m.videos_watched;
    result_.log.swipes.push_back({at, out.wasted_bits});
    if (out.session_ended) {
      ended_ = true;
      end_time_ = at;
    }
  }

  void truncate() {
    auto& m = result_.metrics;
    const double at = now();
    double wasted = 0.0;
    for (std::size_t i = 0; i < playlist_.size(); ++i) {
      const auto& v = playlist_[i];
      const double total = v.downloaded_bits();
      const double watched = i == 0 ? v.bits_before(v.play_pos_s) : 0.0;
      m.watched_bits += watched;
      wasted += total - watched;
    }
    m.wasted_bits += wasted;
    result_.log.swipes.push_back({at, wasted});
    playlist_.videos.clear();
    m.truncated = true;
    ended_ = true;
    end_time_ = at;
  }

  SessionSpec spec_;
  Strategy& strategy_;
  SimConfig cfg_;
  const AbrRule* abr_;
  ThroughputRule default_abr_;
  Rng rtt_rng_;
  Playlist playlist_;
  std::vector<double> watch_;  // true watch time per slot
  std::optional<Task> task_;
  std::vector<CompletedTask> history_;
  double sleep_until_ = -1.0;
  std::int64_t steps_ = 0;
  bool ended_ = false;
  double end_time_ = 0.0;
  SessionResult result_;
};

inline SessionResult run_session(const SessionSpec& spec, Strategy& strategy, const SimConfig& cfg,
                                 const AbrRule* abr = nullptr) {
  Session s(spec, strategy, cfg, abr);
  return s.run();
}

}  // namespace deload
