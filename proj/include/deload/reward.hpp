#pragma once

// Per-action reward and the attribution of waste and stalls to action windows.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "deload/media.hpp"

namespace deload {

struct RewardWeights {
  double alpha = 0.01;             // waste, per Mbit
  double beta = 1.85;              // rebuffering, per (s * Mbps)
  double waste_clip_bits = 1.2e6;

  [[nodiscard]] bool valid() const { return alpha >= 0.0 && beta >= 0.0 && waste_clip_bits >= 0.0; }
};

/// r = a*b - alpha*min(w, clip) - beta*bt*q, with every term in megabits.
/// `range_s` seconds of media at `bitrate_mbps`; `wasted_bits` in bits; `rebuffer_s` at
/// `throughput_mbps`.
inline double compute_reward(double range_s, double bitrate_mbps, double wasted_bits, double rebuffer_s,
                             double throughput_mbps, const RewardWeights& w = {}) {
  const double waste_mbit = std::min(wasted_bits, w.waste_clip_bits) / kBitsPerMbit;
  return range_s * bitrate_mbps - w.alpha * waste_mbit - w.beta * rebuffer_s * throughput_mbps;
}

struct StallInterval {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct SwipeEvent {
  double time_s = 0.0;
  double wasted_bits = 0.0;
};

/// Time-ordered record of what happened in a session, for reward attribution.
struct EventLog {
  std::vector<double> action_times;  // issue time of each action, non-decreasing
  std::vector<StallInterval> stalls;
  std::vector<SwipeEvent> swipes;

  void add_stall(double a, double b) {
    if (!(b > a)) return;
    if (!stalls.empty() && stalls.back().end_s >= a) {
      stalls.back().end_s = std::max(stalls.back().end_s, b);
      return;
    }
    stalls.push_back({a, b});
  }
};

struct RewardTerms {
  double wasted_bits = 0.0;
  double rebuffer_s = 0.0;
};

/// Waste and stall time falling in action `k`'s window, which runs from its issue time to
/// the next action's issue time. Events before the first action belong to the first
/// window; the last window is open-ended. Stalls are split across windows by overlap.
inline RewardTerms attribute_reward_terms(const EventLog& log, std::size_t k) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double lo = k == 0 ? -inf : log.action_times.at(k);
  const double hi = k + 1 < log.action_times.size() ? log.action_times[k + 1] : inf;
  RewardTerms t;
  for (const auto& s : log.swipes)
    if (s.time_s >= lo && s.time_s < hi) t.wasted_bits += s.wasted_bits;
  for (const auto& st : log.stalls) {
    const double a = std::max(st.start_s, lo), b = std::min(st.end_s, hi);
    if (b > a) t.rebuffer_s += b - a;
  }
  return t;
}

/// All windows at once, in one pass over the sorted log.
inline std::vector<RewardTerms> attribute_all(const EventLog& log) {
  const std::size_t n = log.action_times.size();
  std::vector<RewardTerms> out(n);
  if (n == 0) return out;
  auto window_of = [&](double t) -> std::size_t {
    auto it = std::upper_bound(log.action_times.begin(), log.action_times.end(), t);
    return it == log.action_times.begin() ? 0 : static_cast<std::size_t>(it - log.action_times.begin()) - 1;
  };
  for (const auto& s : log.swipes) out[window_of(s.time_s)].wasted_bits += s.wasted_bits;
  for (const auto& st : log.stalls) {
    double a = st.start_s;
    std::size_t k = window_of(a);
    while (a < st.end_s) {
      const double hi = k + 1 < n ? log.action_times[k + 1] : st.end_s;
      const double b = std::min(st.end_s, hi);
      if (b > a) out[k].rebuffer_s += b - a;
      a = std::max(a, b);
      if (k + 1 >= n) break;
      ++k;
    }
  }
  return out;
}

}  // namespace deload
