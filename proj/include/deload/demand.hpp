#pragma once

// Demand: probability that a video's uncached part is the first uncached media the
// viewer runs into. Drives which playlist entry gets the next download.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "deload/media.hpp"
#include "deload/weibull.hpp"

namespace deload {

/// Watch-time model used for Demand: P(T > tau) for a given video.
using SurvivalFn = std::function<double(const VideoState&, double tau)>;

inline double fused_survival(const VideoState& v, double tau) { return weibull_survival(v.watch_params, tau); }

/// Uniform watch time on [0, duration]; used by the no-estimation ablation.
inline double uniform_survival(const VideoState& v, double tau) {
  if (tau <= 0.0) return 1.0;
  return std::max(0.0, 1.0 - tau / v.meta.duration_s);
}

struct PlayingDemand {
  double value = 0.0;
  bool degenerate = false;  // P(T0 > t0) underflowed; video must not be selected
};

/// P(T0 > tau0 | T0 > t0) for the playing video.
inline PlayingDemand demand_playing(const VideoState& v0, const SurvivalFn& survival = fused_survival) {
  const double denom = survival(v0, v0.play_pos_s);
  if (!(denom > 0.0)) return {0.0, true};
  const double num = survival(v0, v0.buffered_s);
  return {std::clamp(num / denom, 0.0, 1.0), false};
}

struct DemandVector {
  std::vector<double> demands;
  std::vector<bool> degenerate;
  std::optional<std::size_t> selected;
  bool sleep = false;
};

/// Demand for every queued video; later entries get the mass left after all earlier
/// videos are covered by their buffers.
inline DemandVector compute_demands(const Playlist& playlist, const SurvivalFn& survival = fused_survival) {
  DemandVector dv;
  const std::size_t n = playlist.size();
  dv.demands.assign(n, 0.0);
  dv.degenerate.assign(n, false);
  if (n == 0) return dv;
  // A fully buffered video has no uncached part: watch time is capped at its duration.
  const auto p0 = demand_playing(playlist[0], survival);
  dv.demands[0] = playlist[0].fully_buffered() ? 0.0 : p0.value;
  dv.degenerate[0] = p0.degenerate;
  double covered = dv.demands[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double s =
        playlist[i].fully_buffered() ? 0.0 : std::clamp(survival(playlist[i], playlist[i].buffered_s), 0.0, 1.0);
    dv.demands[i] = std::max(0.0, 1.0 - covered) * s;
    covered += dv.demands[i];
  }
  return dv;
}

/// Highest-Demand video still under the buffer cap and not fully buffered; ties go to
/// the lower index. Empty means the downloader may sleep.
inline std::optional<std::size_t> select_video(const Playlist& playlist, const DemandVector& dv, double b_max_s) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < playlist.size() && i < dv.demands.size(); ++i) {
    const auto& v = playlist[i];
    if (i < dv.degenerate.size() && dv.degenerate[i]) continue;
    if (!(v.ahead_s() < b_max_s) || v.fully_buffered()) continue;
    if (!best || dv.demands[i] > dv.demands[*best]) best = i;
  }
  return best;
}

/// compute_demands followed by select_video; fills `selected` and `sleep`.
inline DemandVector demand_decision(const Playlist& playlist, double b_max_s,
                                    const SurvivalFn& survival = fused_survival) {
  auto dv = compute_demands(playlist, survival);
  dv.selected = select_video(playlist, dv, b_max_s);
  dv.sleep = !dv.selected.has_value();
  return dv;
}

}  // namespace deload
