#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "deload/error.hpp"
#include "deload/weibull.hpp"

namespace deload {

inline constexpr double kBitsPerMbit = 1e6;

// Tolerance for "fully buffered" and similar floating-point comparisons on seconds.
inline constexpr double kTimeEps = 1e-9;

struct VideoMeta {
  std::string video_id;
  double duration_s = 0.0;
  std::vector<double> bitrate_ladder_mbps;  // ascending

  /// Bits of a [0, seconds] range at ladder rung `rung` (constant bitrate).
  [[nodiscard]] double range_bits(double seconds, std::size_t rung) const {
    return seconds * bitrate_ladder_mbps.at(rung) * kBitsPerMbit;
  }
  [[nodiscard]] double lowest_bitrate() const { return bitrate_ladder_mbps.front(); }
  [[nodiscard]] double highest_bitrate() const { return bitrate_ladder_mbps.back(); }

  void validate() const {
    if (!(duration_s > 0.0) || !std::isfinite(duration_s))
      throw DataError("video '" + video_id + "': duration must be positive");
    if (bitrate_ladder_mbps.empty()) throw DataError("video '" + video_id + "': empty bitrate ladder");
    for (std::size_t i = 0; i < bitrate_ladder_mbps.size(); ++i) {
      if (!(bitrate_ladder_mbps[i] > 0.0)) throw DataError("video '" + video_id + "': non-positive bitrate");
      if (i > 0 && !(bitrate_ladder_mbps[i] > bitrate_ladder_mbps[i - 1]))
        throw DataError("video '" + video_id + "': bitrate ladder must be strictly ascending");
    }
  }
};

/// Contiguous media span [start_s, end_s) downloaded at one bitrate.
struct Segment {
  double start_s = 0.0;
  double end_s = 0.0;
  double bitrate_mbps = 0.0;

  [[nodiscard]] double bits() const { return (end_s - start_s) * bitrate_mbps * kBitsPerMbit; }
};

struct VideoState {
  VideoMeta meta;
  double buffered_s = 0.0;
  double play_pos_s = 0.0;
  double chosen_bitrate_mbps = 0.0;
  WeibullParams watch_params;
  std::vector<Segment> segments;
  std::uint64_t slot = 0;  // unique within a session; survives index shifts on swipe

  [[nodiscard]] double ahead_s() const { return buffered_s - play_pos_s; }
  [[nodiscard]] double remaining_s() const { return std::max(0.0, meta.duration_s - buffered_s); }
  [[nodiscard]] bool fully_buffered() const { return buffered_s >= meta.duration_s - kTimeEps; }

  [[nodiscard]] double downloaded_bits() const {
    double total = 0.0;
    for (const auto& s : segments) total += s.bits();
    return total;
  }

  /// Bits of downloaded media lying before `pos_s`.
  [[nodiscard]] double bits_before(double pos_s) const {
    double total = 0.0;
    for (const auto& s : segments) {
      const double end = std::min(s.end_s, pos_s);
      if (end > s.start_s) total += (end - s.start_s) * s.bitrate_mbps * kBitsPerMbit;
    }
    return total;
  }
};

inline VideoState make_video_state(VideoMeta meta, WeibullParams params, std::uint64_t slot = 0) {
  VideoState v;
  v.chosen_bitrate_mbps = meta.bitrate_ladder_mbps.empty() ? 0.0 : meta.lowest_bitrate();
  v.meta = std::move(meta);
  v.watch_params = params;
  v.slot = slot;
  return v;
}

/// Appends `seconds` of media at `bitrate_mbps` to the buffer. When `new_segment` is false
/// and the last segment has the same bitrate, that segment is extended instead.
/// Returns the seconds actually added (capped at the video's remaining duration).
inline double append_download(VideoState& v, double seconds, double bitrate_mbps, bool new_segment = true) {
  const double add = std::clamp(seconds, 0.0, v.remaining_s());
  if (add <= 0.0) return 0.0;
  if (!new_segment && !v.segments.empty() && v.segments.back().bitrate_mbps == bitrate_mbps &&
      v.segments.back().end_s == v.buffered_s) {
    v.segments.back().end_s += add;
  } else {
    v.segments.push_back({v.buffered_s, v.buffered_s + add, bitrate_mbps});
  }
  v.buffered_s += add;
  if (v.meta.duration_s - v.buffered_s < kTimeEps) {
    v.buffered_s = v.meta.duration_s;
    v.segments.back().end_s = v.meta.duration_s;
  }
  v.chosen_bitrate_mbps = bitrate_mbps;
  return add;
}

struct PlaybackStep {
  double played_s = 0.0;
  double rebuffer_s = 0.0;
};

/// Plays `video` for `dt_s` wall seconds. Playback stops at the buffer edge or the end of
/// the video; wall time not covered by buffered media is reported as rebuffering.
inline PlaybackStep advance_playback(VideoState& video, double dt_s) {
  PlaybackStep step;
  if (!(dt_s > 0.0)) return step;
  const double limit = std::min(video.buffered_s, video.meta.duration_s);
  const double avail = limit - video.play_pos_s;
  step.played_s = std::clamp(avail, 0.0, dt_s);
  video.play_pos_s = step.played_s == avail ? limit : video.play_pos_s + step.played_s;
  // Reaching the end of a video is not a stall; the caller swipes.
  const bool at_end = video.play_pos_s >= video.meta.duration_s - kTimeEps;
  step.rebuffer_s = at_end ? 0.0 : dt_s - step.played_s;
  return step;
}

/// Catalog entry waiting to join the playlist.
struct PlaylistEntry {
  VideoMeta meta;
  WeibullParams watch_params;
};

/// Ordered playlist; index 0 is the playing video. Swipes refill from `upcoming`.
class Playlist {
 public:
  Playlist() = default;
  Playlist(std::vector<PlaylistEntry> source, std::size_t depth) : upcoming_(std::move(source)), depth_(depth) {
    while (videos.size() < depth_ && refill_one()) {
    }
  }

  std::deque<VideoState> videos;

  [[nodiscard]] std::size_t depth() const { return depth_; }
  [[nodiscard]] bool empty() const { return videos.empty(); }
  [[nodiscard]] std::size_t size() const { return videos.size(); }
  [[nodiscard]] std::size_t remaining_source() const { return upcoming_.size() - cursor_; }

  VideoState& operator[](std::size_t i) { return videos[i]; }
  const VideoState& operator[](std::size_t i) const { return videos[i]; }

  [[nodiscard]] std::optional<std::size_t> index_of_slot(std::uint64_t slot) const {
    for (std::size_t i = 0; i < videos.size(); ++i)
      if (videos[i].slot == slot) return i;
    return std::nullopt;
  }

  bool refill_one() {
    if (cursor_ >= upcoming_.size()) return false;
    auto& e = upcoming_[cursor_++];
    videos.push_back(make_video_state(e.meta, e.watch_params, next_slot_++));
    return true;
  }

 private:
  std::vector<PlaylistEntry> upcoming_;
  std::size_t cursor_ = 0;
  std::size_t depth_ = 5;
  std::uint64_t next_slot_ = 0;
};

struct SwipeOutcome {
  double wasted_bits = 0.0;    // departing video's unwatched buffer, plus residuals when the session ends
  double watched_bits = 0.0;
  double residual_bits = 0.0;  // part of wasted_bits charged from still-queued videos at session end
  bool session_ended = false;
};

/// Swipes away from the playing video after `watch_time_s` of viewing. The departing
/// video's buffered-but-unwatched bits are waste. When the source cannot refill the
/// queue, the session ends and every queued video's buffer is charged as waste.
inline SwipeOutcome swipe(Playlist& playlist, double watch_time_s) {
  if (playlist.empty()) throw RuntimeFault("swipe on an empty playlist");
  SwipeOutcome out;
  auto& v0 = playlist.videos.front();
  v0.play_pos_s = std::max(v0.play_pos_s, std::min(watch_time_s, v0.buffered_s));
  const double total = v0.downloaded_bits();
  out.watched_bits = v0.bits_before(v0.play_pos_s);
  out.wasted_bits = total - out.watched_bits;
  playlist.videos.pop_front();
  if (!playlist.refill_one()) {
    out.session_ended = true;
    for (const auto& v : playlist.videos) out.residual_bits += v.downloaded_bits();
    out.wasted_bits += out.residual_bits;
    playlist.videos.clear();
  }
  return out;
}

struct NetworkSample {
  double timestamp_ms = 0.0;
  double bandwidth_mbps = 0.0;
};

struct WatchRecord {
  std::string user_id;
  std::string video_id;
  double video_duration_s = 0.0;
  double watch_time_s = 0.0;
};

}  // namespace deload
