#pragma once

// Shared fixtures for the unit tests.

#include <string>
#include <vector>

#include "deload/media.hpp"
#include "deload/weibull.hpp"

namespace deload::testing {

inline VideoMeta meta(std::string id, double duration, std::vector<double> ladder = {1.0}) {
  return VideoMeta{std::move(id), duration, std::move(ladder)};
}

/// A video with `buffered` seconds at `bitrate` and the play head at `pos`.
inline VideoState buffered_video(double duration, double buffered, double pos, double bitrate = 1.0,
                                 WeibullParams p = {1.0, 5.0, 0.0}) {
  auto v = make_video_state(meta("v", duration, {bitrate}), p);
  append_download(v, buffered, bitrate);
  v.play_pos_s = pos;
  return v;
}

}  // namespace deload::testing
