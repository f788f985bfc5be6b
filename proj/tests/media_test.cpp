#include <gtest/gtest.h>

#include <random>

#include "deload/media.hpp"
#include "test_util.hpp"

using namespace deload;
using deload::testing::buffered_video;
using deload::testing::meta;

TEST(AdvancePlayback, BufferCoversStep) {
  auto v = buffered_video(30, 5, 2);
  const auto r = advance_playback(v, 1.0);
  EXPECT_DOUBLE_EQ(v.play_pos_s, 3.0);
  EXPECT_DOUBLE_EQ(r.rebuffer_s, 0.0);
}

TEST(AdvancePlayback, EmptyBufferStalls) {
  auto v = buffered_video(30, 2, 2);
  const auto r = advance_playback(v, 1.0);
  EXPECT_DOUBLE_EQ(v.play_pos_s, 2.0);
  EXPECT_DOUBLE_EQ(r.rebuffer_s, 1.0);
}

// Piecewise oracle: play to the buffer edge, stall for whatever is left of the step.
TEST(AdvancePlayback, PartialBuffer) {
  auto v = buffered_video(30, 2.5, 2);
  const auto r = advance_playback(v, 1.0);
  EXPECT_DOUBLE_EQ(v.play_pos_s, 2.5);
  EXPECT_DOUBLE_EQ(r.rebuffer_s, 0.5);
}

TEST(AdvancePlayback, NeverPassesBufferOrDuration) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double d = 1.0 + 60.0 * u(rng);
    const double buf = d * u(rng);
    auto v = buffered_video(d, buf, buf * u(rng));
    const double before = v.play_pos_s;
    const double dt = 3.0 * u(rng);
    const auto r = advance_playback(v, dt);
    EXPECT_GE(v.play_pos_s, before);
    EXPECT_LE(v.play_pos_s, v.buffered_s);
    EXPECT_NEAR(r.played_s + r.rebuffer_s, v.play_pos_s >= d - kTimeEps ? r.played_s + r.rebuffer_s : dt, 1e-12);
  }
}

TEST(AppendDownload, CapsAtDuration) {
  auto v = make_video_state(meta("a", 4.0, {1.0, 2.0}), {});
  EXPECT_DOUBLE_EQ(append_download(v, 3.0, 2.0), 3.0);
  EXPECT_DOUBLE_EQ(append_download(v, 3.0, 1.0), 1.0);
  EXPECT_TRUE(v.fully_buffered());
  EXPECT_DOUBLE_EQ(v.downloaded_bits(), 3.0 * 2e6 + 1.0 * 1e6);
  EXPECT_DOUBLE_EQ(v.bits_before(3.5), 3.0 * 2e6 + 0.5 * 1e6);
}

TEST(VideoMeta, RangeBitsIsCbr) {
  const auto m = meta("a", 10, {0.5, 1.0, 4.0});
  EXPECT_DOUBLE_EQ(m.range_bits(3.0, 2), 3.0 * 4.0 * 1e6);
  EXPECT_NO_THROW(m.validate());
  EXPECT_THROW(meta("b", 10, {2.0, 1.0}).validate(), DataError);
  EXPECT_THROW(meta("c", 0, {1.0}).validate(), DataError);
  EXPECT_THROW(meta("d", 5, {}).validate(), DataError);
}

namespace {

std::vector<PlaylistEntry> entries(std::size_t n) {
  std::vector<PlaylistEntry> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({meta("v" + std::to_string(i), 20.0, {1.0, 2.0}), {}});
  return out;
}

}  // namespace

TEST(Swipe, FullyWatchedBufferWastesNothing) {
  Playlist p(entries(7), 5);
  append_download(p[0], 10, 1.0);
  p[0].play_pos_s = 10;
  const auto out = swipe(p, 10);
  EXPECT_DOUBLE_EQ(out.wasted_bits, 0.0);
  EXPECT_DOUBLE_EQ(out.watched_bits, 10e6);
  EXPECT_FALSE(out.session_ended);
}

TEST(Swipe, UnwatchedBufferIsWaste) {
  Playlist p(entries(7), 5);
  append_download(p[0], 10, 2.0);
  p[0].play_pos_s = 4;
  const auto out = swipe(p, 4);
  EXPECT_DOUBLE_EQ(out.wasted_bits, 12e6);
}

TEST(Swipe, RemovesHeadKeepsOrderAndRefills) {
  Playlist p(entries(7), 5);
  ASSERT_EQ(p.size(), 5u);
  swipe(p, 0.0);
  ASSERT_EQ(p.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(p[i].meta.video_id, "v" + std::to_string(i + 1));
  EXPECT_DOUBLE_EQ(p[0].play_pos_s, 0.0);
}

TEST(Swipe, ExhaustedSourceEndsSessionAndChargesResiduals) {
  Playlist p(entries(5), 5);
  append_download(p[0], 6, 1.0);
  p[0].play_pos_s = 2;
  append_download(p[3], 3, 2.0);
  const auto out = swipe(p, 2);
  EXPECT_TRUE(out.session_ended);
  EXPECT_TRUE(p.empty());
  EXPECT_DOUBLE_EQ(out.residual_bits, 6e6);
  EXPECT_DOUBLE_EQ(out.wasted_bits, 4e6 + 6e6);
  EXPECT_THROW(swipe(p, 0), RuntimeFault);
}
