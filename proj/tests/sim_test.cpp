#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "deload/strategies.hpp"
#include "oracles.hpp"
#include "sim_fixtures.hpp"

using namespace deload;
using namespace deload::testing;

namespace {

RetentionSource truth_for(const std::vector<PlaylistEntry>& videos, WeibullParams p) {
  RetentionSource r;
  for (const auto& v : videos) r.add_truth(v.meta.video_id, p);
  return r;
}

std::optional<std::size_t> first_unbuffered(const DecisionContext& ctx) {
  for (std::size_t i = 0; i < ctx.playlist.size(); ++i)
    if (!ctx.playlist[i].fully_buffered()) return i;
  return std::nullopt;
}

}  // namespace

TEST(Session, InfiniteBandwidthNeverStalls) {
  auto trace = constant_trace(1e9);
  auto videos = uniform_videos(8, 20.0, {1.0, 2.0});
  auto ret = truth_for(videos, {1.0, 8.0, 0.0});
  SimConfig cfg;
  cfg.rtt_min_ms = cfg.rtt_max_ms = 0.0;
  cfg.videos_per_session = 4;
  for (auto kind : {StrategyKind::naive_1s, StrategyKind::deload_1s, StrategyKind::deload_5s}) {
    auto s = make_strategy(kind, nullptr, {}, 1);
    const auto r = run_session({&trace, videos, "u", &ret, 5}, *s, cfg);
    EXPECT_EQ(r.metrics.total_rebuffer_s, 0.0) << to_string(kind);
    EXPECT_EQ(r.metrics.videos_watched, 4u);
  }
}

TEST(Session, TaskLatencyIsRttPlusTransfer) {
  auto trace = constant_trace(1.0);
  auto videos = uniform_videos(1, 30.0, {1.0});
  RetentionSource ret;
  SimConfig cfg;
  cfg.rtt_min_ms = cfg.rtt_max_ms = 100.0;
  cfg.videos_per_session = 1;
  cfg.queue_depth = 1;
  ScriptedStrategy s(1.0, first_unbuffered);
  Session sess({&trace, videos, "u", &ret, 1}, s, cfg);
  sess.step();
  ASSERT_EQ(sess.metrics().actions.size(), 1u);
  for (int i = 0; i < 10; ++i) sess.step();
  const auto& a = sess.metrics().actions.front();
  EXPECT_EQ(a.issued_at_s, 0.0);
  EXPECT_NEAR(a.completed_at_s, 1.1, 1e-9);
  EXPECT_NEAR(a.delivered_s, 1.0, 1e-12);
}

TEST(Session, SleepsForThePauseWindow) {
  auto trace = constant_trace(1e6);
  auto videos = uniform_videos(3, 60.0, {1.0}, {1.0, 1000.0, 0.0});
  auto ret = truth_for(videos, {1.0, 1000.0, 0.0});
  SimConfig cfg;
  cfg.rtt_min_ms = cfg.rtt_max_ms = 0.0;
  cfg.queue_depth = 3;
  std::vector<double> asked;
  ScriptedStrategy s(10.0, [&](const DecisionContext& ctx) -> std::optional<std::size_t> {
    asked.push_back(ctx.now_s);
    for (std::size_t i = 0; i < ctx.playlist.size(); ++i)
      if (ctx.playlist[i].ahead_s() < cfg.b_max_s) return i;
    return std::nullopt;
  });
  Session sess({&trace, videos, "u", &ret, 1}, s, cfg);
  sess.step();
  // Three 10 s tasks complete instantly, then the downloader naps.
  EXPECT_EQ(sess.metrics().actions.size(), 3u);
  EXPECT_TRUE(sess.sleeping());
  const auto issued = sess.metrics().actions.size();
  for (int i = 0; i < 4; ++i) sess.step();
  EXPECT_EQ(sess.metrics().actions.size(), issued);
  EXPECT_EQ(sess.metrics().sleeps, 1u);
  sess.step();
  EXPECT_GE(sess.metrics().sleeps, 1u);
  ASSERT_GE(asked.size(), 5u);
  EXPECT_NEAR(asked[4] - asked[3], 0.5, 1e-12);
}

TEST(Estimator, Examples) {
  const std::vector<CompletedTask> one{{2e6, 1.0, 50.0}};
  const auto e = estimate_network(one, 5, {1.0, 80.0});
  EXPECT_DOUBLE_EQ(e.throughput_mbps, 2.0);
  EXPECT_DOUBLE_EQ(e.rtt_ms, 50.0);
  const auto p = estimate_network({}, 5, {1.0, 80.0});
  EXPECT_EQ(p.throughput_mbps, 1.0);
  EXPECT_EQ(p.rtt_ms, 80.0);
  const std::vector<CompletedTask> three{{1e6, 1.0, 40.0}, {2e6, 1.0, 60.0}, {3e6, 1.0, 80.0}};
  EXPECT_DOUBLE_EQ(estimate_network(three, 5, {}).throughput_mbps, 2.0);
  EXPECT_DOUBLE_EQ(estimate_network(three, 2, {}).throughput_mbps, 2.5);
}

TEST(Abr, ThroughputRule) {
  const auto m = meta("v", 10.0, {1.0, 2.0, 4.0});
  EXPECT_EQ(abr_select(m, 3.0, 0.0), 2.0);
  EXPECT_EQ(abr_select(m, 0.1, 0.0), 1.0);
  EXPECT_EQ(abr_select(m, 100.0, 0.0), 4.0);
}

TEST(WatchTime, FullWatchRetentionGivesDuration) {
  RetentionSource r;
  r.add_truth("v", {1.0, 1e9, 0.0});
  EXPECT_EQ(sample_watch_time(r, "u", meta("v", 17.0), 3), 17.0);
  RetentionSource rec;
  rec.add_record({"u", "v", 17.0, 40.0});
  EXPECT_EQ(sample_watch_time(rec, "u", meta("v", 17.0), 3), 17.0);
}

TEST(WatchTime, WeibullMeanAndReproducibility) {
  RetentionSource r;
  r.add_truth("v", {1.0, 5.0, 0.0});
  const auto m = meta("v", 1e6);
  Rng rng(8);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += r.sample("u", m, rng);
  EXPECT_NEAR(sum / n, 5.0, 5.0 * 5.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_EQ(sample_watch_time(r, "u", m, 99), sample_watch_time(r, "u", m, 99));
}

TEST(WatchTime, FallbackAndRecordLookup) {
  RetentionSource r;
  r.fallback = {1.0, 1e9, 0.0};
  EXPECT_EQ(sample_watch_time(r, "u", meta("unknown", 9.0), 1), 9.0);
  r.add_record({"a", "v", 30.0, 4.0});
  r.add_record({"b", "v", 30.0, 6.0});
  EXPECT_EQ(sample_watch_time(r, "b", meta("v", 30.0), 1), 6.0);
  const double other = sample_watch_time(r, "c", meta("v", 30.0), 1);
  EXPECT_TRUE(other == 4.0 || other == 6.0);
}

TEST(Retention, ParsesBothLayouts) {
  std::istringstream truth("video_id,beta,eta,gamma\nv1,1.5,8,1\n");
  const auto a = parse_retention(truth, "t");
  ASSERT_NE(a.truth_for("v1"), nullptr);
  EXPECT_EQ(a.truth_for("v1")->scale, 8.0);
  std::istringstream recs("user_id,video_id,duration_s,watch_time_s\nu,v,10,3\n");
  EXPECT_EQ(sample_watch_time(parse_retention(recs, "r"), "u", meta("v", 10.0), 1), 3.0);
  std::istringstream bad("video_id,beta,eta,gamma\nv1,-1,8,1\n");
  try {
    parse_retention(bad, "bad.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:2"), std::string::npos);
  }
}

TEST(Trace, ParseAndReject) {
  std::istringstream ok("timestamp_ms,bandwidth_mbps\n0,1.5\n1000,2.5\n");
  const auto t = parse_trace(ok, "ok");
  EXPECT_EQ(t.samples().size(), 2u);
  EXPECT_DOUBLE_EQ(t.mean_mbps(), 2.0);
  EXPECT_DOUBLE_EQ(t.mbits_between(0.0, 2.0), 4.0);
  EXPECT_DOUBLE_EQ(t.mbits_between(1.5, 2.5), 2.0);  // wraps
  std::istringstream back("0,1\n500,1\n400,1\n");
  try {
    parse_trace(back, "back.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("back.csv:3"), std::string::npos);
  }
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(parse_trace(empty, "e"), DataError);
}

TEST(Trace, TimeToTransfer) {
  NetworkTrace t("sq", {{0.0, 2.0}, {1000.0, 0.0}});
  EXPECT_DOUBLE_EQ(*t.time_to_transfer(0.0, 1.0, 10.0), 0.5);
  EXPECT_DOUBLE_EQ(*t.time_to_transfer(0.75, 1.0, 10.0), 2.25);
  EXPECT_FALSE(t.time_to_transfer(1.0, 1.0, 1.9));
}

TEST(Session, ConservationFuzz) {
  const auto net = make_net(PolicyConfig{}, 3);
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = fuzz_session(trial, 13 + trial, &net).metrics;
    EXPECT_NEAR(m.downloaded_bits, m.watched_bits + m.wasted_bits, 1e-9 * std::max(1.0, m.downloaded_bits));
    EXPECT_GE(m.wasted_bits, -1e-6);
    EXPECT_GE(m.total_rebuffer_s, 0.0);
    EXPECT_GE(m.waste_ratio(), 0.0);
    EXPECT_LE(m.waste_ratio(), 1.0 + 1e-12);
  }
}

TEST(Session, NaiveOvershootIsBounded) {
  auto trace = constant_trace(50.0);
  auto videos = uniform_videos(1, 15.0, {1.0});
  RetentionSource ret;
  ret.add_truth("v0", {1.0, 1e9, 0.0});  // watched to the end
  SimConfig cfg;
  cfg.videos_per_session = 1;
  cfg.queue_depth = 1;
  NaiveStrategy s;
  const auto r = run_session({&trace, videos, "u", &ret, 2}, s, cfg);
  EXPECT_LE(r.metrics.wasted_bits, 1.0 * 1e6 + 1e-6);
  EXPECT_NEAR(r.metrics.watched_s, 15.0, 1e-9);
}

TEST(Session, SwipeCancelsInFlightTask) {
  auto trace = constant_trace(0.5);
  auto videos = uniform_videos(3, 30.0, {1.0});
  RetentionSource ret;
  ret.add_truth("v0", {1.0, 1e-6, 0.5});  // swipes almost immediately
  ret.fallback = {1.0, 1e9, 0.0};
  SimConfig cfg;
  cfg.videos_per_session = 2;
  cfg.queue_depth = 2;
  cfg.rtt_min_ms = cfg.rtt_max_ms = 0.0;
  ScriptedStrategy s(5.0, [](const DecisionContext&) { return std::optional<std::size_t>(0); });
  const auto r = run_session({&trace, videos, "u", &ret, 2}, s, cfg);
  ASSERT_FALSE(r.metrics.actions.empty());
  EXPECT_TRUE(r.metrics.actions.front().cancelled);
  EXPECT_GT(r.metrics.wasted_bits, 0.0);
}

TEST(Session, Deterministic) {
  std::vector<NetworkSample> samples;
  for (int i = 0; i < 20; ++i) samples.push_back({i * 1000.0, 0.5 + (i % 5)});
  NetworkTrace trace("d", samples);
  auto videos = uniform_videos(10, 25.0, {0.5, 1.0, 2.0});
  auto ret = truth_for(videos, {1.2, 9.0, 0.5});
  SimConfig cfg;
  cfg.videos_per_session = 6;
  PolicyConfig pc;
  const auto net = make_net(pc, 4);
  auto run = [&] {
    auto s = make_strategy(StrategyKind::deload, &net, pc, 3);
    return run_session({&trace, videos, "u", &ret, 17}, *s, cfg);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.metrics.actions.size(), b.metrics.actions.size());
  EXPECT_EQ(a.metrics.qoe, b.metrics.qoe);
  EXPECT_EQ(a.metrics.total_rebuffer_s, b.metrics.total_rebuffer_s);
  for (std::size_t i = 0; i < a.metrics.actions.size(); ++i) {
    EXPECT_EQ(a.metrics.actions[i].range_s, b.metrics.actions[i].range_s);
    EXPECT_EQ(a.metrics.actions[i].reward, b.metrics.actions[i].reward);
  }
}

TEST(Session, TruncatesAtSessionCap) {
  auto trace = constant_trace(0.0);
  auto videos = uniform_videos(3, 30.0);
  auto ret = truth_for(videos, {1.0, 10.0, 0.0});
  SimConfig cfg;
  cfg.max_session_s = 3.0;
  NaiveStrategy s;
  const auto r = run_session({&trace, videos, "u", &ret, 1}, s, cfg);
  EXPECT_TRUE(r.metrics.truncated);
  EXPECT_NEAR(r.metrics.total_rebuffer_s, 3.0, 1e-9);
}

TEST(Session, RejectsBadInputs) {
  auto trace = constant_trace(1.0);
  RetentionSource ret;
  NaiveStrategy s;
  SimConfig cfg;
  EXPECT_THROW(run_session({&trace, {}, "u", &ret, 1}, s, cfg), ConfigError);
  EXPECT_THROW(run_session({nullptr, uniform_videos(1, 5.0), "u", &ret, 1}, s, cfg), ConfigError);
  cfg.step_ms = 0.0;
  EXPECT_THROW(run_session({&trace, uniform_videos(1, 5.0), "u", &ret, 1}, s, cfg), ConfigError);
}
