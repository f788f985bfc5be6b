#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deload/demand.hpp"
#include "oracles.hpp"

using namespace deload;
using namespace deload::testing;

namespace {

}  // namespace

TEST(DemandPlaying, EqualBufferAndPositionGivesOne) {
  auto v = make_video_state(meta("a", 60), {1.3, 5, 0.5});
  set_buffer(v, 7.0, 7.0);
  EXPECT_DOUBLE_EQ(demand_playing(v).value, 1.0);
}

TEST(DemandPlaying, ClosedFormRatio) {
  auto v = make_video_state(meta("a", 60), {1.0, 5.0, 0.0});
  set_buffer(v, 5.0, 0.0);
  EXPECT_NEAR(demand_playing(v).value, std::exp(-1.0), 1e-15);
}

TEST(DemandPlaying, BufferInsideLocationGivesOne) {
  auto v = make_video_state(meta("a", 60), {2.0, 5.0, 3.0});
  set_buffer(v, 2.5, 1.0);
  EXPECT_DOUBLE_EQ(demand_playing(v).value, 1.0);
}

TEST(DemandPlaying, UnderflowIsDegenerate) {
  auto v = make_video_state(meta("a", 5000), {4.0, 1.0, 0.0});
  set_buffer(v, 1000.0, 900.0);
  const auto d = demand_playing(v);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.value, 0.0);
}

TEST(ComputeDemands, SecondVideoGetsRemainingMass) {
  Playlist p(entries({{1.0, 5.0, 0.0}, {1.0, 5.0, 2.0}}), 5);
  set_buffer(p[0], 5.0);
  set_buffer(p[1], 1.0);  // below the location
  const auto dv = compute_demands(p);
  EXPECT_NEAR(dv.demands[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(dv.demands[1], 1.0 - std::exp(-1.0), 1e-15);
}

TEST(ComputeDemands, FullMassAbsorbedZeroesLaterVideos) {
  Playlist p(entries({{1.0, 5.0, 0.0}, {1.0, 5.0, 0.0}, {1.0, 5.0, 0.0}}), 5);
  set_buffer(p[0], 0.0);  // survival 1 at the head
  set_buffer(p[1], 2.0);
  const auto dv = compute_demands(p);
  EXPECT_DOUBLE_EQ(dv.demands[0], 1.0);
  EXPECT_DOUBLE_EQ(dv.demands[1], 0.0);
  EXPECT_DOUBLE_EQ(dv.demands[2], 0.0);
}

TEST(ComputeDemands, MatchesMonteCarlo) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_playlist(rng);
    const auto dv = compute_demands(p);
    const auto mc = monte_carlo_demands(p, 100000, 77 + trial);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(dv.demands[i], mc[i], 0.01) << "trial " << trial << " i " << i;
  }
}

TEST(ComputeDemands, PrefixSumsEqualProductForm) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_playlist(rng);
    const auto dv = compute_demands(p);
    double sum = 0.0, prod = 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double s = i == 0 ? demand_playing(p[0]).value : weibull_survival(p[i].watch_params, p[i].buffered_s);
      sum += dv.demands[i];
      prod *= 1.0 - s;
      EXPECT_NEAR(1.0 - sum, prod, 1e-12);
      EXPECT_GE(dv.demands[i], 0.0);
      EXPECT_LE(dv.demands[i], 1.0);
      EXPECT_LE(sum, 1.0 + 1e-12);
    }
  }
}

TEST(ComputeDemands, MonotoneInBuffer) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> pick(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_playlist(rng);
    const auto before = compute_demands(p);
    const std::size_t i = pick(rng);
    set_buffer(p[i], std::min(59.0, p[i].buffered_s + 3.0), p[i].play_pos_s);
    const auto after = compute_demands(p);
    EXPECT_LE(after.demands[i], before.demands[i] + 1e-15);
    for (std::size_t j = i + 1; j < p.size(); ++j) EXPECT_GE(after.demands[j], before.demands[j] - 1e-15);
  }
}

TEST(SelectVideo, SleepsWhenEverythingIsBuffered) {
  Playlist p(entries({{1, 5, 0}, {1, 5, 0}, {1, 5, 0}}), 5);
  for (std::size_t i = 0; i < p.size(); ++i) set_buffer(p[i], 10.0);
  const auto dv = demand_decision(p, 10.0);
  EXPECT_FALSE(dv.selected);
  EXPECT_TRUE(dv.sleep);
}

TEST(SelectVideo, Argmax) {
  Playlist p(entries({{1, 5, 0}, {1, 5, 0}, {1, 5, 0}}), 5);
  DemandVector dv;
  dv.demands = {0.3, 0.6, 0.1};
  dv.degenerate = {false, false, false};
  EXPECT_EQ(select_video(p, dv, 10.0), 1u);
}

TEST(SelectVideo, SkipsFullyBufferedVideos) {
  Playlist p(entries({{1, 5, 0}, {1, 5, 0}, {1, 5, 0}}, 8.0), 5);
  set_buffer(p[0], 8.0, 1.0);
  DemandVector dv;
  dv.demands = {0.6, 0.3, 0.1};
  dv.degenerate = {false, false, false};
  EXPECT_EQ(select_video(p, dv, 10.0), 1u);
}

TEST(SelectVideo, TiesGoToLowerIndexAndScaleInvariant) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Playlist p(entries({{1, 5, 0}, {1, 5, 0}, {1, 5, 0}, {1, 5, 0}}), 5);
  DemandVector tie;
  tie.demands = {0.2, 0.4, 0.4, 0.0};
  tie.degenerate.assign(4, false);
  EXPECT_EQ(select_video(p, tie, 10.0), 1u);
  for (int trial = 0; trial < 100; ++trial) {
    DemandVector dv;
    dv.degenerate.assign(4, false);
    for (int i = 0; i < 4; ++i) dv.demands.push_back(u(rng));
    const auto a = select_video(p, dv, 10.0);
    const double c = 0.01 + 10.0 * u(rng);
    for (auto& d : dv.demands) d *= c;
    EXPECT_EQ(select_video(p, dv, 10.0), a);
  }
}

TEST(UniformSurvival, MatchesClosedForm) {
  auto v = make_video_state(meta("a", 20.0), {});
  EXPECT_DOUBLE_EQ(uniform_survival(v, 5.0), 0.75);
  EXPECT_DOUBLE_EQ(uniform_survival(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(uniform_survival(v, 25.0), 0.0);
}
