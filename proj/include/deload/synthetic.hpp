#pragma once

// Synthetic evaluation suite: bandwidth traces, a video catalog, per-video ground-truth
// retention, a watch-record history for fitting, and an experiment config tying them
// together. Everything is a pure function of the seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "deload/error.hpp"
#include "deload/media.hpp"
#include "deload/rng.hpp"
#include "deload/trace.hpp"
#include "deload/weibull.hpp"
#include "deload/wte.hpp"

namespace deload {

struct SyntheticConfig {
  std::uint64_t seed = 7;
  std::size_t traces = 240;
  double trace_length_s = 900.0;
  double sample_interval_ms = 1000.0;
  double min_mean_mbps = 0.5;
  double max_mean_mbps = 12.0;
  std::size_t videos = 300;
  double min_duration_s = 8.0;
  double max_duration_s = 90.0;
  std::vector<double> ladder_mbps = {0.5, 1.0, 2.0, 4.0};
  std::size_t users = 60;
  std::size_t records_per_video = 40;
};

enum class TraceShape { constant, square_wave, random_walk };

inline const char* to_string(TraceShape s) {
  switch (s) {
    case TraceShape::constant: return "constant";
    case TraceShape::square_wave: return "square";
    case TraceShape::random_walk: return "walk";
  }
  return "?";
}

struct CatalogVideo {
  VideoMeta meta;
  WeibullParams truth;
};

struct SyntheticSuite {
  std::vector<NetworkTrace> traces;
  std::vector<CatalogVideo> catalog;
  std::vector<WatchRecord> history;
};

namespace detail {

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

}  // namespace detail

/// One trace whose long-run mean is close to `mean_mbps`.
inline NetworkTrace synth_trace(const std::string& name, TraceShape shape, double mean_mbps,
                                const SyntheticConfig& cfg, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::ceil(cfg.trace_length_s * 1000.0 / cfg.sample_interval_ms));
  std::vector<NetworkSample> samples(n);
  const double floor = 0.05 * mean_mbps;
  switch (shape) {
    case TraceShape::constant:
      for (std::size_t i = 0; i < n; ++i) samples[i].bandwidth_mbps = mean_mbps;
      break;
    case TraceShape::square_wave: {
      const double depth = uniform(rng, 0.3, 0.8);
      const auto half = static_cast<std::size_t>(uniform(rng, 5.0, 30.0) * 1000.0 / cfg.sample_interval_ms) + 1;
      for (std::size_t i = 0; i < n; ++i)
        samples[i].bandwidth_mbps = mean_mbps * ((i / half) % 2 ? 1.0 - depth : 1.0 + depth);
      break;
    }
    case TraceShape::random_walk: {
      // Mean-reverting walk in log space, rescaled to the requested mean.
      double x = 0.0, sum = 0.0;
      std::vector<double> raw(n);
      for (std::size_t i = 0; i < n; ++i) {
        x = 0.95 * x + 0.25 * standard_normal(rng);
        raw[i] = std::exp(x);
        sum += raw[i];
      }
      const double k = mean_mbps * static_cast<double>(n) / sum;
      for (std::size_t i = 0; i < n; ++i) samples[i].bandwidth_mbps = std::max(floor, raw[i] * k);
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) samples[i].timestamp_ms = static_cast<double>(i) * cfg.sample_interval_ms;
  return NetworkTrace(name, std::move(samples));
}

inline SyntheticSuite generate_suite(const SyntheticConfig& cfg) {
  if (cfg.traces == 0 || cfg.videos == 0 || cfg.users == 0) throw ConfigError("synthetic suite needs traces, videos and users");
  if (cfg.ladder_mbps.empty()) throw ConfigError("synthetic ladder is empty");
  SyntheticSuite suite;

  Rng trace_rng(mix_seed(cfg.seed, 1));
  for (std::size_t i = 0; i < cfg.traces; ++i) {
    const auto shape = static_cast<TraceShape>(i % 3);
    const double mean = detail::log_uniform(trace_rng, cfg.min_mean_mbps, cfg.max_mean_mbps);
    char name[64];
    std::snprintf(name, sizeof name, "trace_%03zu_%s", i, to_string(shape));
    suite.traces.push_back(synth_trace(name, shape, mean, cfg, trace_rng));
  }

  Rng video_rng(mix_seed(cfg.seed, 2));
  for (std::size_t i = 0; i < cfg.videos; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "vid%04zu", i);
    const double d = std::round(detail::log_uniform(video_rng, cfg.min_duration_s, cfg.max_duration_s) * 10.0) / 10.0;
    WeibullParams w;
    w.shape = uniform(video_rng, 0.6, 2.0);
    w.location = uniform(video_rng, 0.0, std::min(1.5, 0.1 * d));
    w.scale = uniform(video_rng, 0.15, 0.9) * d;
    suite.catalog.push_back({VideoMeta{id, d, cfg.ladder_mbps}, w});
  }

  Rng hist_rng(mix_seed(cfg.seed, 3));
  for (const auto& v : suite.catalog) {
    for (std::size_t r = 0; r < cfg.records_per_video; ++r) {
      const auto user = static_cast<std::size_t>(uniform01(hist_rng) * static_cast<double>(cfg.users)) % cfg.users;
      const double t = std::min(weibull_from_uniform(v.truth, uniform01(hist_rng)), v.meta.duration_s);
      suite.history.push_back({"user" + std::to_string(user), v.meta.video_id, v.meta.duration_s, t});
    }
  }
  return suite;
}

inline void write_trace(const std::filesystem::path& path, const NetworkTrace& t) {
  std::ofstream os(path);
  if (!os) throw RuntimeFault("cannot write " + path.string());
  os << "timestamp_ms,bandwidth_mbps\n";
  for (const auto& s : t.samples())
    os << detail::fmt_double(s.timestamp_ms) << ',' << detail::fmt_double(s.bandwidth_mbps) << '\n';
}

inline void write_catalog(std::ostream& os, const std::vector<CatalogVideo>& catalog) {
  os << "video_id,duration_s,bitrates_mbps\n";
  for (const auto& v : catalog) {
    os << v.meta.video_id << ',' << detail::fmt_double(v.meta.duration_s) << ',';
    for (std::size_t i = 0; i < v.meta.bitrate_ladder_mbps.size(); ++i)
      os << (i ? "|" : "") << detail::fmt_double(v.meta.bitrate_ladder_mbps[i]);
    os << '\n';
  }
}

inline void write_truth(std::ostream& os, const std::vector<CatalogVideo>& catalog) {
  os << "video_id,beta,eta,gamma\n";
  for (const auto& v : catalog)
    os << v.meta.video_id << ',' << detail::fmt_double(v.truth.shape) << ',' << detail::fmt_double(v.truth.scale)
       << ',' << detail::fmt_double(v.truth.location) << '\n';
}

inline void write_watch_records(std::ostream& os, const std::vector<WatchRecord>& records) {
  os << "user_id,video_id,duration_s,watch_time_s\n";
  for (const auto& r : records)
    os << r.user_id << ',' << r.video_id << ',' << detail::fmt_double(r.video_duration_s) << ','
       << detail::fmt_double(r.watch_time_s) << '\n';
}

}  // namespace deload
