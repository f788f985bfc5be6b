#pragma once

// Watch-time estimation: per-dimension parameter tables and fusion.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deload/error.hpp"
#include "deload/media.hpp"
#include "deload/weibull.hpp"

namespace deload {

struct DimensionalEstimates {
  std::optional<WeibullParams> video_dim;
  std::optional<WeibullParams> user_dim;
  std::optional<WeibullParams> ladder_dim;
};

/// Combines the available dimensions: both video and user present -> component-wise mean;
/// one present -> that one; neither -> the duration-ladder estimate.
inline WeibullParams fuse_params(const DimensionalEstimates& est) {
  if (!est.ladder_dim) throw ConfigError("fuse_params: duration-ladder estimate is missing");
  if (!est.video_dim && !est.user_dim) return *est.ladder_dim;
  if (!est.user_dim) return *est.video_dim;
  if (!est.video_dim) return *est.user_dim;
  const auto& v = *est.video_dim;
  const auto& u = *est.user_dim;
  return {(v.shape + u.shape) / 2.0, (v.scale + u.scale) / 2.0, (v.location + u.location) / 2.0};
}

/// Half-open duration buckets [edges[i], edges[i+1]); the last bucket is unbounded.
class DurationLadder {
 public:
  DurationLadder() : edges_{0.0, 15.0, 30.0, 60.0, 120.0} {}
  explicit DurationLadder(std::vector<double> lower_edges) : edges_(std::move(lower_edges)) {
    if (edges_.empty() || edges_.front() != 0.0) throw ConfigError("duration ladder must start at 0");
    for (std::size_t i = 1; i < edges_.size(); ++i)
      if (!(edges_[i] > edges_[i - 1])) throw ConfigError("duration ladder edges must be strictly ascending");
  }

  [[nodiscard]] std::size_t bucket_of(double duration_s) const {
    std::size_t b = 0;
    while (b + 1 < edges_.size() && duration_s >= edges_[b + 1]) ++b;
    return b;
  }
  [[nodiscard]] double lower(std::size_t b) const { return edges_.at(b); }
  [[nodiscard]] double upper(std::size_t b) const {
    return b + 1 < edges_.size() ? edges_[b + 1] : std::numeric_limits<double>::infinity();
  }
  [[nodiscard]] std::size_t size() const { return edges_.size(); }
  [[nodiscard]] const std::vector<double>& edges() const { return edges_; }

  /// Bucket key as serialized, e.g. "30:60" or "120:inf".
  [[nodiscard]] std::string key(std::size_t b) const;
  [[nodiscard]] std::optional<std::size_t> parse_key(std::string_view key) const;

 private:
  std::vector<double> edges_;
};

namespace detail {

inline std::string fmt_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline std::string DurationLadder::key(std::size_t b) const {
  return detail::fmt_double(lower(b)) + ":" + detail::fmt_double(upper(b));
}

inline std::optional<std::size_t> DurationLadder::parse_key(std::string_view k) const {
  for (std::size_t b = 0; b < edges_.size(); ++b)
    if (key(b) == k) return b;
  return std::nullopt;
}

struct ParamEntry {
  WeibullParams params;
  std::size_t n_samples = 0;
  double r2 = 0.0;
};

enum class Dimension { video, user, ladder };

inline const char* to_string(Dimension d) {
  switch (d) {
    case Dimension::video: return "video";
    case Dimension::user: return "user";
    case Dimension::ladder: return "ladder";
  }
  return "?";
}

/// Fitted parameters per video, per user and per duration bucket. Built once, then read-only.
struct ParamTable {
  DurationLadder ladder;
  std::map<std::string, ParamEntry> by_video;
  std::map<std::string, ParamEntry> by_user;
  std::map<std::size_t, ParamEntry> by_bucket;

  [[nodiscard]] DimensionalEstimates lookup(const std::string& user_id, const std::string& video_id,
                                            double duration_s) const {
    DimensionalEstimates est;
    if (auto it = by_video.find(video_id); it != by_video.end()) est.video_dim = it->second.params;
    if (auto it = by_user.find(user_id); it != by_user.end()) est.user_dim = it->second.params;
    if (auto it = by_bucket.find(ladder.bucket_of(duration_s)); it != by_bucket.end())
      est.ladder_dim = it->second.params;
    return est;
  }

  [[nodiscard]] WeibullParams fused(const std::string& user_id, const std::string& video_id,
                                    double duration_s) const {
    return fuse_params(lookup(user_id, video_id, duration_s));
  }

  [[nodiscard]] bool empty() const { return by_video.empty() && by_user.empty() && by_bucket.empty(); }
};

/// Per-group fitting failures, kept so callers can report why a dimension is missing.
struct BuildDiagnostics {
  std::map<FitFailure, std::size_t> failures;
};

/// Groups records by video, user and duration bucket and fits each group. Groups that
/// fail to fit are left out of the table.
inline ParamTable build_param_table(const std::vector<WatchRecord>& records, const DurationLadder& ladder = {},
                                    const FitConfig& cfg = {}, BuildDiagnostics* diag = nullptr) {
  std::map<std::string, std::vector<double>> per_video, per_user;
  std::map<std::size_t, std::vector<double>> per_bucket;
  for (const auto& r : records) {
    if (!(r.watch_time_s >= 0.0) || !(r.video_duration_s > 0.0))
      throw DataError("watch record for video '" + r.video_id + "' violates invariants");
    per_video[r.video_id].push_back(r.watch_time_s);
    per_user[r.user_id].push_back(r.watch_time_s);
    per_bucket[ladder.bucket_of(r.video_duration_s)].push_back(r.watch_time_s);
  }

  ParamTable table;
  table.ladder = ladder;
  auto fit_into = [&](auto& out, const auto& groups, FitConfig c) {
    for (const auto& [key, xs] : groups) {
      try {
        const auto fit = fit_weibull_lse(xs, std::nullopt, c);
        out[key] = ParamEntry{fit.params, fit.n_samples, fit.r2};
      } catch (const FitError& e) {
        if (diag) ++diag->failures[e.reason()];
      }
    }
  };
  fit_into(table.by_video, per_video, cfg);
  fit_into(table.by_user, per_user, cfg);
  // Every bucket with data gets a ladder entry; only hard failures (too few or
  // degenerate samples) can leave a bucket empty.
  FitConfig ladder_cfg = cfg;
  ladder_cfg.min_r2 = -std::numeric_limits<double>::infinity();
  fit_into(table.by_bucket, per_bucket, ladder_cfg);
  return table;
}

// Line format: dim,key,beta,eta,gamma,n_samples,r2
inline void write_param_table(std::ostream& os, const ParamTable& t) {
  os << "# ladder_edges";
  for (double e : t.ladder.edges()) os << ',' << detail::fmt_double(e);
  os << "\n# dim,key,beta,eta,gamma,n_samples,r2\n";
  auto emit = [&](Dimension d, const std::string& key, const ParamEntry& e) {
    os << to_string(d) << ',' << key << ',' << detail::fmt_double(e.params.shape) << ','
       << detail::fmt_double(e.params.scale) << ',' << detail::fmt_double(e.params.location) << ','
       << e.n_samples << ',' << detail::fmt_double(e.r2) << '\n';
  };
  for (const auto& [k, e] : t.by_video) emit(Dimension::video, k, e);
  for (const auto& [k, e] : t.by_user) emit(Dimension::user, k, e);
  for (const auto& [b, e] : t.by_bucket) emit(Dimension::ladder, t.ladder.key(b), e);
}

inline ParamTable read_param_table(std::istream& is, const std::string& origin = "<stream>") {
  ParamTable t;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw DataError(origin + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto sv = detail::trim(line);
    if (sv.empty()) continue;
    if (sv.starts_with("# ladder_edges")) {
      auto parts = detail::split(sv, ',');
      std::vector<double> edges;
      for (std::size_t i = 1; i < parts.size(); ++i) {
        auto v = detail::parse_double(parts[i]);
        if (!v) fail("bad ladder edge");
        edges.push_back(*v);
      }
      try {
        t.ladder = DurationLadder(edges);
      } catch (const ConfigError& e) {
        fail(e.what());
      }
      continue;
    }
    if (sv.front() == '#') continue;
    auto f = detail::split(sv, ',');
    if (f.size() != 7) fail("expected 7 fields, got " + std::to_string(f.size()));
    ParamEntry e;
    auto beta = detail::parse_double(f[2]), eta = detail::parse_double(f[3]), gamma = detail::parse_double(f[4]),
         n = detail::parse_double(f[5]), r2 = detail::parse_double(f[6]);
    if (!beta || !eta || !gamma || !n || !r2) fail("non-numeric field");
    e.params = {*beta, *eta, *gamma};
    e.n_samples = static_cast<std::size_t>(*n);
    e.r2 = *r2;
    if (!e.params.valid()) fail("invalid Weibull parameters");
    const std::string key(detail::trim(f[1]));
    const auto dim = detail::trim(f[0]);
    if (dim == "video") {
      t.by_video[key] = e;
    } else if (dim == "user") {
      t.by_user[key] = e;
    } else if (dim == "ladder") {
      auto b = t.ladder.parse_key(key);
      if (!b) fail("unknown ladder bucket '" + key + "'");
      t.by_bucket[*b] = e;
    } else {
      fail("unknown dimension '" + std::string(dim) + "'");
    }
  }
  return t;
}

inline void save_param_table(const std::string& path, const ParamTable& t) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  write_param_table(os, t);
}

inline ParamTable load_param_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path);
  return read_param_table(is, path);
}

}  // namespace deload
