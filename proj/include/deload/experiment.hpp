#pragma once

// Offline evaluation pipeline: experiment config, data ingestion, strategy x trace
// simulation, training episodes, reports and plot-ready series.

#include <glob.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "deload/error.hpp"
#include "deload/media.hpp"
#include "deload/parallel.hpp"
#include "deload/policy.hpp"
#include "deload/ppo.hpp"
#include "deload/sim.hpp"
#include "deload/strategies.hpp"
#include "deload/synthetic.hpp"
#include "deload/trace.hpp"
#include "deload/wte.hpp"

namespace deload {

namespace fs = std::filesystem;

// ---- config ----------------------------------------------------------------------------

struct DataPaths {
  std::string traces;         // glob
  std::string catalog;        // video_id,duration_s,bitrates_mbps (ladder separated by '|')
  std::string retention;      // ground truth or watch records
  std::string watch_records;  // history for fitting the parameter table
  std::string param_table;    // fitted table; fitted from watch_records when absent
};

struct ExperimentSpec {
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::vector<StrategyKind> strategies;
  DataPaths data;
  std::map<StrategyKind, std::string> checkpoints;  // per learned strategy
  std::string output = "out";
  std::size_t users = 60;
  SimConfig sim;
  PolicyConfig policy;
  TrainConfig train;  // episodes, mode and PPO settings; sim/policy/seed are copied in

  void validate() const {
    if (strategies.empty()) throw ConfigError("config: at least one strategy is required");
    if (data.traces.empty()) throw ConfigError("config: data.traces is required");
    if (data.catalog.empty()) throw ConfigError("config: data.catalog is required");
    if (data.retention.empty()) throw ConfigError("config: data.retention is required");
    if (users == 0) throw ConfigError("config: users must be positive");
    if (policy.k == 0) throw ConfigError("config: policy.k must be positive");
    if (!(policy.range_max_s > policy.range_min_s) || !(policy.range_min_s > 0.0))
      throw ConfigError("config: policy range bounds must satisfy 0 < min < max");
    if (!(policy.e_high > policy.e_low) || policy.e_low < 0.0 || policy.e_high >= 1.0)
      throw ConfigError("config: policy needs 0 <= e_low < e_high < 1");
    sim.validate();
  }
};

namespace detail {

using json = nlohmann::json;

/// Reads `obj` into fields via `fields(key, value)`; unknown keys are errors.
template <class Fn>
void read_object(const json& obj, const std::string& where, Fn&& fields) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items())
    if (!fields(key, value)) throw ConfigError("config: unknown key '" + where + "." + key + "'");
}

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!v.is_number()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>)
        if (!v.is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' has the wrong type");
  }
}

inline std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

inline StrategyKind strategy_from(const json& v, const std::string& key) {
  const auto name = get_as<std::string>(v, key);
  const auto k = parse_strategy(name);
  if (!k) throw ConfigError("config: unknown strategy '" + name + "' in " + key);
  return *k;
}

}  // namespace detail

/// Parses a JSON experiment config. Relative paths resolve against `base_dir`.
inline ExperimentSpec parse_spec(const std::string& text, const fs::path& base_dir) {
  using detail::get_as;
  detail::json root;
  try {
    root = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentSpec s;
  detail::read_object(root, "<root>", [&](const std::string& k, const detail::json& v) {
    if (k == "seed") s.seed = get_as<std::uint64_t>(v, k);
    else if (k == "jobs") s.jobs = get_as<std::size_t>(v, k);
    else if (k == "users") s.users = get_as<std::size_t>(v, k);
    else if (k == "output") s.output = detail::resolve(base_dir, get_as<std::string>(v, k));
    else if (k == "strategies") {
      if (!v.is_array()) throw ConfigError("config: 'strategies' must be an array");
      for (const auto& x : v) s.strategies.push_back(detail::strategy_from(x, k));
    } else if (k == "data") {
      detail::read_object(v, k, [&](const std::string& dk, const detail::json& dv) {
        auto path = detail::resolve(base_dir, get_as<std::string>(dv, "data." + dk));
        if (dk == "traces") s.data.traces = path;
        else if (dk == "catalog") s.data.catalog = path;
        else if (dk == "retention") s.data.retention = path;
        else if (dk == "watch_records") s.data.watch_records = path;
        else if (dk == "param_table") s.data.param_table = path;
        else return false;
        return true;
      });
    } else if (k == "checkpoints") {
      detail::read_object(v, k, [&](const std::string& ck, const detail::json& cv) {
        const auto kind = parse_strategy(ck);
        if (!kind || !uses_policy_net(*kind)) return false;
        s.checkpoints[*kind] = detail::resolve(base_dir, get_as<std::string>(cv, "checkpoints." + ck));
        return true;
      });
    } else if (k == "sim") {
      auto& c = s.sim;
      detail::read_object(v, k, [&](const std::string& sk, const detail::json& sv) {
        const auto key = "sim." + sk;
        if (sk == "step_ms") c.step_ms = get_as<double>(sv, key);
        else if (sk == "rtt_min_ms") c.rtt_min_ms = get_as<double>(sv, key);
        else if (sk == "rtt_max_ms") c.rtt_max_ms = get_as<double>(sv, key);
        else if (sk == "queue_depth") c.queue_depth = get_as<std::size_t>(sv, key);
        else if (sk == "b_max_s") c.b_max_s = get_as<double>(sv, key);
        else if (sk == "pause_ms") c.pause_ms = get_as<double>(sv, key);
        else if (sk == "estimator_window") c.estimator_window = get_as<std::size_t>(sv, key);
        else if (sk == "prior_throughput_mbps") c.prior_throughput_mbps = get_as<double>(sv, key);
        else if (sk == "prior_rtt_ms") c.prior_rtt_ms = get_as<double>(sv, key);
        else if (sk == "abr_safety") c.abr_safety = get_as<double>(sv, key);
        else if (sk == "videos_per_session") c.videos_per_session = get_as<std::size_t>(sv, key);
        else if (sk == "max_session_s") c.max_session_s = get_as<double>(sv, key);
        else if (sk == "reward") {
          detail::read_object(sv, key, [&](const std::string& rk, const detail::json& rv) {
            const auto rkey = key + "." + rk;
            if (rk == "alpha") c.reward.alpha = get_as<double>(rv, rkey);
            else if (rk == "beta") c.reward.beta = get_as<double>(rv, rkey);
            else if (rk == "waste_clip_bits") c.reward.waste_clip_bits = get_as<double>(rv, rkey);
            else return false;
            return true;
          });
        } else return false;
        return true;
      });
    } else if (k == "policy") {
      auto& c = s.policy;
      detail::read_object(v, k, [&](const std::string& pk, const detail::json& pv) {
        const auto key = "policy." + pk;
        if (pk == "k") c.k = get_as<std::size_t>(pv, key);
        else if (pk == "e_high") c.e_high = get_as<double>(pv, key);
        else if (pk == "e_low") c.e_low = get_as<double>(pv, key);
        else if (pk == "range_min_s") c.range_min_s = get_as<double>(pv, key);
        else if (pk == "range_max_s") c.range_max_s = get_as<double>(pv, key);
        else if (pk == "duration_cap_s") c.duration_cap_s = get_as<double>(pv, key);
        else if (pk == "throughput_ref_mbps") c.throughput_ref_mbps = get_as<double>(pv, key);
        else if (pk == "rtt_ref_ms") c.rtt_ref_ms = get_as<double>(pv, key);
        else if (pk == "hidden") {
          if (!pv.is_array() || pv.empty()) throw ConfigError("config: 'policy.hidden' must be a non-empty array");
          c.hidden.clear();
          for (const auto& h : pv) c.hidden.push_back(get_as<std::size_t>(h, key));
        } else return false;
        return true;
      });
    } else if (k == "train") {
      auto& t = s.train;
      detail::read_object(v, k, [&](const std::string& tk, const detail::json& tv) {
        const auto key = "train." + tk;
        if (tk == "episodes") t.episodes = get_as<std::size_t>(tv, key);
        else if (tk == "episodes_per_update") t.episodes_per_update = get_as<std::size_t>(tv, key);
        else if (tk == "mode") t.mode = detail::strategy_from(tv, key);
        else if (tk == "lr") t.ppo.lr = get_as<double>(tv, key);
        else if (tk == "clip_eps") t.ppo.clip_eps = get_as<double>(tv, key);
        else if (tk == "epochs") t.ppo.epochs = get_as<int>(tv, key);
        else if (tk == "discount") t.ppo.discount = get_as<double>(tv, key);
        else if (tk == "discount_per_second") t.ppo.discount_per_second = get_as<bool>(tv, key);
        else if (tk == "use_gae") t.ppo.use_gae = get_as<bool>(tv, key);
        else if (tk == "gae_lambda") t.ppo.gae_lambda = get_as<double>(tv, key);
        else if (tk == "minibatch") t.ppo.minibatch = get_as<std::size_t>(tv, key);
        else if (tk == "normalize_advantages") t.ppo.normalize_advantages = get_as<bool>(tv, key);
        else if (tk == "max_grad_norm") t.ppo.max_grad_norm = get_as<double>(tv, key);
        else if (tk == "reward_scale") t.ppo.reward_scale = get_as<double>(tv, key);
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  s.validate();
  return s;
}

inline ExperimentSpec load_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_spec(ss.str(), fs::path(path).parent_path());
}

// ---- ingestion -------------------------------------------------------------------------

struct TraceSummary {
  std::string name;
  std::size_t samples = 0;
  double duration_s = 0.0;
  double mean_mbps = 0.0;
  double median_mbps = 0.0;
};

inline TraceSummary summarize(const NetworkTrace& t) {
  return {t.name(), t.samples().size(), t.period_s(), t.mean_mbps(), t.median_mbps()};
}

/// Files matching `pattern`, sorted.
inline std::vector<std::string> glob_files(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

/// Parses every file matching `pattern`; traces are named by file stem and ordered by path.
inline std::vector<NetworkTrace> ingest_traces(const std::string& pattern) {
  const auto files = glob_files(pattern);
  if (files.empty()) throw DataError("no trace files match '" + pattern + "'");
  std::vector<NetworkTrace> traces;
  traces.reserve(files.size());
  for (const auto& f : files) {
    std::ifstream is(f);
    if (!is) throw DataError("cannot read trace '" + f + "'");
    auto t = parse_trace(is, f);
    traces.emplace_back(fs::path(f).stem().string(), t.samples());
  }
  return traces;
}

inline std::vector<VideoMeta> parse_catalog(std::istream& is, const std::string& origin) {
  std::vector<VideoMeta> out;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) { throw DataError(origin + ":" + std::to_string(lineno) + ": " + why); };
  while (std::getline(is, line)) {
    ++lineno;
    const auto sv = detail::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    const auto f = detail::split(sv, ',');
    if (f.size() != 3) fail("expected 'video_id,duration_s,bitrates_mbps'");
    if (out.empty() && detail::trim(f[0]) == "video_id") continue;
    const auto d = detail::parse_double(f[1]);
    if (!d) fail("non-numeric duration");
    VideoMeta m{std::string(detail::trim(f[0])), *d, {}};
    for (auto b : detail::split(f[2], '|')) {
      const auto x = detail::parse_double(b);
      if (!x) fail("non-numeric bitrate");
      m.bitrate_ladder_mbps.push_back(*x);
    }
    try {
      m.validate();
    } catch (const DataError& e) {
      fail(e.what());
    }
    out.push_back(std::move(m));
  }
  if (out.empty()) throw DataError(origin + ": catalog is empty");
  return out;
}

inline std::vector<WatchRecord> parse_watch_records(std::istream& is, const std::string& origin) {
  std::vector<WatchRecord> out;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) { throw DataError(origin + ":" + std::to_string(lineno) + ": " + why); };
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    const auto sv = detail::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    const auto f = detail::split(sv, ',');
    if (f.size() != 4) fail("expected 'user_id,video_id,duration_s,watch_time_s'");
    if (std::exchange(first, false) && detail::trim(f[0]) == "user_id") continue;
    const auto d = detail::parse_double(f[2]), w = detail::parse_double(f[3]);
    if (!d || !w) fail("non-numeric duration or watch time");
    if (!(*d > 0.0) || !(*w >= 0.0)) fail("duration must be positive and watch time non-negative");
    out.push_back({std::string(detail::trim(f[0])), std::string(detail::trim(f[1])), *d, *w});
  }
  return out;
}

namespace detail {

template <class Fn>
auto with_file(const std::string& path, Fn&& fn) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read '" + path + "'");
  return fn(is);
}

}  // namespace detail

inline std::vector<VideoMeta> load_catalog(const std::string& path) {
  return detail::with_file(path, [&](std::istream& is) { return parse_catalog(is, path); });
}

inline std::vector<WatchRecord> load_watch_records(const std::string& path) {
  return detail::with_file(path, [&](std::istream& is) { return parse_watch_records(is, path); });
}

inline RetentionSource load_retention(const std::string& path) {
  return detail::with_file(path, [&](std::istream& is) { return parse_retention(is, path); });
}

/// Inputs shared read-only by every session of an experiment.
struct ExperimentData {
  std::vector<NetworkTrace> traces;
  std::vector<VideoMeta> catalog;
  RetentionSource retention;
  ParamTable params;
};

inline ExperimentData load_data(const ExperimentSpec& spec) {
  ExperimentData d;
  d.traces = ingest_traces(spec.data.traces);
  d.catalog = load_catalog(spec.data.catalog);
  d.retention = load_retention(spec.data.retention);
  if (!spec.data.param_table.empty() && fs::exists(spec.data.param_table)) {
    d.params = load_param_table(spec.data.param_table);
  } else if (!spec.data.watch_records.empty()) {
    d.params = build_param_table(load_watch_records(spec.data.watch_records));
  } else {
    throw ConfigError("config: need data.param_table or data.watch_records");
  }
  if (d.params.by_bucket.empty()) throw DataError("parameter table has no duration-ladder entries");
  return d;
}

// ---- sessions --------------------------------------------------------------------------

/// Playlist, viewer and trace phase for one session, all drawn from `seed`.
inline SessionSpec build_session(const ExperimentData& data, const ExperimentSpec& spec, std::size_t trace_index,
                                 std::uint64_t seed) {
  Rng rng(mix_seed(seed, 7));
  const std::size_t n = spec.sim.source_length();
  std::vector<std::size_t> order(data.catalog.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SessionSpec s;
  s.trace = &data.traces.at(trace_index);
  s.retention = &data.retention;
  s.seed = seed;
  s.user_id = "user" + std::to_string(rng() % spec.users);
  s.trace_offset_s = uniform01(rng) * s.trace->period_s();
  for (std::size_t i = 0; i < n; ++i) {
    // Fresh shuffle per pass over the catalog: no repeats unless the playlist is longer.
    if (i % order.size() == 0)
      for (std::size_t j = order.size(); j > 1; --j) std::swap(order[j - 1], order[rng() % j]);
    const auto& m = data.catalog[order[i % order.size()]];
    s.videos.push_back({m, data.params.fused(s.user_id, m.video_id, m.duration_s)});
  }
  return s;
}

inline std::uint64_t eval_seed(const ExperimentSpec& spec, std::size_t trace_index) {
  return mix_seed(spec.seed, 200000 + trace_index);
}

/// Training episodes cycle through a seeded permutation of the traces with fresh
/// playlists and viewers each time.
inline EpisodeSource training_source(const ExperimentData& data, const ExperimentSpec& spec) {
  std::vector<std::size_t> perm(data.traces.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(mix_seed(spec.seed, 3));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  return [&data, &spec, perm](std::size_t ep) {
    return build_session(data, spec, perm[ep % perm.size()], mix_seed(spec.seed, 400000 + ep));
  };
}

inline TrainConfig train_config(const ExperimentSpec& spec) {
  TrainConfig cfg = spec.train;
  cfg.policy = spec.policy;
  cfg.sim = spec.sim;
  cfg.seed = spec.seed;
  cfg.jobs = spec.jobs;
  return cfg;
}

inline TrainResult train_experiment(const ExperimentSpec& spec, const ExperimentData& data) {
  return train(train_config(spec), training_source(data, spec));
}

// ---- reports ---------------------------------------------------------------------------

struct RecordRow {
  std::string strategy;
  std::string trace;
  double trace_mean_mbps = 0.0;
  int tercile = 0;  // 0 = lowest-throughput third of traces
  double qoe = 0.0;
  double normalized_qoe = 0.0;
  double rebuffer_s = 0.0;
  double downloaded_bits = 0.0;
  double watched_bits = 0.0;
  double wasted_bits = 0.0;
  double waste_ratio = 0.0;
  double mean_bitrate_mbps = 0.0;
  double mean_range_s = 0.0;
  std::size_t actions = 0;
  std::size_t videos_watched = 0;
  double session_s = 0.0;
  bool truncated = false;
};

struct ActionRow {
  std::string strategy;
  std::string trace;
  std::size_t index = 0;
  double issued_at_s = 0.0;
  std::size_t video_index = 0;
  double range_s = 0.0;
  double delivered_s = 0.0;
  double bitrate_mbps = 0.0;
  double throughput_mbps = 0.0;
  double rtt_ms = 0.0;
  double wasted_bits = 0.0;
  double rebuffer_s = 0.0;
  double reward = 0.0;
  bool cancelled = false;
};

struct Report {
  std::uint64_t seed = 0;
  std::vector<std::string> strategies;  // in config order
  std::vector<RecordRow> records;       // strategy-major, traces in ingest order
  std::vector<ActionRow> actions;
};

/// Tercile of each trace by mean bandwidth rank (ties broken by position).
inline std::vector<int> throughput_terciles(const std::vector<double>& means) {
  std::vector<std::size_t> idx(means.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  std::vector<int> out(means.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[idx[r]] = static_cast<int>(3 * r / idx.size());
  return out;
}

/// Min-max scaling over every run; all zeros when every run scored the same.
inline void normalize_qoe(std::vector<RecordRow>& rows) {
  if (rows.empty()) return;
  double lo = rows.front().qoe, hi = lo;
  for (const auto& r : rows) lo = std::min(lo, r.qoe), hi = std::max(hi, r.qoe);
  for (auto& r : rows) r.normalized_qoe = hi > lo ? (r.qoe - lo) / (hi - lo) : 0.0;
}

/// Loads each learned strategy's checkpoint; fails before any simulation.
inline std::map<StrategyKind, MlpNet> load_policies(const ExperimentSpec& spec) {
  std::map<StrategyKind, MlpNet> nets;
  for (auto k : spec.strategies) {
    if (!uses_policy_net(k) || nets.count(k)) continue;
    auto it = spec.checkpoints.find(k);
    if (it == spec.checkpoints.end())
      throw ConfigError(std::string("config: strategy ") + to_string(k) + " needs checkpoints." + to_string(k));
    if (!fs::exists(it->second)) throw DataError("checkpoint '" + it->second + "' does not exist");
    auto ck = load_checkpoint(it->second);
    if (ck.net.actor.input_dim() != state_dim(spec.policy))
      throw DataError("checkpoint '" + it->second + "' does not match policy.k");
    nets.emplace(k, std::move(ck.net));
  }
  return nets;
}

/// Simulates every strategy on every trace. Output order is fixed by the config and the
/// trace order, independent of `spec.jobs`.
inline Report run_experiment(const ExperimentSpec& spec, const ExperimentData& data) {
  spec.validate();
  const auto nets = load_policies(spec);
  const std::size_t nt = data.traces.size(), ns = spec.strategies.size();
  std::vector<SessionResult> results(nt * ns);
  parallel_for(results.size(), spec.jobs, [&](std::size_t job) {
    const std::size_t si = job / nt, ti = job % nt;
    const auto kind = spec.strategies[si];
    const MlpNet* net = uses_policy_net(kind) ? &nets.at(kind) : nullptr;
    const auto session = build_session(data, spec, ti, eval_seed(spec, ti));
    auto strategy = make_strategy(kind, net, spec.policy, mix_seed(session.seed, 5));
    results[job] = run_session(session, *strategy, spec.sim);
  });

  std::vector<double> means;
  for (const auto& t : data.traces) means.push_back(t.mean_mbps());
  const auto terciles = throughput_terciles(means);

  Report rep;
  rep.seed = spec.seed;
  for (auto k : spec.strategies) rep.strategies.emplace_back(to_string(k));
  for (std::size_t job = 0; job < results.size(); ++job) {
    const std::size_t si = job / nt, ti = job % nt;
    const auto& m = results[job].metrics;
    RecordRow r;
    r.strategy = rep.strategies[si];
    r.trace = data.traces[ti].name();
    r.trace_mean_mbps = means[ti];
    r.tercile = terciles[ti];
    r.qoe = m.qoe;
    r.rebuffer_s = m.total_rebuffer_s;
    r.downloaded_bits = m.downloaded_bits;
    r.watched_bits = m.watched_bits;
    r.wasted_bits = m.wasted_bits;
    r.waste_ratio = m.waste_ratio();
    r.mean_bitrate_mbps = m.mean_bitrate_mbps();
    r.mean_range_s = m.mean_range_s();
    r.actions = m.actions.size();
    r.videos_watched = m.videos_watched;
    r.session_s = m.session_s;
    r.truncated = m.truncated;
    rep.records.push_back(r);
    for (std::size_t k = 0; k < m.actions.size(); ++k) {
      const auto& a = m.actions[k];
      rep.actions.push_back({r.strategy, r.trace, k, a.issued_at_s, a.video_index, a.range_s, a.delivered_s,
                             a.bitrate_mbps, a.throughput_mbps, a.rtt_ms, a.wasted_bits, a.rebuffer_s, a.reward,
                             a.cancelled});
    }
  }
  normalize_qoe(rep.records);
  return rep;
}

namespace detail {

inline const char* kRecordHeader =
    "strategy,trace,trace_mean_mbps,tercile,qoe,normalized_qoe,rebuffer_s,downloaded_bits,watched_bits,"
    "wasted_bits,waste_ratio,mean_bitrate_mbps,mean_range_s,actions,videos_watched,session_s,truncated";
inline const char* kActionHeader =
    "strategy,trace,action,issued_at_s,video_index,range_s,delivered_s,bitrate_mbps,throughput_mbps,rtt_ms,"
    "wasted_bits,rebuffer_s,reward,cancelled";

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw RuntimeFault("cannot write '" + p.string() + "'");
  return os;
}

struct RowReader {
  std::vector<std::string_view> f;
  std::size_t i = 0;
  const std::string* origin;
  std::size_t line;

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError(*origin + ":" + std::to_string(line) + ": " + why);
  }
  std::string str() { return std::string(f.at(i++)); }
  double num() {
    auto v = parse_double(f.at(i++));
    if (!v) fail("non-numeric field " + std::to_string(i));
    return *v;
  }
  std::size_t count() {
    const double v = num();
    if (v < 0.0 || v != std::floor(v)) fail("expected a count in field " + std::to_string(i));
    return static_cast<std::size_t>(v);
  }
};

template <class Fn>
void read_rows(const fs::path& path, const char* header, std::size_t fields, Fn&& fn) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read '" + path.string() + "'");
  const std::string origin = path.string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != header) throw DataError(origin + ":1: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    RowReader r{split(line, ','), 0, &origin, lineno};
    if (r.f.size() != fields) r.fail("expected " + std::to_string(fields) + " fields");
    fn(r);
  }
}

}  // namespace detail

inline nlohmann::ordered_json summarize(const Report& rep) {
  nlohmann::ordered_json j;
  j["seed"] = rep.seed;
  std::size_t traces = 0;
  if (!rep.strategies.empty())
    for (const auto& r : rep.records) traces += r.strategy == rep.strategies.front();
  j["traces"] = traces;
  std::map<std::string, double> mean_qoe;
  for (const auto& s : rep.strategies) {
    std::vector<double> qoe, ranges;
    double nq = 0.0, rb = 0.0, wasted = 0.0, downloaded = 0.0, bitrate = 0.0;
    for (const auto& r : rep.records) {
      if (r.strategy != s) continue;
      qoe.push_back(r.qoe);
      nq += r.normalized_qoe, rb += r.rebuffer_s, wasted += r.wasted_bits, downloaded += r.downloaded_bits;
      bitrate += r.mean_bitrate_mbps;
    }
    for (const auto& a : rep.actions)
      if (a.strategy == s) ranges.push_back(a.range_s);
    const double n = std::max<double>(1.0, static_cast<double>(qoe.size()));
    double total = 0.0;
    for (double q : qoe) total += q;
    auto median = [](std::vector<double> v) {
      if (v.empty()) return 0.0;
      std::sort(v.begin(), v.end());
      const auto m = v.size() / 2;
      return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    mean_qoe[s] = total / n;
    auto& o = j["strategies"][s];
    o["runs"] = qoe.size();
    o["mean_qoe"] = total / n;
    o["median_qoe"] = median(qoe);
    o["mean_normalized_qoe"] = nq / n;
    o["mean_rebuffer_s"] = rb / n;
    o["waste_ratio"] = downloaded > 0.0 ? wasted / downloaded : 0.0;
    o["mean_bitrate_mbps"] = bitrate / n;
    o["actions"] = ranges.size();
    o["median_range_s"] = median(ranges);
  }
  // Relative mean-QoE gain of each strategy over each other one, in percent.
  for (const auto& a : rep.strategies)
    for (const auto& b : rep.strategies)
      if (a != b && mean_qoe[b] != 0.0)
        j["relative_qoe_gain_pct"][a + "_vs_" + b] = 100.0 * (mean_qoe[a] - mean_qoe[b]) / std::abs(mean_qoe[b]);
  return j;
}

/// Writes records.csv, actions.csv and summary.json into `dir`.
inline void write_report(const fs::path& dir, const Report& rep) {
  using detail::fmt_double;
  fs::create_directories(dir);
  {
    auto os = detail::open_out(dir / "records.csv");
    os << detail::kRecordHeader << '\n';
    for (const auto& r : rep.records)
      os << r.strategy << ',' << r.trace << ',' << fmt_double(r.trace_mean_mbps) << ',' << r.tercile << ','
         << fmt_double(r.qoe) << ',' << fmt_double(r.normalized_qoe) << ',' << fmt_double(r.rebuffer_s) << ','
         << fmt_double(r.downloaded_bits) << ',' << fmt_double(r.watched_bits) << ',' << fmt_double(r.wasted_bits)
         << ',' << fmt_double(r.waste_ratio) << ',' << fmt_double(r.mean_bitrate_mbps) << ','
         << fmt_double(r.mean_range_s) << ',' << r.actions << ',' << r.videos_watched << ','
         << fmt_double(r.session_s) << ',' << (r.truncated ? 1 : 0) << '\n';
  }
  {
    auto os = detail::open_out(dir / "actions.csv");
    os << detail::kActionHeader << '\n';
    for (const auto& a : rep.actions)
      os << a.strategy << ',' << a.trace << ',' << a.index << ',' << fmt_double(a.issued_at_s) << ','
         << a.video_index << ',' << fmt_double(a.range_s) << ',' << fmt_double(a.delivered_s) << ','
         << fmt_double(a.bitrate_mbps) << ',' << fmt_double(a.throughput_mbps) << ',' << fmt_double(a.rtt_ms)
         << ',' << fmt_double(a.wasted_bits) << ',' << fmt_double(a.rebuffer_s) << ',' << fmt_double(a.reward)
         << ',' << (a.cancelled ? 1 : 0) << '\n';
  }
  auto os = detail::open_out(dir / "summary.json");
  os << summarize(rep).dump(2) << '\n';
}

inline Report read_report(const fs::path& dir) {
  Report rep;
  detail::read_rows(dir / "records.csv", detail::kRecordHeader, 17, [&](detail::RowReader& r) {
    RecordRow x;
    x.strategy = r.str();
    x.trace = r.str();
    x.trace_mean_mbps = r.num();
    x.tercile = static_cast<int>(r.count());
    if (x.tercile > 2) r.fail("tercile out of range");
    x.qoe = r.num();
    x.normalized_qoe = r.num();
    x.rebuffer_s = r.num();
    x.downloaded_bits = r.num();
    x.watched_bits = r.num();
    x.wasted_bits = r.num();
    x.waste_ratio = r.num();
    x.mean_bitrate_mbps = r.num();
    x.mean_range_s = r.num();
    x.actions = r.count();
    x.videos_watched = r.count();
    x.session_s = r.num();
    x.truncated = r.count() != 0;
    if (std::find(rep.strategies.begin(), rep.strategies.end(), x.strategy) == rep.strategies.end())
      rep.strategies.push_back(x.strategy);
    rep.records.push_back(std::move(x));
  });
  detail::read_rows(dir / "actions.csv", detail::kActionHeader, 14, [&](detail::RowReader& r) {
    ActionRow a;
    a.strategy = r.str();
    a.trace = r.str();
    a.index = r.count();
    a.issued_at_s = r.num();
    a.video_index = r.count();
    a.range_s = r.num();
    a.delivered_s = r.num();
    a.bitrate_mbps = r.num();
    a.throughput_mbps = r.num();
    a.rtt_ms = r.num();
    a.wasted_bits = r.num();
    a.rebuffer_s = r.num();
    a.reward = r.num();
    a.cancelled = r.count() != 0;
    rep.actions.push_back(std::move(a));
  });
  if (auto is = std::ifstream(dir / "summary.json")) {
    try {
      rep.seed = nlohmann::json::parse(is).value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / "summary.json").string() + ": " + e.what());
    }
  }
  return rep;
}

// ---- plot data -------------------------------------------------------------------------

struct RangeStats {
  std::size_t actions = 0;
  double median_s = 0.0;
  double mean_s = 0.0;
};

/// Issued range durations per strategy and throughput tercile.
inline std::map<std::string, std::array<std::vector<double>, 3>> ranges_by_tercile(const Report& rep) {
  std::map<std::pair<std::string, std::string>, int> tercile_of;
  for (const auto& r : rep.records) tercile_of[{r.strategy, r.trace}] = r.tercile;
  std::map<std::string, std::array<std::vector<double>, 3>> out;
  for (const auto& a : rep.actions) {
    auto it = tercile_of.find({a.strategy, a.trace});
    if (it == tercile_of.end()) throw DataError("action row for unknown run " + a.strategy + "/" + a.trace);
    out[a.strategy][static_cast<std::size_t>(it->second)].push_back(a.range_s);
  }
  return out;
}

inline RangeStats range_stats(std::vector<double> xs) {
  RangeStats s;
  s.actions = xs.size();
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  const auto m = xs.size() / 2;
  s.median_s = xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean_s = sum / static_cast<double>(xs.size());
  return s;
}

/// Writes qoe_cdf.csv, rebuffer_waste.csv, range_pdf.csv and range_summary.csv.
inline void emit_plots_data(const Report& rep, const fs::path& dir, double bin_s = 0.5, double range_max_s = 12.0) {
  using detail::fmt_double;
  fs::create_directories(dir);
  {
    auto os = detail::open_out(dir / "qoe_cdf.csv");
    os << "strategy,normalized_qoe,cdf\n";
    for (const auto& s : rep.strategies) {
      std::vector<double> q;
      for (const auto& r : rep.records)
        if (r.strategy == s) q.push_back(r.normalized_qoe);
      std::sort(q.begin(), q.end());
      if (q.empty()) continue;
      os << s << ',' << fmt_double(q.front()) << ",0\n";
      for (std::size_t i = 0; i < q.size(); ++i)
        os << s << ',' << fmt_double(q[i]) << ',' << fmt_double(static_cast<double>(i + 1) / q.size()) << '\n';
    }
  }
  {
    auto os = detail::open_out(dir / "rebuffer_waste.csv");
    os << "strategy,trace,rebuffer_s,waste_ratio\n";
    for (const auto& r : rep.records)
      os << r.strategy << ',' << r.trace << ',' << fmt_double(r.rebuffer_s) << ',' << fmt_double(r.waste_ratio)
         << '\n';
  }
  const auto by = ranges_by_tercile(rep);
  const auto bins = static_cast<std::size_t>(std::ceil(range_max_s / bin_s));
  auto pdf = detail::open_out(dir / "range_pdf.csv");
  pdf << "strategy,tercile,bin_lo_s,bin_hi_s,count,density\n";
  auto sum = detail::open_out(dir / "range_summary.csv");
  sum << "strategy,tercile,actions,median_range_s,mean_range_s\n";
  for (const auto& s : rep.strategies) {
    auto it = by.find(s);
    for (std::size_t t = 0; t < 3; ++t) {
      const std::vector<double> empty;
      const auto& xs = it == by.end() ? empty : it->second[t];
      std::vector<std::size_t> counts(bins, 0);
      for (double x : xs) counts[std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, x) / bin_s))]++;
      for (std::size_t b = 0; b < bins; ++b) {
        const double density = xs.empty() ? 0.0 : static_cast<double>(counts[b]) / (xs.size() * bin_s);
        pdf << s << ',' << t << ',' << fmt_double(b * bin_s) << ',' << fmt_double((b + 1) * bin_s) << ','
            << counts[b] << ',' << fmt_double(density) << '\n';
      }
      const auto st = range_stats(xs);
      sum << s << ',' << t << ',' << st.actions << ',' << fmt_double(st.median_s) << ',' << fmt_double(st.mean_s)
          << '\n';
    }
  }
}

// ---- synthetic experiment ----

/// Training settings written into a generated experiment config. Undiscounted returns
/// match the per-session QoE the policy is judged on.
struct SyntheticTraining {
  std::size_t episodes = 3000;
  std::size_t episodes_per_update = 8;
  double lr = 3e-4;
  double discount = 1.0;
  bool discount_per_second = false;
  double reward_scale = 0.05;
  double throughput_ref_mbps = 12.0;
  double rtt_ref_ms = 200.0;
};

/// Writes traces/, videos.csv, retention.csv, history.csv and experiment.json under `dir`.
inline SyntheticSuite write_synthetic_experiment(const fs::path& dir, const SyntheticConfig& cfg,
                                                 const SyntheticTraining& tr = {}) {
  fs::create_directories(dir / "traces");
  auto suite = generate_suite(cfg);
  for (const auto& t : suite.traces) write_trace(dir / "traces" / (t.name() + ".csv"), t);
  {
    auto os = detail::open_out(dir / "videos.csv");
    write_catalog(os, suite.catalog);
  }
  {
    auto os = detail::open_out(dir / "retention.csv");
    write_truth(os, suite.catalog);
  }
  {
    auto os = detail::open_out(dir / "history.csv");
    write_watch_records(os, suite.history);
  }
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["jobs"] = 1;
  j["strategies"] = {"deload", "deload_5s", "deload_1s", "naive_1s"};
  j["data"] = {{"traces", "traces/*.csv"},
               {"catalog", "videos.csv"},
               {"retention", "retention.csv"},
               {"watch_records", "history.csv"},
               {"param_table", "params.txt"}};
  j["checkpoints"] = {{"deload", "policy.ckpt"}};
  j["output"] = "report";
  j["users"] = cfg.users;
  j["sim"] = {{"videos_per_session", 20}};
  j["policy"] = {{"throughput_ref_mbps", tr.throughput_ref_mbps}, {"rtt_ref_ms", tr.rtt_ref_ms}};
  j["train"] = {{"episodes", tr.episodes},
                {"episodes_per_update", tr.episodes_per_update},
                {"lr", tr.lr},
                {"discount", tr.discount},
                {"discount_per_second", tr.discount_per_second},
                {"reward_scale", tr.reward_scale}};
  auto os = detail::open_out(dir / "experiment.json");
  os << j.dump(2) << '\n';
  return suite;
}

}  // namespace deload
