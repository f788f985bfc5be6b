#pragma once

// Range-duration policy: observation encoding, actor-critic network, action sampling,
// checkpoints, and the fixed-range baselines.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deload/error.hpp"
#include "deload/media.hpp"
#include "deload/nn.hpp"
#include "deload/rng.hpp"
#include "deload/weibull.hpp"

namespace deload {

enum class StrategyKind { deload, deload_no_wte, deload_1s, deload_5s, naive_1s };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::deload: return "deload";
    case StrategyKind::deload_no_wte: return "deload_no_wte";
    case StrategyKind::deload_1s: return "deload_1s";
    case StrategyKind::deload_5s: return "deload_5s";
    case StrategyKind::naive_1s: return "naive_1s";
  }
  return "?";
}

inline std::optional<StrategyKind> parse_strategy(std::string_view s) {
  for (auto k : {StrategyKind::deload, StrategyKind::deload_no_wte, StrategyKind::deload_1s, StrategyKind::deload_5s,
                 StrategyKind::naive_1s})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Learned strategies need a trained checkpoint.
inline bool uses_policy_net(StrategyKind k) { return k == StrategyKind::deload || k == StrategyKind::deload_no_wte; }

/// Fixed task length of the baselines, if any.
inline std::optional<double> fixed_range_s(StrategyKind k) {
  switch (k) {
    case StrategyKind::deload_1s:
    case StrategyKind::naive_1s: return 1.0;
    case StrategyKind::deload_5s: return 5.0;
    default: return std::nullopt;
  }
}

struct PolicyConfig {
  std::size_t k = 5;
  double e_high = 0.7;
  double e_low = 0.3;
  double range_min_s = 0.2;
  double range_max_s = 12.0;
  double duration_cap_s = 120.0;
  double throughput_ref_mbps = 100.0;
  double rtt_ref_ms = 1000.0;
  std::vector<std::size_t> hidden = {128, 64};
};

inline constexpr std::size_t kFeaturesPerVideo = 6;
inline constexpr std::size_t kGlobalFeatures = 3;

inline std::size_t state_dim(const PolicyConfig& cfg) { return cfg.k * kFeaturesPerVideo + kGlobalFeatures; }

/// Raw per-video observation [b, tau, d, t, h, l] before normalization.
using VideoTuple = std::array<double, kFeaturesPerVideo>;

struct PolicyState {
  std::vector<VideoTuple> raw;   // exactly k tuples, zero-padded
  std::vector<double> features;  // normalized, size state_dim
};

struct WatchEstimates {
  double high_s = 0.0;
  double low_s = 0.0;
};

inline WatchEstimates watch_estimates(const WeibullParams& p, const PolicyConfig& cfg) {
  return {weibull_quantile(p, cfg.e_high), weibull_quantile(p, cfg.e_low)};
}

/// Encodes the first k playlist videos plus network and selection context. With
/// `use_watch_estimates` false, the h/l entries are zeroed.
inline PolicyState build_state(const Playlist& playlist, std::size_t selected, double throughput_mbps, double rtt_ms,
                               const PolicyConfig& cfg, bool use_watch_estimates = true) {
  PolicyState s;
  s.raw.assign(cfg.k, VideoTuple{});
  s.features.assign(state_dim(cfg), 0.0);
  for (std::size_t i = 0; i < cfg.k && i < playlist.size(); ++i) {
    const auto& v = playlist[i];
    const double d = v.meta.duration_s;
    WatchEstimates est;
    if (use_watch_estimates) est = watch_estimates(v.watch_params, cfg);
    s.raw[i] = {v.chosen_bitrate_mbps, v.buffered_s, d, v.play_pos_s, est.high_s, est.low_s};

    double* f = s.features.data() + i * kFeaturesPerVideo;
    f[0] = std::clamp(v.chosen_bitrate_mbps / v.meta.highest_bitrate(), 0.0, 1.0);
    f[1] = std::clamp(v.buffered_s / d, 0.0, 1.0);
    f[2] = std::clamp(d / cfg.duration_cap_s, 0.0, 1.0);
    f[3] = std::clamp(v.play_pos_s / d, 0.0, 1.0);
    f[4] = std::clamp(est.high_s / d, 0.0, 1.0);
    f[5] = std::clamp(est.low_s / d, 0.0, 1.0);
  }
  double* g = s.features.data() + cfg.k * kFeaturesPerVideo;
  g[0] = std::clamp(throughput_mbps / cfg.throughput_ref_mbps, 0.0, 1.0);
  g[1] = std::clamp(rtt_ms / cfg.rtt_ref_ms, 0.0, 1.0);
  g[2] = std::clamp(static_cast<double>(selected) / static_cast<double>(cfg.k), 0.0, 1.0);
  return s;
}

/// Actor outputs [mean logit, stddev logit]; critic outputs the state value.
struct MlpNet {
  nn::Mlp actor;
  nn::Mlp critic;
  friend bool operator==(const MlpNet&, const MlpNet&) = default;
};

inline MlpNet make_net(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  MlpNet net{nn::Mlp(input_dim, hidden, 2), nn::Mlp(input_dim, hidden, 1)};
  Rng rng(seed);
  net.actor.init(rng);
  net.critic.init(rng, 1.0);
  return net;
}

inline MlpNet make_net(const PolicyConfig& cfg, std::uint64_t seed) { return make_net(state_dim(cfg), cfg.hidden, seed); }

struct ActionDistribution {
  double mean = 0.0;    // tanh-squashed, in (-1, 1)
  double stddev = 1.0;  // softplus, > 0
};

struct PolicyOutput {
  ActionDistribution dist;
  double value = 0.0;
};

inline ActionDistribution heads_to_distribution(std::span<const double> actor_out) {
  return {std::tanh(actor_out[0]), nn::softplus(actor_out[1])};
}

inline PolicyOutput policy_forward(const MlpNet& net, std::span<const double> features) {
  const auto a = net.actor.forward(features);
  const auto c = net.critic.forward(features);
  PolicyOutput out{heads_to_distribution(a), c[0]};
  if (!std::isfinite(out.dist.mean) || !std::isfinite(out.dist.stddev) || !std::isfinite(out.value))
    throw RuntimeFault("policy_forward: non-finite activation");
  return out;
}

inline PolicyOutput policy_forward(const MlpNet& net, const PolicyState& state) {
  return policy_forward(net, std::span<const double>(state.features));
}

inline double gaussian_log_prob(double x, double mean, double stddev) {
  const double z = (x - mean) / stddev;
  return -0.5 * z * z - std::log(stddev) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Affine map from [-1, 1] onto [range_min, range_max], clamping outside draws.
inline double map_action(double raw, const PolicyConfig& cfg) {
  const double c = std::clamp(raw, -1.0, 1.0);
  return cfg.range_min_s + (c + 1.0) * 0.5 * (cfg.range_max_s - cfg.range_min_s);
}

struct RangeAction {
  double duration_s = 0.0;
  double raw = 0.0;       // pre-clamp Gaussian draw
  double log_prob = 0.0;  // of `raw`
  double value_estimate = 0.0;
};

/// Draws raw ~ N(mean, stddev^2) and maps it to a duration. `stochastic` false returns
/// the mean action.
inline RangeAction sample_action(const ActionDistribution& dist, Rng& rng, const PolicyConfig& cfg,
                                 bool stochastic = true) {
  RangeAction a;
  if (stochastic) {
    a.raw = dist.mean + dist.stddev * standard_normal(rng);
  } else {
    a.raw = dist.mean;
  }
  a.log_prob = gaussian_log_prob(a.raw, dist.mean, dist.stddev);
  a.duration_s = map_action(a.raw, cfg);
  return a;
}

inline RangeAction sample_action(const ActionDistribution& dist, std::uint64_t seed, const PolicyConfig& cfg) {
  Rng rng(seed);
  return sample_action(dist, rng, cfg, true);
}

/// First video (in playlist order) with less than `threshold_s` buffered ahead that still
/// has media left to fetch.
inline std::optional<std::size_t> naive_select(const Playlist& playlist, double threshold_s) {
  for (std::size_t i = 0; i < playlist.size(); ++i)
    if (playlist[i].ahead_s() < threshold_s && !playlist[i].fully_buffered()) return i;
  return std::nullopt;
}

// ---- checkpoints ----------------------------------------------------------------------
//
// Text layout, whitespace separated:
//   deload-policy 1
//   mode <deload|deload_no_wte>
//   net actor <n_layers>
//   layer <in> <out>
//   <out rows of <in> weights, row-major>
//   <out biases>
//   ... repeated per layer, then the same block for "net critic".
// Numbers use shortest round-trip formatting.

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  StrategyKind mode = StrategyKind::deload;
  MlpNet net;
};

namespace detail {

inline void write_mlp(std::ostream& os, const char* name, const nn::Mlp& m) {
  os << "net " << name << ' ' << m.layers().size() << '\n';
  char buf[64];
  auto put = [&](double x) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    os.write(buf, p - buf);
  };
  for (const auto& l : m.layers()) {
    os << "layer " << l.in << ' ' << l.out << '\n';
    for (std::size_t r = 0; r < l.out; ++r) {
      for (std::size_t c = 0; c < l.in; ++c) {
        if (c) os << ' ';
        put(l.w(r, c));
      }
      os << '\n';
    }
    for (std::size_t r = 0; r < l.out; ++r) {
      if (r) os << ' ';
      put(l.bias[r]);
    }
    os << '\n';
  }
}

inline nn::Mlp read_mlp(std::istream& is, const std::string& expect) {
  std::string tag, name;
  std::size_t n_layers = 0;
  if (!(is >> tag >> name >> n_layers) || tag != "net" || name != expect || n_layers == 0 || n_layers > 64)
    throw DataError("checkpoint: expected 'net " + expect + "' block");
  std::vector<nn::Dense> layers;
  for (std::size_t i = 0; i < n_layers; ++i) {
    std::size_t in = 0, out = 0;
    if (!(is >> tag >> in >> out) || tag != "layer" || in == 0 || out == 0 || in > 1u << 16 || out > 1u << 16)
      throw DataError("checkpoint: bad layer header in " + expect);
    if (!layers.empty() && layers.back().out != in) throw DataError("checkpoint: layer shapes do not chain");
    nn::Dense d(in, out);
    std::string tok;
    auto next = [&]() {
      if (!(is >> tok)) throw DataError("checkpoint: truncated weights in " + expect);
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v))
        throw DataError("checkpoint: bad number '" + tok + "'");
      return v;
    };
    for (auto& w : d.weights) w = next();
    for (auto& b : d.bias) b = next();
    layers.push_back(std::move(d));
  }
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) hidden.push_back(layers[i].out);
  nn::Mlp m(layers.front().in, hidden, layers.back().out);
  m.layers() = std::move(layers);
  return m;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "deload-policy " << kCheckpointVersion << '\n' << "mode " << to_string(ck.mode) << '\n';
  detail::write_mlp(os, "actor", ck.net.actor);
  detail::write_mlp(os, "critic", ck.net.critic);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::string magic, tag, mode;
  int version = 0;
  if (!(is >> magic >> version) || magic != "deload-policy") throw DataError("checkpoint: missing header");
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  if (!(is >> tag >> mode) || tag != "mode") throw DataError("checkpoint: missing mode");
  Checkpoint ck;
  auto kind = parse_strategy(mode);
  if (!kind || !uses_policy_net(*kind)) throw DataError("checkpoint: bad mode '" + mode + "'");
  ck.mode = *kind;
  ck.net.actor = detail::read_mlp(is, "actor");
  ck.net.critic = detail::read_mlp(is, "critic");
  if (ck.net.actor.output_dim() != 2 || ck.net.critic.output_dim() != 1 ||
      ck.net.actor.input_dim() != ck.net.critic.input_dim())
    throw DataError("checkpoint: unexpected network shapes");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read checkpoint " + path);
  return read_checkpoint(is);
}

}  // namespace deload
