#pragma once

// Proximal policy optimization for the range policy: returns, clipped-surrogate loss with
// exact gradients, Adam updates, and the rollout/update training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "deload/error.hpp"
#include "deload/nn.hpp"
#include "deload/parallel.hpp"
#include "deload/policy.hpp"
#include "deload/rng.hpp"
#include "deload/sim.hpp"
#include "deload/strategies.hpp"

namespace deload {

struct Transition {
  std::vector<double> state;
  double raw = 0.0;  // pre-clamp action draw
  double log_prob = 0.0;
  double value_estimate = 0.0;
  double reward = 0.0;
  bool done = false;
  double elapsed_s = 1.0;  // time until the next decision
};

struct PpoConfig {
  double clip_eps = 0.2;
  int epochs = 4;
  double lr = 1e-6;
  double discount = 0.99;
  bool discount_per_second = false;  // discount^elapsed_s per step instead of discount
  bool use_gae = false;
  double gae_lambda = 0.95;
  std::size_t minibatch = 256;
  bool normalize_advantages = true;
  double max_grad_norm = 0.5;  // 0 disables clipping
  double reward_scale = 1.0;   // applied to rewards before computing returns
  std::string nan_dump_path;   // where to write the offending batch if a loss goes NaN
};

inline double step_discount(const Transition& t, double discount, bool per_second) {
  return per_second ? std::pow(discount, t.elapsed_s) : discount;
}

/// G_t = r_t + d_t * G_{t+1}, restarting after every `done`. d_t is `discount`, or
/// discount^elapsed_s when discounting by wall-clock time between decisions.
inline std::vector<double> discounted_returns(std::span<const Transition> batch, double discount,
                                              bool per_second = false) {
  std::vector<double> g(batch.size());
  double acc = 0.0;
  for (std::size_t i = batch.size(); i-- > 0;) {
    if (batch[i].done) acc = 0.0;
    acc = batch[i].reward + step_discount(batch[i], discount, per_second) * acc;
    g[i] = acc;
  }
  return g;
}

/// Generalized advantage estimates; value after a terminal step is zero.
inline std::vector<double> gae_advantages(std::span<const Transition> batch, double discount, double lambda,
                                          bool per_second = false) {
  std::vector<double> adv(batch.size());
  double acc = 0.0;
  for (std::size_t i = batch.size(); i-- > 0;) {
    const double next_v = (batch[i].done || i + 1 == batch.size()) ? 0.0 : batch[i + 1].value_estimate;
    if (batch[i].done) acc = 0.0;
    const double d = step_discount(batch[i], discount, per_second);
    const double delta = batch[i].reward + d * next_v - batch[i].value_estimate;
    acc = delta + d * lambda * acc;
    adv[i] = acc;
  }
  return adv;
}

struct PpoLoss {
  double actor = 0.0;   // negative clipped surrogate
  double critic = 0.0;  // 0.5 * mean squared return error
  double clip_fraction = 0.0;
};

/// Clipped-surrogate actor loss and squared-error critic loss over `idx` of `batch`, with
/// gradients accumulated into the flat buffers when given.
inline PpoLoss ppo_loss(const MlpNet& net, std::span<const Transition> batch, std::span<const double> advantages,
                        std::span<const double> returns, std::span<const std::size_t> idx, double clip_eps,
                        std::vector<double>* actor_grad = nullptr, std::vector<double>* critic_grad = nullptr) {
  PpoLoss loss;
  if (idx.empty()) return loss;
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  nn::ForwardCache ac, cc;
  std::size_t clipped = 0;
  for (std::size_t i : idx) {
    const auto& tr = batch[i];
    const auto a_out = net.actor.forward(tr.state, actor_grad ? &ac : nullptr);
    const auto c_out = net.critic.forward(tr.state, critic_grad ? &cc : nullptr);
    const double mu = std::tanh(a_out[0]);
    const double sigma = nn::softplus(a_out[1]);
    const double logp = gaussian_log_prob(tr.raw, mu, sigma);
    const double ratio = std::exp(logp - tr.log_prob);
    const double adv = advantages[i];
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped_term = ratio * adv, clipped_term = clipped_ratio * adv;
    const bool use_unclipped = unclipped_term <= clipped_term;
    if (!use_unclipped) ++clipped;
    loss.actor -= inv_n * std::min(unclipped_term, clipped_term);

    const double v = c_out[0];
    const double err = v - returns[i];
    loss.critic += 0.5 * inv_n * err * err;

    if (actor_grad && use_unclipped) {
      const double dlogp = -inv_n * adv * ratio;
      const double diff = tr.raw - mu;
      const double dmu = diff / (sigma * sigma);
      const double dsigma = diff * diff / (sigma * sigma * sigma) - 1.0 / sigma;
      const double g_out[2] = {dlogp * dmu * (1.0 - mu * mu), dlogp * dsigma * nn::sigmoid(a_out[1])};
      net.actor.backward(ac, g_out, *actor_grad);
    }
    if (critic_grad) {
      const double g_out[1] = {inv_n * err};
      net.critic.backward(cc, g_out, *critic_grad);
    }
  }
  loss.clip_fraction = static_cast<double>(clipped) * inv_n;
  return loss;
}

struct PpoStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double clip_fraction = 0.0;
  std::size_t minibatches = 0;
};

namespace detail {

inline void clip_grad_norm(std::vector<double>& g, double max_norm) {
  if (!(max_norm > 0.0)) return;
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm)
    for (auto& x : g) x *= max_norm / norm;
}

inline void dump_batch(const std::string& path, std::span<const Transition> batch) {
  if (path.empty()) return;
  std::ofstream os(path);
  os << "raw,log_prob,value,reward,done,state...\n";
  for (const auto& t : batch) {
    os << t.raw << ',' << t.log_prob << ',' << t.value_estimate << ',' << t.reward << ',' << t.done;
    for (double s : t.state) os << ',' << s;
    os << '\n';
  }
}

}  // namespace detail

/// Holds the network and optimizer state across updates. Deterministic for a fixed seed
/// and batch order.
class PpoUpdater {
 public:
  PpoUpdater(MlpNet net, PpoConfig cfg, std::uint64_t seed)
      : net_(std::move(net)), cfg_(std::move(cfg)), actor_opt_(net_.actor.param_count(), {cfg_.lr}),
        critic_opt_(net_.critic.param_count(), {cfg_.lr}), rng_(seed) {}

  [[nodiscard]] const MlpNet& net() const { return net_; }
  [[nodiscard]] const PpoConfig& config() const { return cfg_; }

  /// Advantages and return targets as used by update().
  [[nodiscard]] std::pair<std::vector<double>, std::vector<double>> targets(std::span<const Transition> batch) const {
    auto returns = discounted_returns(batch, cfg_.discount, cfg_.discount_per_second);
    std::vector<double> adv(batch.size());
    if (cfg_.use_gae) {
      adv = gae_advantages(batch, cfg_.discount, cfg_.gae_lambda, cfg_.discount_per_second);
      for (std::size_t i = 0; i < batch.size(); ++i) returns[i] = adv[i] + batch[i].value_estimate;
    } else {
      for (std::size_t i = 0; i < batch.size(); ++i) adv[i] = returns[i] - batch[i].value_estimate;
    }
    if (cfg_.normalize_advantages && adv.size() > 1) {
      const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
      double var = 0.0;
      for (double a : adv) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / static_cast<double>(adv.size()));
      for (auto& a : adv) a = sd > 1e-12 ? (a - mean) / sd : 0.0;
    }
    return {std::move(adv), std::move(returns)};
  }

  PpoStats update(std::span<const Transition> batch) {
    PpoStats stats;
    if (batch.empty()) return stats;
    const auto [adv, returns] = targets(batch);
    const MlpNet before = net_;
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t mb = std::max<std::size_t>(1, cfg_.minibatch);
    std::vector<double> ga(net_.actor.param_count()), gc(net_.critic.param_count());
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_() % i]);
      for (std::size_t start = 0; start < order.size(); start += mb) {
        const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(mb, order.size() - start));
        std::fill(ga.begin(), ga.end(), 0.0);
        std::fill(gc.begin(), gc.end(), 0.0);
        const auto loss = ppo_loss(net_, batch, adv, returns, idx, cfg_.clip_eps, &ga, &gc);
        if (!std::isfinite(loss.actor) || !std::isfinite(loss.critic)) {
          net_ = before;
          detail::dump_batch(cfg_.nan_dump_path, batch);
          throw RuntimeFault("ppo_update: non-finite loss; update aborted");
        }
        detail::clip_grad_norm(ga, cfg_.max_grad_norm);
        detail::clip_grad_norm(gc, cfg_.max_grad_norm);
        auto pa = net_.actor.flat_params();
        auto pc = net_.critic.flat_params();
        actor_opt_.step(pa, ga);
        critic_opt_.step(pc, gc);
        net_.actor.set_flat_params(pa);
        net_.critic.set_flat_params(pc);
        stats.actor_loss += loss.actor;
        stats.critic_loss += loss.critic;
        stats.clip_fraction += loss.clip_fraction;
        ++stats.minibatches;
      }
    }
    if (stats.minibatches) {
      const auto n = static_cast<double>(stats.minibatches);
      stats.actor_loss /= n, stats.critic_loss /= n, stats.clip_fraction /= n;
    }
    return stats;
  }

 private:
  MlpNet net_;
  PpoConfig cfg_;
  nn::Adam actor_opt_, critic_opt_;
  Rng rng_;
};

/// One-shot update with fresh optimizer state.
inline std::pair<MlpNet, PpoStats> ppo_update(std::span<const Transition> batch, const MlpNet& net,
                                              const PpoConfig& cfg, std::uint64_t seed = 0) {
  PpoUpdater u(net, cfg, seed);
  auto stats = u.update(batch);
  return {u.net(), stats};
}

// ---- training loop ---------------------------------------------------------------------

struct TrainConfig {
  std::size_t episodes = 0;
  std::size_t episodes_per_update = 8;
  StrategyKind mode = StrategyKind::deload;
  PpoConfig ppo;
  PolicyConfig policy;
  SimConfig sim;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
};

struct EpisodeStats {
  std::size_t episode = 0;
  double reward = 0.0;  // accumulated reward R of the trajectory
  double rebuffer_s = 0.0;
  double waste_ratio = 0.0;
  double mean_range_s = 0.0;
  std::size_t actions = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpisodeStats> curve;
};

/// Builds the session for a training episode. Must be deterministic in `episode`.
using EpisodeSource = std::function<SessionSpec(std::size_t episode)>;

inline std::vector<Transition> to_transitions(const SessionResult& r, double reward_scale) {
  std::vector<Transition> out;
  for (std::size_t k = 0; k < r.metrics.actions.size(); ++k) {
    const auto& step = r.policy_steps[k];
    if (!step) continue;
    const auto& acts = r.metrics.actions;
    const double next = k + 1 < acts.size() ? acts[k + 1].issued_at_s : r.metrics.session_s;
    out.push_back({step->features, step->raw, step->log_prob, step->value, acts[k].reward * reward_scale, false,
                   std::max(0.0, next - acts[k].issued_at_s)});
  }
  if (!out.empty()) out.back().done = true;
  return out;
}

/// Alternates stochastic rollouts (one trajectory per episode) with PPO updates.
inline TrainResult train(const TrainConfig& cfg, const EpisodeSource& source, std::optional<MlpNet> init = std::nullopt) {
  if (!uses_policy_net(cfg.mode)) throw ConfigError("train: mode must be deload or deload_no_wte");
  cfg.sim.validate();
  MlpNet start = init ? *init : make_net(cfg.policy, mix_seed(cfg.seed, 0));
  if (start.actor.input_dim() != state_dim(cfg.policy)) throw ConfigError("train: network input size mismatch");
  TrainResult result;
  PpoUpdater updater(std::move(start), cfg.ppo, mix_seed(cfg.seed, 2));
  const std::size_t per = std::max<std::size_t>(1, cfg.episodes_per_update);
  for (std::size_t first = 0; first < cfg.episodes; first += per) {
    const std::size_t count = std::min(per, cfg.episodes - first);
    std::vector<SessionResult> runs(count);
    const MlpNet& snapshot = updater.net();
    parallel_for(count, cfg.jobs, [&](std::size_t j) {
      const std::size_t ep = first + j;
      const auto spec = source(ep);
      auto strategy = make_strategy(cfg.mode, &snapshot, cfg.policy, mix_seed(cfg.seed, 100000 + ep), true);
      runs[j] = run_session(spec, *strategy, cfg.sim);
    });
    std::vector<Transition> batch;
    for (std::size_t j = 0; j < count; ++j) {
      const auto& m = runs[j].metrics;
      result.curve.push_back({first + j, m.qoe, m.total_rebuffer_s, m.waste_ratio(), m.mean_range_s(), m.actions.size()});
      auto tr = to_transitions(runs[j], cfg.ppo.reward_scale);
      batch.insert(batch.end(), std::make_move_iterator(tr.begin()), std::make_move_iterator(tr.end()));
    }
    updater.update(batch);
  }
  result.checkpoint = {cfg.mode, updater.net()};
  return result;
}

inline void write_learning_curve(std::ostream& os, const std::vector<EpisodeStats>& curve) {
  os << "episode,mean_reward,mean_rebuffer_s,waste_ratio,mean_range_s\n";
  for (const auto& e : curve)
    os << e.episode << ',' << detail::fmt_double(e.reward) << ',' << detail::fmt_double(e.rebuffer_s) << ','
       << detail::fmt_double(e.waste_ratio) << ',' << detail::fmt_double(e.mean_range_s) << '\n';
}

}  // namespace deload
